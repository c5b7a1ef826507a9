"""Command-line entry point ``qspc``.

Exit codes: 0 success, 1 runtime or data error, 2 usage or configuration
error.  CSV numbers use nine significant digits and a fixed column order.
"""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import acquisition as acq
from .config import ConfigError, RunConfig, load_config, resolve_path
from .images import BeamImage, as_mask, cross, gaussian_beam, letter_e, line_mask, threshold_mask
from .model import (NoiseFigure, NoiseModel, NoLightError, TwinBeamPair, build_twin_pair,
                    mask_transmission, nrf, predicted_squeezing_single_mode)
from .pgm import PGMError, read_pgm, write_pgm
from .reconstruct import ReconstructionProblem, psnr, reconstruct_ls, reconstruct_tv
from .sampling import read_matrix, sensing_matrix, write_matrix
from .spectrum import simulate_spectrum

PGM_PEAK = 65535


class UsageError(Exception):
    pass


def fmt(x) -> str:
    return format(float(x), ".9g")


def _write_csv(path, header, rows):
    text = ",".join(header) + "\n" + "".join(",".join(r) + "\n" for r in rows)
    if str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="ascii")


def _out(cfg: RunConfig, args, name) -> Path:
    d = Path(args.out_dir or cfg.paths["out_dir"] or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d / name


# -- experiment plumbing -------------------------------------------------

def _gaussian_pair(cfg: RunConfig) -> TwinBeamPair:
    b = cfg.beam
    seed = gaussian_beam((b["height"], b["width"]), cfg.source.probe_waist, b["pitch"])
    return build_twin_pair(seed, cfg.source, cfg.cells_per_diameter)


def _sweep_row(cfg: RunConfig, name, mask, plane, detector_pair):
    """``(name, eta, predicted_db, model_db)`` for one mask."""
    src, variant = cfg.source, cfg.variant
    if plane == "seed":
        # the mask is the seed profile; detection takes the whole beam
        seed = BeamImage(mask, cfg.beam["pitch"])
        if seed.flux() <= 0:
            raise NoLightError()
        pair = build_twin_pair(seed, src, cfg.cells_per_diameter)
        eta = src.system_efficiency(variant) * pair.overlap
        ones = np.ones(pair.shape)
        model = NoiseModel.for_masks(pair, ones, ones, eta, cfg.conj_attenuation, variant)
    else:
        pair = detector_pair
        base = acq.dmd_plane_efficiency(pair, variant, cfg.dmd_efficiency)
        _, t = mask_transmission(pair.probe, pair.grid, mask)
        eta = base * t
        model = NoiseModel.for_masks(pair, mask, mask, base, cfg.conj_attenuation, variant)
    fig = nrf(model)
    return name, eta, predicted_squeezing_single_mode(eta, src.gain, variant), fig.value_db


def _angles(text, step):
    for sep in ("..", ":"):
        if sep in text:
            parts = text.split(sep)
            break
    else:
        parts = [text]
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"bad angle range {text!r}; use START..STOP or START:STOP:STEP") from None
    if len(vals) == 1:
        return vals
    if len(vals) == 3:
        step = vals[2]
    if len(vals) not in (2, 3) or step <= 0 or vals[1] < vals[0]:
        raise UsageError(f"bad angle range {text!r}")
    n = int(np.floor((vals[1] - vals[0]) / step + 1e-9))
    return [vals[0] + i * step for i in range(n + 1)]


def cmd_mask_sweep(cfg: RunConfig, args) -> int:
    if not args.masks and args.cross_angles is None:
        raise UsageError("mask-sweep needs at least one mask file or --cross-angles")
    shape = (cfg.beam["height"], cfg.beam["width"])
    det = _gaussian_pair(cfg) if args.plane == "detector" else None
    jobs = []
    for path in args.masks:
        jobs.append((Path(path).name, path))
    if args.cross_angles is not None:
        for a in _angles(args.cross_angles, cfg.sweep["angle_step"]):
            jobs.append((f"cross@{fmt(a)}", cross(shape, a, cfg.sweep["arm_halfwidth"])))
    rows, failures = [], 0
    for name, src in jobs:
        try:
            if isinstance(src, np.ndarray):
                mask = src
            else:
                img = read_pgm(src)
                mask = (img.intensity > 0).astype(float)
            if det is not None:
                mask = as_mask(mask, det.shape)
            rows.append(_sweep_row(cfg, name, mask, args.plane, det))
        except (OSError, ValueError) as exc:
            failures += 1
            msg = exc.strerror if isinstance(exc, OSError) and exc.strerror else str(exc)
            print(f"qspc: {name}: {msg}", file=sys.stderr)
    if rows:
        out = args.output or _out(cfg, args, "mask_sweep.csv")
        _write_csv(out, ["mask", "eta", "predicted_db", "model_db"],
                   [[n, fmt(e), fmt(p), fmt(m)] for n, e, p, m in rows])
    if args.cross_angles is not None:
        print(f"cross sweep: {cfg.sweep['settle_ms']:g} ms settling per frame (metadata only)",
              file=sys.stderr)
    return 1 if failures == len(jobs) else 0


def _line_geometry(cfg):
    w = cfg.source.probe_waist / cfg.beam["pitch"]
    width = cfg.raster["width"] if cfg.raster["width"] is not None else w / 2
    span = cfg.raster["span"] if cfg.raster["span"] is not None else 2 * w
    return width, span


def cmd_raster(cfg: RunConfig, args) -> int:
    pair = _gaussian_pair(cfg)
    model = NoiseModel(cfg.source.gain, cfg.variant)
    r = cfg.raster
    if r["shape"] == "line":
        width, span = _line_geometry(cfg)
        if args.positions is not None:
            try:
                positions = [float(p) for p in args.positions.split(",") if p.strip()]
            except ValueError:
                raise UsageError(f"bad --positions {args.positions!r}") from None
        else:
            positions = acq.line_positions(width, span)
        if not positions:
            raise UsageError("raster needs at least one position")
        shape = acq.LineShape(width, r["orientation"])
    else:
        s = r["pixel_size"]
        h, w = pair.shape
        if s < 1 or h % s or w % s:
            raise UsageError(f"raster.pixel_size {s} must divide the {h}x{w} beam frame")
        positions = [(i, j) for i in range(0, h, s) for j in range(0, w, s)]
        shape = acq.PixelShape(s)
    res = acq.raster_scan(pair, model, shape, positions, r["policy"],
                          dmd_efficiency=cfg.dmd_efficiency, skip_dark=r["shape"] == "pixel")

    def label(p):
        return fmt(p) if np.isscalar(p) else f"{p[0]}:{p[1]}"

    out = args.output or _out(cfg, args, "raster.csv")
    _write_csv(out, ["position", "nrf_db"], [[label(p), fmt(f.value_db)] for p, f in zip(res.positions, res.figures)])
    if r["shape"] == "pixel":
        img = acq.rastered_image(pair.probe, r["pixel_size"], cfg.acquisition)
        write_pgm(img, _out(cfg, args, "raster.pgm"), "P5", PGM_PEAK)
    else:
        write_pgm(_line_overlay(pair, shape), _out(cfg, args, "raster.pgm"), "P5", 255)
    best = res.positions[int(np.argmin(res.nrf_db))]
    print(f"raster: {len(res.positions)} positions, minimum {fmt(res.nrf_db.min())} dB at {label(best)}",
          file=sys.stderr)
    return 0


def _line_overlay(pair, shape) -> BeamImage:
    """Thresholded probe profile with the centered line at half level."""
    prof = threshold_mask(pair.probe)
    line = line_mask(pair.shape, 0.0, shape.width, shape.orientation, pair.center)
    return BeamImage(np.maximum(prof, 0.5 * line) * 255, pair.probe.pitch)


def _matrix_from_config(cfg: RunConfig):
    s = cfg.sampling
    return sensing_matrix(s.n, s.block, s.m, s.seed, s.window)


def cmd_matrix(cfg: RunConfig, args) -> int:
    a = _matrix_from_config(cfg)
    out = args.output or _out(cfg, args, "matrix.sbh")
    write_matrix(a, out)
    print(a.header())
    return 0


def _scaled_pair(pair: TwinBeamPair, factor: float) -> TwinBeamPair:
    grid = replace(pair.grid, probe_flux=pair.grid.probe_flux * factor,
                   conjugate_flux=pair.grid.conjugate_flux * factor)
    return replace(pair, probe=pair.probe.scaled(factor), conjugate=pair.conjugate.scaled(factor), grid=grid)


def _phantom_pair(cfg: RunConfig, image_path, phantom):
    """Twin pair for a compressive run, in 16-bit levels of the probe peak."""
    s = cfg.sampling
    if image_path:
        seed = read_pgm(image_path, s.pitch)
    elif phantom == "e":
        seed = BeamImage(letter_e((s.height, s.width)), s.pitch)
    else:
        raise UsageError("give an image file or --phantom e")
    pair = build_twin_pair(seed, cfg.source, cfg.cells_per_diameter)
    return _scaled_pair(pair, PGM_PEAK / pair.probe.intensity.max())


def _acquire(cfg: RunConfig, pair, matrix):
    h, w = pair.shape
    if matrix.cols != h * w:
        raise ValueError(f"matrix has N={matrix.cols} columns but the image is {w}x{h} = {h * w} pixels")
    a_cfg = cfg.acquisition
    if a_cfg.mode == "quantum" and a_cfg.nrf is None:
        a_cfg = replace(a_cfg, efficiency=acq.dmd_plane_efficiency(pair, cfg.variant, cfg.dmd_efficiency))
    model = NoiseModel(cfg.source.gain, cfg.variant)
    return acq.compressive_acquire(pair, matrix, model, a_cfg)


def cmd_acquire(cfg: RunConfig, args) -> int:
    pair = _phantom_pair(cfg, resolve_path(cfg, args.image, "image"), args.phantom)
    mpath = resolve_path(cfg, args.matrix, "matrix")
    matrix = read_matrix(mpath) if mpath else _matrix_from_config(cfg)
    meas = _acquire(cfg, pair, matrix)
    acq.write_measurements(meas, args.output or _out(cfg, args, "measurements.txt"))
    if not mpath:
        write_matrix(matrix, _out(cfg, args, "matrix.sbh"))
    write_pgm(pair.probe, _out(cfg, args, "truth.pgm"), "P5", PGM_PEAK)
    print(matrix.header())
    return 0


def _solve(cfg: RunConfig, meas, matrix, method="tv"):
    s, sv = cfg.sampling, cfg.solver
    eps = sv.epsilon if sv.epsilon is not None else meas.epsilon()
    prob = ReconstructionProblem(meas.y, matrix, (s.width, s.height), eps, sv.tolerance, sv.max_iterations)
    res = reconstruct_tv(prob) if method == "tv" else reconstruct_ls(prob)
    res.pitch = s.pitch
    return res


def _emit_reconstruction(cfg, args, res, truth):
    value = psnr(res.x, truth) if truth is not None else float("nan")
    write_pgm(res.image, _out(cfg, args, "reconstruction.pgm"), "P5", PGM_PEAK)
    line = (f"TVREC {fmt(res.tv_value)} {fmt(res.residual_norm)} {res.iterations} "
            f"{str(res.converged).lower()} {fmt(value)}\n")
    _out(cfg, args, "reconstruction.tvrec").write_text(line, encoding="ascii")
    sys.stdout.write(line)
    return value


def cmd_reconstruct(cfg: RunConfig, args) -> int:
    mpath = resolve_path(cfg, args.matrix, "matrix")
    if mpath is None:
        raise ValueError("no sensing matrix given (--matrix or [paths] matrix)")
    matrix = read_matrix(mpath)
    meas = acq.read_measurements(args.measurements)
    if meas.m != matrix.rows:
        raise ValueError(f"{args.measurements} has {meas.m} entries but the matrix has {matrix.rows} rows")
    s = cfg.sampling
    if matrix.cols != s.n:
        raise ValueError(f"matrix has N={matrix.cols} columns, config frame is {s.width}x{s.height}")
    truth = read_pgm(args.truth).intensity if args.truth else None
    res = _solve(cfg, meas, matrix, args.method)
    _emit_reconstruction(cfg, args, res, truth)
    return 0 if res.converged else 1


def cmd_spectrum(cfg: RunConfig, args) -> int:
    if cfg.spectrum_nrf_db is not None:
        nf = NoiseFigure.from_db(cfg.spectrum_nrf_db)
    else:
        eta = cfg.source.system_efficiency(cfg.variant)
        nf = NoiseFigure.from_db(predicted_squeezing_single_mode(eta, cfg.source.gain, cfg.variant))
    settings = cfg.spectrum
    sp = simulate_spectrum(nf, settings)
    out = args.output or _out(cfg, args, "spectrum.csv")
    _write_csv(out, ["frequency_hz", "level_db"], [[fmt(f), fmt(v)] for f, v in zip(sp.frequency, sp.level_db)])
    print(f"spectrum: {len(sp.frequency)} points, mean {fmt(sp.mean_db())} dB, "
          f"{fmt(settings.sideband)} Hz {fmt(sp.level_at(settings.sideband))} dB", file=sys.stderr)
    return 0


def cmd_pipeline(cfg: RunConfig, args) -> int:
    t0 = time.perf_counter()
    pair = _phantom_pair(cfg, resolve_path(cfg, args.image, "image"), args.phantom or "e")
    matrix = _matrix_from_config(cfg)
    meas = _acquire(cfg, pair, matrix)
    write_matrix(matrix, _out(cfg, args, "matrix.sbh"))
    acq.write_measurements(meas, _out(cfg, args, "measurements.txt"))
    write_pgm(pair.probe, _out(cfg, args, "truth.pgm"), "P5", PGM_PEAK)
    res = _solve(cfg, meas, matrix, "tv")
    _emit_reconstruction(cfg, args, res, pair.probe.intensity)
    ls = _solve(cfg, meas, matrix, "ls")
    print(f"least-squares psnr {fmt(psnr(ls.x, pair.probe.intensity))} dB; "
          f"elapsed {time.perf_counter() - t0:.2f} s")
    return 0 if res.converged else 1


# -- argument parsing ----------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file (default: $QSPC_CONFIG)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration value; repeatable")
    common.add_argument("--seed", type=int, help="seed for matrix, noise and spectrum jitter")
    common.add_argument("--mode", choices=acq.MODES)
    common.add_argument("--variant", choices=("standard", "paper-corrected"))
    common.add_argument("--out-dir", help="directory for output files")

    p = argparse.ArgumentParser(prog="qspc", description="Twin-beam single-pixel imaging workbench.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("mask-sweep", parents=[common], help="noise figures for a set of masks")
    s.add_argument("masks", nargs="*", help="PGM mask files (nonzero pixels pass)")
    s.add_argument("--plane", choices=("seed", "detector"), default="seed",
                   help="seed: mask shapes the seed beam; detector: mask on both DMDs")
    s.add_argument("--cross-angles", metavar="START..STOP",
                   help="add rotated cross masks, e.g. 0..90 or 0:90:15")
    s.add_argument("-o", "--output", help="CSV path, '-' for stdout")
    s.set_defaults(func=cmd_mask_sweep)

    s = sub.add_parser("raster", parents=[common], help="line or pixel raster over the twin beams")
    s.add_argument("--positions", help="comma-separated line offsets in pixels")
    s.add_argument("-o", "--output", help="CSV path, '-' for stdout")
    s.set_defaults(func=cmd_raster)

    s = sub.add_parser("matrix", parents=[common], help="write a scrambled block Hadamard matrix")
    s.add_argument("-o", "--output", help="matrix file path")
    s.set_defaults(func=cmd_matrix)

    s = sub.add_parser("acquire", parents=[common], help="compressive measurements of an image")
    s.add_argument("image", nargs="?", help="seed image (PGM)")
    s.add_argument("--phantom", choices=("e",), help="use a built-in phantom instead of a file")
    s.add_argument("--matrix", help="existing matrix file (default: generate from config)")
    s.add_argument("-o", "--output", help="measurement file path")
    s.set_defaults(func=cmd_acquire)

    s = sub.add_parser("reconstruct", parents=[common], help="TV or least-squares reconstruction")
    s.add_argument("measurements", help="measurement file")
    s.add_argument("--matrix", help="matrix file the measurements were taken with")
    s.add_argument("--truth", help="reference PGM for PSNR")
    s.add_argument("--method", choices=("tv", "ls"), default="tv")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("spectrum", parents=[common], help="synthetic analyzer trace")
    s.add_argument("-o", "--output", help="CSV path, '-' for stdout")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("pipeline", parents=[common], help="phantom -> acquire -> reconstruct")
    s.add_argument("image", nargs="?", help="seed image (PGM); default is the 'E' phantom")
    s.add_argument("--phantom", choices=("e",))
    s.set_defaults(func=cmd_pipeline)
    return p


def _config_from_args(args) -> RunConfig:
    overrides = list(args.set)
    if args.seed is not None:
        overrides += [f"acquisition.seed={args.seed}", f"sampling.seed={args.seed}",
                      f"spectrum.seed={args.seed}"]
    if args.mode:
        overrides.append(f"acquisition.mode={args.mode}")
    if args.variant:
        overrides.append(f"noise.variant={args.variant.replace('-', '_')}")
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
        return args.func(cfg, args)
    except (ConfigError, UsageError) as exc:
        print(f"qspc: error: {exc}", file=sys.stderr)
        return 2
    except PGMError as exc:
        print(f"qspc: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"qspc: error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"qspc: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
