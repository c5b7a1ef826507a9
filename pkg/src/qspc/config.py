"""Run configuration: INI file plus ``section.key=value`` overrides.

Unknown sections and keys are rejected so a typo cannot silently fall back
to a default.  With no file at all the defaults reproduce the documented
calibration (gain 4, 4.5 dB ceiling, 3 cells per diameter, B=32, M=300).
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .acquisition import DMD_EFFICIENCY, AcquisitionConfig
from .images import DMD_PITCH_UM
from .model import VARIANTS, SourceConfig
from .spectrum import SpectrumSettings

ENV_VAR = "QSPC_CONFIG"

AUTO = "auto"


class ConfigError(ValueError):
    """Invalid configuration (unknown key, bad value, failed invariant)."""


def _bool(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _auto(conv):
    def parse(text):
        return None if text.strip().lower() in (AUTO, "model", "") else conv(text)
    return parse


def _str(text):
    return text.strip()


# section -> key -> (parser, default text)
SCHEMA = {
    "source": {
        "gain": (float, "4.0"),
        "probe_waist": (float, "450.0"),
        "pump_waist": (float, "1000.0"),
        "max_squeezing_db": (float, "4.5"),
        "angular_beam_diameter": (float, "2.4"),
        "coherence_area_angle": (float, "1.4"),
        "mode_count": (int, "70"),
        "cutoff_scale": (float, "8.0"),
        "mirror_baseline_db": (float, "4.0"),
    },
    "noise": {
        "variant": (_str, "standard"),
        "cells_per_diameter": (int, "3"),
        "dmd_efficiency": (float, repr(DMD_EFFICIENCY)),
        "conj_attenuation": (float, "1.0"),
    },
    "beam": {
        "width": (int, "256"),
        "height": (int, "256"),
        "pitch": (float, repr(DMD_PITCH_UM)),
    },
    "acquisition": {
        "mode": (_str, "quantum"),
        "photons_per_exposure": (float, "1e6"),
        "dark_noise_variance": (float, "0.0"),
        "seed": (int, "0"),
        "exposures_per_row": (int, "1"),
        "noise": (_bool, "true"),
        # fixed quantum noise figure in dB; "model" evaluates each mask pair
        "nrf_db": (_auto(float), "-3.1"),
    },
    "sampling": {
        "width": (int, "32"),
        "height": (int, "32"),
        "block": (int, "32"),
        "m": (int, "300"),
        "seed": (int, "0"),
        "window": (_auto(int), AUTO),
        "pitch": (float, repr(4 * DMD_PITCH_UM)),
    },
    "solver": {
        "epsilon": (_auto(float), AUTO),
        "tolerance": (float, "1e-5"),
        "max_iterations": (int, "5000"),
    },
    "raster": {
        "shape": (_str, "line"),
        "width": (_auto(float), AUTO),
        "span": (_auto(float), AUTO),
        "orientation": (_str, "vertical"),
        "policy": (_str, "fixed_centered"),
        "pixel_size": (int, "16"),
    },
    "sweep": {
        "angle_step": (float, "5.0"),
        "arm_halfwidth": (float, "6.0"),
        "settle_ms": (float, "10.0"),
    },
    "spectrum": {
        "start": (float, "50e3"),
        "stop": (float, "5e6"),
        "points": (int, "401"),
        "rbw": (float, "20e3"),
        "vbw": (float, "3e3"),
        "band_start": (float, "50e3"),
        "band_stop": (float, "5e6"),
        "rollup_db": (float, "0.0"),
        "jitter_db": (float, "0.1"),
        "seed": (int, "0"),
        "nrf_db": (_auto(float), "model"),
    },
    "paths": {
        "image": (_str, ""),
        "matrix": (_str, ""),
        "measurements": (_str, ""),
        "out_dir": (_str, "."),
    },
}


@dataclass(frozen=True)
class SamplingConfig:
    width: int = 32
    height: int = 32
    block: int = 32
    m: int = 300
    seed: int = 0
    window: int | None = None
    pitch: float = 4 * DMD_PITCH_UM

    @property
    def n(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float | None = None
    tolerance: float = 1e-5
    max_iterations: int = 5000


@dataclass
class RunConfig:
    source: SourceConfig
    variant: str
    cells_per_diameter: int
    dmd_efficiency: float
    conj_attenuation: float
    beam: dict
    acquisition: AcquisitionConfig
    sampling: SamplingConfig
    solver: SolverConfig
    raster: dict
    sweep: dict
    spectrum: SpectrumSettings
    spectrum_nrf_db: float | None
    paths: dict
    raw: dict = field(default_factory=dict, repr=False)


def _read_layers(path, overrides):
    values = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    if path:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for sec in parser.sections():
            if sec not in SCHEMA:
                raise ConfigError(f"{path}: unknown section [{sec}]")
            for key, text in parser.items(sec):
                if key not in SCHEMA[sec]:
                    raise ConfigError(f"{path}: unknown key {key!r} in [{sec}]")
                values[sec][key] = text
    for item in overrides:
        name, sep, text = item.partition("=")
        sec, dot, key = name.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key = key.lower()
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ConfigError(f"unknown config key {sec}.{key}")
        values[sec][key] = text
    return values


def _typed(values):
    out = {}
    for sec, keys in SCHEMA.items():
        out[sec] = {}
        for key, (conv, _) in keys.items():
            try:
                out[sec][key] = conv(values[sec][key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {sec}.{key}: {exc}") from None
    return out


def load_config(path=None, overrides=()) -> RunConfig:
    """Build a :class:`RunConfig` from ``path`` (or ``$QSPC_CONFIG``) and overrides."""
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    t = _typed(_read_layers(path, overrides))
    try:
        variant = t["noise"]["variant"].replace("-", "_")
        if variant not in VARIANTS:
            raise ValueError(f"noise.variant must be one of {VARIANTS}")
        acq = t["acquisition"]
        nrf_db = acq["nrf_db"]
        acquisition = AcquisitionConfig(
            mode=acq["mode"], photons_per_exposure=acq["photons_per_exposure"],
            dark_noise_variance=acq["dark_noise_variance"], rng_seed=acq["seed"],
            exposures_per_row=acq["exposures_per_row"], noise=acq["noise"],
            nrf=None if nrf_db is None else 10 ** (nrf_db / 10.0))
        sampling = SamplingConfig(**t["sampling"])
        if sampling.width < 1 or sampling.height < 1 or not sampling.pitch > 0:
            raise ValueError("sampling frame must be nonempty with positive pitch")
        solver = SolverConfig(**t["solver"])
        if solver.epsilon is not None and solver.epsilon < 0:
            raise ValueError("solver.epsilon must be nonnegative")
        if not solver.tolerance > 0 or solver.max_iterations < 1:
            raise ValueError("solver.tolerance must be positive and max_iterations at least 1")
        spec = dict(t["spectrum"])
        spectrum_nrf_db = spec.pop("nrf_db")
        if t["noise"]["cells_per_diameter"] < 1:
            raise ValueError("noise.cells_per_diameter must be at least 1")
        if not 0 < t["noise"]["dmd_efficiency"] <= 1 or not 0 < t["noise"]["conj_attenuation"] <= 1:
            raise ValueError("noise efficiencies must lie in (0, 1]")
        if t["raster"]["shape"] not in ("line", "pixel"):
            raise ValueError("raster.shape must be line or pixel")
        if t["raster"]["policy"] not in ("fixed_centered", "mirrored"):
            raise ValueError("raster.policy must be fixed_centered or mirrored")
        if not t["sweep"]["angle_step"] > 0:
            raise ValueError("sweep.angle_step must be positive")
        return RunConfig(
            source=SourceConfig(**t["source"]),
            variant=variant,
            cells_per_diameter=t["noise"]["cells_per_diameter"],
            dmd_efficiency=t["noise"]["dmd_efficiency"],
            conj_attenuation=t["noise"]["conj_attenuation"],
            beam=t["beam"],
            acquisition=acquisition,
            sampling=sampling,
            solver=solver,
            raster=t["raster"],
            sweep=t["sweep"],
            spectrum=SpectrumSettings(**spec),
            spectrum_nrf_db=spectrum_nrf_db,
            paths=t["paths"],
            raw=t,
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def dump_defaults() -> str:
    """Default configuration as INI text."""
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        lines += [f"{k} = {d}" for k, (_, d) in keys.items()]
        lines.append("")
    return "\n".join(lines)


def resolve_path(cfg: RunConfig, value, key):
    """Command-line path if given, else ``[paths] key``; ``None`` when both are empty."""
    p = value or cfg.paths.get(key)
    return Path(p) if p else None
