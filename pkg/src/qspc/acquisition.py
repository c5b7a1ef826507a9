"""Single-pixel camera simulation: raster and compressive acquisition.

Measurements are in the arm's intensity units.  ``photons_per_exposure``
photons correspond to the arm's full flux, which fixes the shot-noise
variance of a reading of flux ``s`` at ``s * flux / photons_per_exposure``.
Noise is Gaussian; photon numbers are macroscopic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .images import BeamImage, as_mask, line_mask
from .model import DARK_FLOOR, NoiseFigure, NoiseModel, NoLightError, TwinBeamPair, nrf
from .sampling import SensingMatrix, to_mask_pairs

MODES = ("classical", "quantum")

# DMD zero-order diffraction efficiency.
DMD_EFFICIENCY = 0.6


@dataclass(frozen=True)
class AcquisitionConfig:
    """Detector and noise settings.

    ``nrf`` pins the quantum-mode noise reduction factor for every exposure;
    when ``None`` it is computed per mask from the coherence-cell model.
    ``dark_noise_variance`` is in photon counts squared per exposure.
    """

    mode: str = "quantum"
    photons_per_exposure: float = 1e6
    dark_noise_variance: float = 0.0
    rng_seed: int = 0
    exposures_per_row: int = 1
    noise: bool = True
    nrf: float | None = None
    efficiency: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.photons_per_exposure > 0:
            raise ValueError("photons_per_exposure must be positive")
        if self.dark_noise_variance < 0:
            raise ValueError("dark_noise_variance must be nonnegative")
        if self.exposures_per_row < 1:
            raise ValueError("exposures_per_row must be at least 1")
        if self.nrf is not None and not self.nrf > 0:
            raise ValueError("nrf must be positive")
        if self.efficiency is not None and not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must lie in (0, 1]")


def _photon_scale(arm: BeamImage, cfg: AcquisitionConfig) -> float:
    flux = arm.flux()
    return cfg.photons_per_exposure / flux if flux > 0 else cfg.photons_per_exposure


def exposure_variance(flux, photons_per_unit, dark, nrf_linear=1.0):
    """Variance of one reading in flux units."""
    return (photons_per_unit * flux * nrf_linear + dark) / photons_per_unit ** 2


def single_pixel_measure(arm: BeamImage, mask, cfg: AcquisitionConfig, exposure_index: int = 0,
                         nrf_linear: float = 1.0) -> float:
    """Masked flux plus Gaussian shot and dark noise for one exposure."""
    m = as_mask(mask, arm.shape)
    signal = float((m * arm.intensity).sum())
    if not cfg.noise:
        return signal
    k = _photon_scale(arm, cfg)
    var = exposure_variance(signal, k, cfg.dark_noise_variance, nrf_linear)
    z = np.random.default_rng([cfg.rng_seed, exposure_index]).standard_normal()
    return signal + np.sqrt(var) * z


@dataclass
class MeasurementVector:
    """Differential readings ``y``, their noise variances, and the matrix they came from."""

    y: np.ndarray
    noise_budget: np.ndarray
    matrix_header: str = ""
    seed: int = 0
    mode: str = "classical"

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.noise_budget = np.asarray(self.noise_budget, dtype=float)
        if self.y.shape != self.noise_budget.shape or self.y.ndim != 1:
            raise ValueError("y and noise_budget must be 1-D and equally long")

    @property
    def m(self) -> int:
        return len(self.y)

    def epsilon(self) -> float:
        """Default l2 residual budget ``sqrt(sum(noise_budget))``."""
        return float(np.sqrt(self.noise_budget.sum()))


def dmd_plane_efficiency(pair: TwinBeamPair, variant: str = "standard",
                         dmd_efficiency: float = DMD_EFFICIENCY) -> float:
    """Per-arm transmission when both arms are masked by DMDs before the detector."""
    src = pair.source
    return src.system_efficiency(variant, src.mirror_baseline_db) * pair.overlap * dmd_efficiency


def _mask_nrf(pair, mask, gain, variant, efficiency):
    model = NoiseModel.for_masks(pair, mask, mask, efficiency, variant=variant, gain=gain)
    return nrf(model).nrf_linear


def compressive_acquire(pair: TwinBeamPair, matrix: SensingMatrix, model: NoiseModel | None,
                        cfg: AcquisitionConfig) -> MeasurementVector:
    """Differential compressive measurements ``y = A x + noise`` of the probe.

    Each row is two exposures through complementary masks.  In quantum mode
    the shot noise of each exposure is scaled by the NRF of that mask applied
    to both arms with balanced transmissions; classical mode stays at the SNL.
    Noise for row ``m``, exposure ``e`` is entry ``(m, e)`` of one standard
    normal array drawn from ``rng_seed``.
    """
    x = pair.probe.flat()
    if matrix.cols != x.size:
        raise ValueError(f"matrix has {matrix.cols} columns, probe has {x.size} pixels")
    a = matrix.as_float()
    pos = (a > 0).astype(float)
    neg = (a < 0).astype(float)
    flux_pos = pos @ x
    flux_neg = neg @ x
    signal = flux_pos - flux_neg
    if not cfg.noise:
        return MeasurementVector(signal, np.zeros_like(signal), matrix.header(), cfg.rng_seed, cfg.mode)
    k = _photon_scale(pair.probe, cfg)
    nrf_pos = np.ones(matrix.rows)
    nrf_neg = np.ones(matrix.rows)
    if cfg.mode == "quantum":
        if cfg.nrf is not None:
            nrf_pos[:] = cfg.nrf
            nrf_neg[:] = cfg.nrf
        else:
            gain = model.gain if model is not None else pair.source.gain
            variant = model.variant if model is not None else "standard"
            eff = cfg.efficiency if cfg.efficiency is not None else dmd_plane_efficiency(pair, variant)
            dims = pair.shape
            floor = DARK_FLOOR * x.sum()
            for i, mp in enumerate(to_mask_pairs(matrix, dims)):
                if flux_pos[i] > floor:
                    nrf_pos[i] = _mask_nrf(pair, mp.positive, gain, variant, eff)
                if flux_neg[i] > floor:
                    nrf_neg[i] = _mask_nrf(pair, mp.negative, gain, variant, eff)
    dark = cfg.dark_noise_variance
    var = (exposure_variance(flux_pos, k, dark, nrf_pos)
           + exposure_variance(flux_neg, k, dark, nrf_neg))
    e = cfg.exposures_per_row
    z = np.random.default_rng(cfg.rng_seed).standard_normal((matrix.rows, e))
    y = signal + np.sqrt(var) * z.mean(axis=1)
    return MeasurementVector(y, var / e, matrix.header(), cfg.rng_seed, cfg.mode)


def write_measurements(meas: MeasurementVector, path) -> None:
    """``MEAS M seed mode`` then ``index value variance`` per line (repr floats)."""
    lines = [f"MEAS {meas.m} {meas.seed} {meas.mode}"]
    lines += [f"{i} {float(v)!r} {float(s)!r}" for i, (v, s) in enumerate(zip(meas.y, meas.noise_budget))]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_measurements(path) -> MeasurementVector:
    lines = [ln for ln in Path(path).read_text(encoding="ascii").splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty measurement file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "MEAS":
        raise ValueError(f"{path}: bad header {lines[0]!r}, expected 'MEAS M seed mode'")
    m, seed, mode = int(head[1]), int(head[2]), head[3]
    if mode not in MODES:
        raise ValueError(f"{path}: unknown mode {mode!r}")
    if len(lines) - 1 != m:
        raise ValueError(f"{path}: header declares {m} entries, found {len(lines) - 1}")
    y = np.empty(m)
    var = np.empty(m)
    for k, ln in enumerate(lines[1:]):
        parts = ln.split()
        if len(parts) != 3 or int(parts[0]) != k:
            raise ValueError(f"{path}: malformed entry line {k + 1}: {ln!r}")
        y[k] = float(parts[1])
        var[k] = float(parts[2])
    return MeasurementVector(y, var, "", seed, mode)


@dataclass(frozen=True)
class LineShape:
    width: float
    orientation: str = "vertical"


@dataclass(frozen=True)
class PixelShape:
    size: int


@dataclass
class RasterResult:
    positions: list
    figures: list[NoiseFigure]
    image: BeamImage | None = None
    detected: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.positions) != len(self.figures):
            raise ValueError("one noise figure per position required")

    @property
    def nrf_db(self) -> np.ndarray:
        return np.array([f.value_db for f in self.figures])


def _pixel_mask(shape, pos, size):
    r, c = pos
    h, w = shape
    if r < 0 or c < 0 or r + size > h or c + size > w:
        raise ValueError(f"pixel at {pos} of size {size} leaves the frame")
    m = np.zeros(shape)
    m[r:r + size, c:c + size] = 1.0
    return m


def raster_scan(pair: TwinBeamPair, model: NoiseModel | None, shape, positions,
                conjugate_mask_policy: str = "fixed_centered", efficiency: float | None = None,
                dmd_efficiency: float = DMD_EFFICIENCY, skip_dark: bool = False) -> RasterResult:
    """Sweep a line or pixel mask over the probe and evaluate the twin-beam NRF.

    Line positions are offsets in pixels from the beam center; pixel positions
    are ``(row, col)`` top-left corners.  With ``fixed_centered`` the conjugate
    sees the same shape parked on its beam center; with ``mirrored`` it sees
    the probe mask at the corresponding location.  ``efficiency`` is the
    per-arm transmission including the DMDs; by default it is
    :func:`dmd_plane_efficiency`.  A position that sends no light to the
    detector raises :class:`NoLightError` unless ``skip_dark`` is set, in
    which case it is left out of ``positions``.
    """
    positions = list(positions)
    if not positions:
        raise ValueError("raster needs at least one position")
    if conjugate_mask_policy not in ("fixed_centered", "mirrored"):
        raise ValueError(f"unknown conjugate mask policy {conjugate_mask_policy!r}")
    gain = model.gain if model is not None else pair.source.gain
    variant = model.variant if model is not None else "standard"
    eff = dmd_plane_efficiency(pair, variant, dmd_efficiency) if efficiency is None else efficiency
    dims = pair.shape
    if isinstance(shape, LineShape):
        def make(pos):
            return line_mask(dims, pos, shape.width, shape.orientation, pair.center)
        centered = make(0.0)
        image = None
    elif isinstance(shape, PixelShape):
        s = shape.size
        def make(pos):
            return _pixel_mask(dims, pos, s)
        cy, cx = pair.center
        centered = _pixel_mask(dims, (int(round(cy - (s - 1) / 2)), int(round(cx - (s - 1) / 2))), s)
        image = np.zeros((dims[0] // s, dims[1] // s))
    else:
        raise TypeError("shape must be LineShape or PixelShape")
    kept, figures, detected = [], [], []
    for pos in positions:
        mp = make(pos)
        mc = centered if conjugate_mask_policy == "fixed_centered" else mp
        flux = float((mp * pair.probe.intensity).sum())
        if image is not None:
            r, c = pos
            image[r // shape.size, c // shape.size] += flux
        try:
            fig = nrf(NoiseModel.for_masks(pair, mp, mc, eff, variant=variant, gain=gain))
        except NoLightError:
            if not skip_dark:
                raise
            continue
        kept.append(pos)
        figures.append(fig)
        detected.append(flux)
    img = BeamImage(image, pair.probe.pitch * shape.size) if image is not None else None
    return RasterResult(kept, figures, img, detected)


def line_positions(width: float, span: float) -> list[float]:
    """Offsets stepping by one line width out to ``span`` pixels each side of center."""
    k = int(np.floor(span / width))
    return [float(i * width) for i in range(-k, k + 1)]


def rastered_image(arm: BeamImage, pixel_size: int, cfg: AcquisitionConfig) -> BeamImage:
    """Raster a ``pixel_size`` square over ``arm``; one exposure per position."""
    h, w = arm.shape
    if pixel_size < 1:
        raise ValueError("pixel_size must be at least 1")
    if pixel_size > h or pixel_size > w:
        raise ValueError(f"pixel size {pixel_size} exceeds image {h}x{w}")
    if h % pixel_size or w % pixel_size:
        raise ValueError(f"pixel size {pixel_size} does not divide image {h}x{w}")
    s = pixel_size
    blocks = arm.intensity.reshape(h // s, s, w // s, s).sum(axis=(1, 3))
    if cfg.noise:
        k = _photon_scale(arm, cfg)
        var = exposure_variance(blocks, k, cfg.dark_noise_variance)
        idx = np.arange(blocks.size).reshape(blocks.shape)
        z = np.array([np.random.default_rng([cfg.rng_seed, int(i)]).standard_normal() for i in idx.ravel()])
        blocks = blocks + np.sqrt(var) * z.reshape(blocks.shape)
        blocks = np.clip(blocks, 0.0, None)
    return BeamImage(blocks, arm.pitch * s)
