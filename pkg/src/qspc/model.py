"""Twin-beam source model and masked intensity-difference noise.

A seeded four-wave-mixing amplifier of gain ``G`` turns a seed of ``s`` photons
into ``G s`` probe and ``(G-1) s`` conjugate photons.  The transverse plane is
tiled into square coherence cells; cells are mutually independent and each
pair of corresponding probe/conjugate cells carries the full twin-beam
correlation.  Each arm has Fano factor ``F = 2G - 1``; the cross-covariance is
chosen so that symmetric loss ``eta`` gives

    NRF(eta) = 1 - eta + eta * ideal_nrf

with ``ideal_nrf = 1/(2G-1)`` (``standard``) or ``1/G`` (``paper_corrected``).
Detection of a masked cell is binomial thinning with the cell transmission.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .images import BeamImage, as_mask

VARIANTS = ("standard", "paper_corrected")

# Relative detected flux below which a measurement is treated as dark.
DARK_FLOOR = 1e-9

# Fixed chunking of Monte Carlo shots; each chunk draws from its own child
# stream of the seed, so results do not depend on the worker count.
MC_CHUNK = 8192
MC_MIN_SHOTS = 1000


class NoLightError(ValueError):
    """Raised when a mask configuration sends no light to the detector."""

    def __init__(self, msg="no light on detector"):
        super().__init__(msg)


@dataclass(frozen=True)
class SourceConfig:
    """Phenomenological parameters of the twin-beam source.

    ``cutoff_scale`` sets the pump-overlap low-pass filter: the field transfer
    function has its 1/e^2 intensity point at ``cutoff_scale / pump_waist``
    cycles per micrometer, so a wider pump gives a lower cutoff frequency.
    """

    gain: float = 4.0
    probe_waist: float = 450.0
    pump_waist: float = 1000.0
    max_squeezing_db: float = 4.5
    angular_beam_diameter: float = 2.4
    coherence_area_angle: float = 1.4
    mode_count: int = 70
    cutoff_scale: float = 8.0
    mirror_baseline_db: float = 4.0

    def __post_init__(self):
        if not self.gain > 1:
            raise ValueError("gain must exceed 1")
        if not (self.probe_waist > 0 and self.pump_waist > 0):
            raise ValueError("waists must be positive")
        if not (self.max_squeezing_db > 0 and self.mirror_baseline_db > 0):
            raise ValueError("squeezing ceilings must be positive")
        if self.angular_beam_diameter < self.coherence_area_angle:
            raise ValueError("angular beam diameter must be at least the coherence-area angle")
        if not self.cutoff_scale > 0:
            raise ValueError("cutoff_scale must be positive")

    @property
    def cutoff_frequency(self) -> float:
        """Low-pass 1/e^2 cutoff, cycles per micrometer."""
        return self.cutoff_scale / self.pump_waist

    @property
    def coherence_area_fraction(self) -> float:
        """Coherence-area size over total beam size, ``(theta_c / theta_beam)^2``."""
        return (self.coherence_area_angle / self.angular_beam_diameter) ** 2

    @property
    def coherence_areas_in_beam(self) -> float:
        return 1.0 / self.coherence_area_fraction

    def system_efficiency(self, variant="standard", ceiling_db=None) -> float:
        """Symmetric detection efficiency that caps full-beam squeezing at a ceiling.

        Solves ``1 - eta + eta * ideal_nrf = 10**(-ceiling_db/10)``.  The
        ceiling defaults to ``max_squeezing_db`` (direct detection); the
        DMD-plane experiments use ``mirror_baseline_db``, the level measured
        with plain mirrors where the DMDs go.
        """
        ceiling_db = self.max_squeezing_db if ceiling_db is None else ceiling_db
        ideal = ideal_nrf(self.gain, variant)
        target = 10 ** (-ceiling_db / 10.0)
        if target < ideal:
            raise ValueError(
                f"{ceiling_db} dB ceiling exceeds the lossless limit "
                f"{-10 * math.log10(ideal):.3f} dB at gain {self.gain}")
        return (1.0 - target) / (1.0 - ideal)


def _check_variant(variant):
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def ideal_nrf(gain: float, variant="standard") -> float:
    _check_variant(variant)
    if not gain > 1:
        raise ValueError("gain must exceed 1")
    return 1.0 / (2 * gain - 1) if variant == "standard" else 1.0 / gain


def lowpass_fourier(image: BeamImage, source: SourceConfig) -> BeamImage:
    """Filter a seed profile through the pump-probe overlap.

    The field amplitude ``sqrt(I)`` is multiplied in the spatial-frequency
    domain by ``exp(-(f/fc)^2)``; filtering the intensity itself would leave
    the DC power untouched and lose nothing.  Negative field ringing is clamped
    to zero before squaring, so output power never exceeds input power.
    """
    if image.flux() <= 0:
        raise ValueError("empty source profile")
    amp = np.sqrt(image.intensity)
    h, w = amp.shape
    fy = np.fft.fftfreq(h, d=image.pitch)
    fx = np.fft.fftfreq(w, d=image.pitch)
    f2 = fy[:, None] ** 2 + fx[None, :] ** 2
    transfer = np.exp(-f2 / source.cutoff_frequency ** 2)
    out = np.fft.ifft2(np.fft.fft2(amp) * transfer).real
    out = np.clip(out, 0.0, None) ** 2
    if image.total_power is not None:
        power = image.total_power * out.sum() / image.flux()
    else:
        power = None
    return BeamImage(out, image.pitch, power)


def overlap_fraction(image: BeamImage, source: SourceConfig) -> float:
    """Fraction of seed power surviving the pump-overlap filter."""
    return lowpass_fourier(image, source).flux() / image.flux()


@dataclass
class CoherenceGrid:
    """Square tiling of the beam plane into independent coherence cells.

    ``labels[y, x]`` is the cell id of each pixel; ``probe_flux`` and
    ``conjugate_flux`` are per-cell sums of the arm intensities.
    """

    labels: np.ndarray
    cell_edge: float
    origin: tuple[float, float]
    probe_flux: np.ndarray
    conjugate_flux: np.ndarray
    cell_centers: np.ndarray  # (n_cells, 2) as (y, x) in pixels

    @property
    def n_cells(self) -> int:
        return len(self.probe_flux)

    def pixels(self, cell_id: int):
        return np.nonzero(self.labels == cell_id)

    def cell_sums(self, values: np.ndarray) -> np.ndarray:
        return np.bincount(self.labels.ravel(), weights=np.ravel(values), minlength=self.n_cells)

    def cells(self):
        """Yield ``(cell_id, pixel_index, probe_flux, conjugate_flux)``."""
        for i in range(self.n_cells):
            yield i, self.pixels(i), self.probe_flux[i], self.conjugate_flux[i]

    def cells_in_disk(self, center, radius) -> int:
        d = np.hypot(self.cell_centers[:, 0] - center[0], self.cell_centers[:, 1] - center[1])
        return int(np.count_nonzero(d <= radius))


def tile_grid(shape, cell_edge, center=None):
    """Label pixels by square cell, aligned so ``center`` is a cell center.

    Returns ``(labels, origin, centers)``; only cells containing at least one
    pixel are kept and ids are compacted to ``0..n-1`` in row-major order.
    """
    h, w = shape
    cy, cx = ((h - 1) / 2.0, (w - 1) / 2.0) if center is None else center
    oy, ox = cy - cell_edge / 2.0, cx - cell_edge / 2.0
    ky = np.floor((np.arange(h) - oy) / cell_edge).astype(int)
    kx = np.floor((np.arange(w) - ox) / cell_edge).astype(int)
    pairs = np.stack(np.broadcast_arrays(ky[:, None], kx[None, :]), axis=-1).reshape(-1, 2)
    uniq, labels = np.unique(pairs, axis=0, return_inverse=True)
    centers = np.column_stack([cy + uniq[:, 0] * cell_edge, cx + uniq[:, 1] * cell_edge])
    return labels.reshape(shape), (oy, ox), centers


@dataclass
class TwinBeamPair:
    probe: BeamImage
    conjugate: BeamImage
    grid: CoherenceGrid
    source: SourceConfig
    overlap: float = 1.0
    center: tuple[float, float] = field(default=(0.0, 0.0))

    @property
    def shape(self):
        return self.probe.shape


def build_twin_pair(seed: BeamImage, source: SourceConfig | None = None,
                    cells_per_diameter: int = 3, center=None) -> TwinBeamPair:
    """Amplify a seed into a probe/conjugate pair and tile it into coherence cells.

    The probe is the low-passed seed times ``G``, the conjugate the same
    profile times ``G - 1``.  Cells are squares of edge
    ``2 * probe_waist / cells_per_diameter`` so that ``cells_per_diameter``
    cells span the 1/e^2 diameter.
    """
    source = source or SourceConfig()
    if cells_per_diameter < 1:
        raise ValueError("cells_per_diameter must be at least 1")
    edge = 2.0 * source.probe_waist / cells_per_diameter / seed.pitch
    if edge < 1.0:
        raise ValueError(
            f"{cells_per_diameter} cells per diameter is finer than the pixel grid "
            f"(cell edge {edge:.3g} px)")
    filtered = lowpass_fourier(seed, source)
    overlap = filtered.flux() / seed.flux()
    g = source.gain
    probe = filtered.scaled(g)
    conj = filtered.scaled(g - 1)
    h, w = seed.shape
    if center is None:
        center = ((h - 1) / 2.0, (w - 1) / 2.0)
    labels, origin, centers = tile_grid(seed.shape, edge, center)
    n = labels.max() + 1
    pf = np.bincount(labels.ravel(), weights=probe.flat(), minlength=n)
    cf = np.bincount(labels.ravel(), weights=conj.flat(), minlength=n)
    grid = CoherenceGrid(labels, edge, origin, pf, cf, centers)
    return TwinBeamPair(probe, conj, grid, source, overlap, tuple(center))


def mask_transmission(arm: BeamImage, grid: CoherenceGrid, mask):
    """Per-cell and total transmitted flux fractions of ``arm`` through ``mask``.

    Cells with no flux report transmission 0.
    """
    m = as_mask(mask, arm.shape)
    total = grid.cell_sums(arm.intensity)
    passed = grid.cell_sums(arm.intensity * m)
    t = np.divide(passed, total, out=np.zeros_like(total), where=total > 0)
    t = np.clip(t, 0.0, 1.0)
    flux = arm.flux()
    eta = float((arm.intensity * m).sum() / flux) if flux > 0 else 0.0
    return t, eta


@dataclass
class NoiseFigure:
    """Intensity-difference variance relative to the shot-noise limit."""

    nrf_linear: float
    shot_noise_reference: float = 1.0

    def __post_init__(self):
        if not self.nrf_linear > 0:
            raise ValueError("nrf_linear must be positive")

    @property
    def value_db(self) -> float:
        return 10.0 * math.log10(self.nrf_linear)

    @classmethod
    def from_db(cls, value_db, shot_noise_reference=1.0):
        return cls(10 ** (value_db / 10.0), shot_noise_reference)

    @property
    def squeezed(self) -> bool:
        return self.nrf_linear < 1.0


@dataclass
class NoiseModel:
    """Gain, closure variant and per-cell photon numbers/transmissions.

    ``probe_flux``/``conjugate_flux`` are mean photon numbers per cell before
    detection; ``t_probe``/``t_conj`` are the detection transmissions.
    """

    gain: float = 4.0
    variant: str = "standard"
    t_probe: np.ndarray = field(default_factory=lambda: np.ones(1))
    t_conj: np.ndarray = field(default_factory=lambda: np.ones(1))
    probe_flux: np.ndarray | None = None
    conjugate_flux: np.ndarray | None = None

    def __post_init__(self):
        _check_variant(self.variant)
        if not self.gain > 1:
            raise ValueError("gain must exceed 1")
        self.t_probe = np.atleast_1d(np.asarray(self.t_probe, dtype=float))
        self.t_conj = np.atleast_1d(np.asarray(self.t_conj, dtype=float))
        n = len(self.t_probe)
        if len(self.t_conj) != n:
            raise ValueError("probe and conjugate transmissions differ in length")
        if self.probe_flux is None:
            self.probe_flux = np.full(n, self.gain)
        self.probe_flux = np.atleast_1d(np.asarray(self.probe_flux, dtype=float))
        if self.conjugate_flux is None:
            self.conjugate_flux = self.probe_flux * (self.gain - 1) / self.gain
        self.conjugate_flux = np.atleast_1d(np.asarray(self.conjugate_flux, dtype=float))
        if len(self.probe_flux) != n or len(self.conjugate_flux) != n:
            raise ValueError("flux and transmission vectors differ in length")
        for name, t in (("t_probe", self.t_probe), ("t_conj", self.t_conj)):
            if np.any(t < 0) or np.any(t > 1):
                raise ValueError(f"{name} must lie in [0, 1]")
        if np.any(self.probe_flux < 0) or np.any(self.conjugate_flux < 0):
            raise ValueError("fluxes must be nonnegative")

    @property
    def fano_factor(self) -> float:
        return 2 * self.gain - 1

    @property
    def ideal_nrf(self) -> float:
        return ideal_nrf(self.gain, self.variant)

    def covariance(self) -> np.ndarray:
        """Per-cell probe/conjugate photon-number covariance."""
        total = self.probe_flux + self.conjugate_flux
        return 0.5 * (self.fano_factor - self.ideal_nrf) * total

    @classmethod
    def symmetric(cls, eta, gain=4.0, variant="standard"):
        """Single coherence cell with equal transmission on both arms."""
        return cls(gain, variant, [eta], [eta])

    @classmethod
    def for_masks(cls, pair: TwinBeamPair, mask_probe, mask_conj, efficiency=1.0,
                  conj_attenuation=1.0, variant="standard", gain=None):
        """Build the cell model for masks on both arms.

        ``efficiency`` multiplies both arms (system loss, DMD loss, mode
        overlap); ``conj_attenuation`` is an extra neutral-density factor on
        the conjugate alone.
        """
        tp, _ = mask_transmission(pair.probe, pair.grid, mask_probe)
        tc, _ = mask_transmission(pair.conjugate, pair.grid, mask_conj)
        gain = pair.source.gain if gain is None else gain
        return cls(gain, variant, tp * efficiency, tc * efficiency * conj_attenuation,
                   pair.grid.probe_flux, pair.grid.conjugate_flux)


def _variance_terms(model: NoiseModel):
    tp, tc = model.t_probe, model.t_conj
    npr, nc = model.probe_flux, model.conjugate_flux
    f = model.fano_factor
    var = (tp ** 2 * f * npr + tp * (1 - tp) * npr
           + tc ** 2 * f * nc + tc * (1 - tc) * nc
           - 2 * tp * tc * model.covariance())
    snl = tp * npr + tc * nc
    return var, snl


def nrf(model: NoiseModel) -> NoiseFigure:
    """Analytic noise reduction factor of the masked intensity difference."""
    var, snl = _variance_terms(model)
    snl_total = float(snl.sum())
    available = float((model.probe_flux + model.conjugate_flux).sum())
    if snl_total <= DARK_FLOOR * available or snl_total <= 0:
        raise NoLightError()
    return NoiseFigure(float(var.sum()) / snl_total, snl_total)


def predicted_squeezing_single_mode(eta: float, gain: float, variant="standard") -> float:
    """Single-spatial-mode squeezing ``10 log10(1 - eta + eta * ideal_nrf)`` in dB."""
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    if eta == 0:
        return 0.0
    return 10 * math.log10(1 - eta + eta * ideal_nrf(gain, variant))


def compose_loss(base: NoiseFigure, extra_transmission: float) -> NoiseFigure:
    """Apply a symmetric beam-splitter loss: ``NRF' = 1 - eta' (1 - NRF)``."""
    if not 0 < extra_transmission <= 1:
        raise ValueError("extra_transmission must lie in (0, 1]")
    # mixing with vacuum; written so that extra_transmission = 1 is exact
    out = extra_transmission * base.nrf_linear + (1.0 - extra_transmission)
    return NoiseFigure(out, base.shot_noise_reference * extra_transmission)


def _mc_chunk(args):
    child, size, npr, nc, l00, l10, l11, tp, tc = args
    rng = np.random.default_rng(child)
    z = rng.standard_normal((4, size, len(tp)))
    counts_p = npr + l00 * z[0]
    counts_c = nc + l10 * z[0] + l11 * z[1]
    det_p = tp * counts_p + np.sqrt(tp * (1 - tp) * npr) * z[2]
    det_c = tc * counts_c + np.sqrt(tc * (1 - tc) * nc) * z[3]
    return det_p.sum(axis=1) - det_c.sum(axis=1), det_p.sum(axis=1) + det_c.sum(axis=1)


def monte_carlo_nrf(model: NoiseModel, shots: int = 100_000, rng_seed: int = 0,
                    photons: float = 1e8, workers: int = 1):
    """Sample the masked intensity difference and estimate its NRF.

    Per-cell photon numbers are drawn from a bivariate Gaussian with the
    model's means, Fano-factor variances and covariance; detection is
    Gaussian-approximated binomial thinning.  ``photons`` is the total mean
    photon number of both arms before detection.

    Returns ``(NoiseFigure, std_error)``; the error is that of a Gaussian
    sample variance, ``nrf * sqrt(2 / (shots - 1))``.
    """
    if shots < MC_MIN_SHOTS:
        raise ValueError(f"shots must be at least {MC_MIN_SHOTS}, got {shots}")
    available = float((model.probe_flux + model.conjugate_flux).sum())
    if available <= 0:
        raise NoLightError()
    scale = photons / available
    seen = (model.t_probe > 0) | (model.t_conj > 0)
    npr = model.probe_flux[seen] * scale
    nc = model.conjugate_flux[seen] * scale
    tp, tc = model.t_probe[seen], model.t_conj[seen]
    cov = model.covariance()[seen] * scale
    f = model.fano_factor
    # 2x2 Cholesky per cell; empty cells give zeros
    l00 = np.sqrt(f * npr)
    l10 = np.divide(cov, l00, out=np.zeros_like(cov), where=l00 > 0)
    l11 = np.sqrt(np.clip(f * nc - l10 ** 2, 0.0, None))
    sizes = [MC_CHUNK] * (shots // MC_CHUNK)
    if shots % MC_CHUNK:
        sizes.append(shots % MC_CHUNK)
    children = np.random.SeedSequence(rng_seed).spawn(len(sizes))
    jobs = [(c, s, npr, nc, l00, l10, l11, tp, tc) for c, s in zip(children, sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(_mc_chunk, jobs))
    else:
        parts = [_mc_chunk(j) for j in jobs]
    diff = np.concatenate([p[0] for p in parts])
    total = np.concatenate([p[1] for p in parts])
    snl = float(total.mean())
    if snl <= DARK_FLOOR * photons:
        raise NoLightError()
    value = float(diff.var(ddof=1)) / snl
    std_error = value * math.sqrt(2.0 / (shots - 1))
    return NoiseFigure(value, snl / scale), std_error
