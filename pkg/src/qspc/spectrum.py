"""Synthetic spectrum-analyzer traces of intensity-difference noise."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import NoiseFigure


@dataclass(frozen=True)
class SpectrumSettings:
    """Analyzer sweep.  Frequencies in Hz, levels in dB relative to the SNL.

    Below ``band_start`` a technical-noise roll-up adds
    ``(10**(rollup_db/10) - 1) * (band_start/f)**2`` of linear excess noise;
    it is zero by default and never touches in-band points.
    """

    start: float = 50e3
    stop: float = 5e6
    points: int = 401
    rbw: float = 20e3
    vbw: float = 3e3
    band_start: float = 50e3
    band_stop: float = 5e6
    rollup_db: float = 0.0
    jitter_db: float = 0.1
    seed: int = 0
    sideband: float = 500e3

    def __post_init__(self):
        if not (self.start > 0 and self.stop > self.start):
            raise ValueError("frequency range must be positive and increasing")
        if self.points < 2:
            raise ValueError("need at least two points")
        if self.jitter_db < 0 or self.rollup_db < 0:
            raise ValueError("jitter and roll-up must be nonnegative")


@dataclass
class Spectrum:
    frequency: np.ndarray
    level_db: np.ndarray

    def mean_db(self) -> float:
        return float(self.level_db.mean())

    def level_at(self, f: float) -> float:
        return float(np.interp(f, self.frequency, self.level_db))


def simulate_spectrum(nf: NoiseFigure, settings: SpectrumSettings | None = None) -> Spectrum:
    s = settings or SpectrumSettings()
    freq = np.linspace(s.start, s.stop, s.points)
    linear = np.full(s.points, nf.nrf_linear)
    below = freq < s.band_start
    if s.rollup_db > 0 and below.any():
        excess = 10 ** (s.rollup_db / 10.0) - 1.0
        linear[below] += excess * (s.band_start / freq[below]) ** 2
    level = 10 * np.log10(linear)
    # in-band points carry the figure exactly, not via a log/exp round trip
    level[~below] = nf.value_db
    if s.jitter_db > 0:
        level = level + np.random.default_rng(s.seed).normal(0.0, s.jitter_db, s.points)
    return Spectrum(freq, level)


def snl_reference(settings: SpectrumSettings | None = None) -> Spectrum:
    """Shot-noise reference trace (a coherent beam of the same power)."""
    return simulate_spectrum(NoiseFigure(1.0), settings)
