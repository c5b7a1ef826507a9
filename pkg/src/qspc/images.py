"""Beam images and the test patterns used throughout the workbench.

Arrays are stored ``(height, width)``; flattening is always row-major.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# DMD micromirror pitch in micrometers.
DMD_PITCH_UM = 13.68


@dataclass
class BeamImage:
    """Nonnegative 2-D intensity map on a square pixel grid.

    Parameters
    ----------
    intensity : ndarray, shape (height, width)
        Power per pixel in arbitrary units.
    pitch : float
        Micrometers per pixel.
    total_power : float, optional
        Physical tag in milliwatts; not used by the arithmetic.
    meta : dict
        Free-form provenance (PGM maxval/format when read from disk).
    """

    intensity: np.ndarray
    pitch: float = DMD_PITCH_UM
    total_power: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.intensity, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"intensity must be a nonempty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("intensity contains non-finite values")
        if np.any(arr < 0):
            raise ValueError("intensity must be nonnegative")
        if not self.pitch > 0:
            raise ValueError("pitch must be positive")
        self.intensity = arr

    @property
    def height(self) -> int:
        return self.intensity.shape[0]

    @property
    def width(self) -> int:
        return self.intensity.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.intensity.shape

    @property
    def size(self) -> int:
        return self.intensity.size

    def flux(self) -> float:
        return float(self.intensity.sum())

    def flat(self) -> np.ndarray:
        return self.intensity.ravel()

    def scaled(self, factor: float) -> "BeamImage":
        power = None if self.total_power is None else self.total_power * factor
        return BeamImage(self.intensity * factor, self.pitch, power)

    def with_intensity(self, intensity: np.ndarray) -> "BeamImage":
        return BeamImage(intensity, self.pitch, self.total_power)


def as_mask(mask, shape=None) -> np.ndarray:
    """Validate a binary mask and return it as a float array of 0/1."""
    m = np.asarray(mask)
    if shape is not None and m.shape != tuple(shape):
        raise ValueError(f"mask shape {m.shape} does not match image shape {tuple(shape)}")
    if not np.all((m == 0) | (m == 1)):
        raise ValueError("mask entries must be 0 or 1")
    return m.astype(float)


def _centered_grid(shape, center=None):
    h, w = shape
    cy, cx = ((h - 1) / 2.0, (w - 1) / 2.0) if center is None else center
    yy, xx = np.mgrid[0:h, 0:w]
    return yy - cy, xx - cx


def gaussian_beam(shape=(256, 256), waist_um=450.0, pitch=DMD_PITCH_UM, power=1.0,
                  center=None) -> BeamImage:
    """TEM00 intensity profile ``exp(-2 r^2 / w^2)`` normalized to ``power``."""
    yy, xx = _centered_grid(shape, center)
    r2 = (xx ** 2 + yy ** 2) * pitch ** 2
    inten = np.exp(-2.0 * r2 / waist_um ** 2)
    inten *= power / inten.sum()
    return BeamImage(inten, pitch, power)


def uniform_image(shape=(128, 128), pitch=DMD_PITCH_UM, value=1.0) -> BeamImage:
    return BeamImage(np.full(shape, float(value)), pitch)


def checkerboard(shape=(128, 128), square=1) -> np.ndarray:
    """Binary checkerboard with ``square``-pixel squares."""
    yy, xx = np.indices(shape)
    return (((yy // square) + (xx // square)) % 2 == 0).astype(float)


def happy_face(shape=(128, 128), diameter_frac=0.9) -> np.ndarray:
    """Bright disk with dark eyes and a dark smile arc."""
    h, w = shape
    yy, xx = _centered_grid(shape)
    r = diameter_frac * min(h, w) / 2.0
    face = (xx ** 2 + yy ** 2) <= r ** 2
    eye_r = 0.12 * r
    for sx in (-1, 1):
        ex, ey = sx * 0.35 * r, -0.3 * r
        face &= ((xx - ex) ** 2 + (yy - ey) ** 2) > eye_r ** 2
    rr = np.hypot(xx, yy - 0.05 * r)
    ang = np.arctan2(yy - 0.05 * r, xx)
    smile = (np.abs(rr - 0.55 * r) <= 0.07 * r) & (ang > np.deg2rad(25)) & (ang < np.deg2rad(155))
    face &= ~smile
    return face.astype(float)


def letter_e(shape=(32, 32)) -> np.ndarray:
    """Block capital 'E' centered in the frame."""
    h, w = shape
    img = np.zeros(shape)
    top, bot = int(round(0.19 * h)), int(round(0.81 * h))
    left, right = int(round(0.25 * w)), int(round(0.75 * w))
    stroke = max(1, int(round(0.125 * h)))
    img[top:bot, left:left + stroke] = 1.0
    img[top:top + stroke, left:right] = 1.0
    img[bot - stroke:bot, left:right] = 1.0
    mid = (top + bot) // 2
    img[mid - stroke // 2:mid - stroke // 2 + stroke, left:right - stroke // 2] = 1.0
    return img


def cross(shape=(128, 128), angle_deg=0.0, arm_halfwidth=6.0, arm_length=None) -> np.ndarray:
    """Plus-shaped mask rotated by ``angle_deg`` about the frame center."""
    yy, xx = _centered_grid(shape)
    if arm_length is None:
        arm_length = 0.45 * min(shape)
    t = np.deg2rad(angle_deg)
    # rounding keeps right-angle rotations exact at the arm edges
    u = np.round(xx * np.cos(t) + yy * np.sin(t), 9)
    v = np.round(-xx * np.sin(t) + yy * np.cos(t), 9)
    bar1 = (np.abs(v) <= arm_halfwidth) & (np.abs(u) <= arm_length)
    bar2 = (np.abs(u) <= arm_halfwidth) & (np.abs(v) <= arm_length)
    return (bar1 | bar2).astype(float)


def line_mask(shape, offset, width, orientation="vertical", center=None) -> np.ndarray:
    """Stripe of ``width`` pixels whose center sits ``offset`` pixels from ``center``.

    Pixels whose centers lie within half a width of the stripe axis are on.
    Raises if any part of the stripe would fall outside the frame.
    """
    h, w = shape
    cy, cx = ((h - 1) / 2.0, (w - 1) / 2.0) if center is None else center
    if orientation == "vertical":
        axis_len, c = w, cx
    elif orientation == "horizontal":
        axis_len, c = h, cy
    else:
        raise ValueError(f"unknown orientation {orientation!r}")
    pos = c + offset
    lo, hi = pos - width / 2.0, pos + width / 2.0
    if lo < -0.5 or hi > axis_len - 0.5:
        raise ValueError(f"line at offset {offset} with width {width} leaves the frame")
    coord = np.arange(axis_len)
    on = (coord >= lo) & (coord < hi)
    if not on.any():
        raise ValueError("line is narrower than one pixel")
    if orientation == "vertical":
        return np.broadcast_to(on[None, :], shape).astype(float)
    return np.broadcast_to(on[:, None], shape).astype(float)


def threshold_mask(image: BeamImage, level=np.exp(-2.0)) -> np.ndarray:
    """Pixels at or above ``level`` times the peak intensity."""
    arr = image.intensity
    return (arr >= level * arr.max()).astype(float)
