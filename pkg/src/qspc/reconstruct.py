"""Total-variation reconstruction with an l2-ball data constraint.

Solves ``min ||grad x||_1  s.t.  ||A x - y||_2 <= epsilon`` (anisotropic TV,
forward differences, no wraparound) with the Chambolle-Pock primal-dual
iteration.  When the rows of ``A`` are mutually orthogonal with a common norm
(every scrambled block Hadamard selection, and the identity), the constraint
set has a closed-form projection and the data term is handled exactly as the
primal prox; otherwise ``A`` joins the gradient in the linear operator and the
ball is enforced through its dual.  Nonnegativity is not imposed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .images import BeamImage

PSNR_CAP = 99.0
GRAD_NORM_SQ = 8.0
# primal/dual step ratio; tau * sigma * ||K||^2 stays at 0.99^2 whatever its value
STEP_RATIO = 0.1


def gradient(x: np.ndarray):
    return np.diff(x, axis=0), np.diff(x, axis=1)


def gradient_adjoint(gy: np.ndarray, gx: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`gradient` (minus the discrete divergence)."""
    h, w = gy.shape[0] + 1, gx.shape[1] + 1
    out = np.zeros((h, w))
    out[:-1, :] -= gy
    out[1:, :] += gy
    out[:, :-1] -= gx
    out[:, 1:] += gx
    return out


def tv_norm(image) -> float:
    x = image.intensity if isinstance(image, BeamImage) else np.asarray(image, dtype=float)
    gy, gx = gradient(x)
    return float(np.abs(gy).sum() + np.abs(gx).sum())


def psnr(estimate, truth) -> float:
    """``10 log10(max(truth)^2 / MSE)``, capped at ``PSNR_CAP`` dB."""
    est = estimate.intensity if isinstance(estimate, BeamImage) else np.asarray(estimate, dtype=float)
    ref = truth.intensity if isinstance(truth, BeamImage) else np.asarray(truth, dtype=float)
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {ref.shape}")
    peak = float(ref.max())
    if not np.any(ref):
        raise ValueError("truth image is identically zero")
    mse = float(np.mean((est - ref) ** 2))
    if mse == 0:
        return PSNR_CAP
    if peak <= 0:
        raise ValueError("truth peak must be positive")
    return min(PSNR_CAP, 10 * math.log10(peak ** 2 / mse))


@dataclass
class ReconstructionProblem:
    """Measurements ``y`` of an image of ``dims = (width, height)`` through ``A``."""

    y: np.ndarray
    A: np.ndarray
    dims: tuple[int, int]
    epsilon: float = 0.0
    tolerance: float = 1e-5
    max_iterations: int = 5000

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        a = self.A.as_float() if hasattr(self.A, "as_float") else np.asarray(self.A, dtype=float)
        self.A = a
        w, h = self.dims
        if a.ndim != 2 or a.shape[1] != w * h:
            raise ValueError(f"A has shape {a.shape}, expected (M, {w * h})")
        if a.shape[0] != len(self.y):
            raise ValueError(f"A has {a.shape[0]} rows but y has {len(self.y)} entries")
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValueError("epsilon must be finite and nonnegative")
        if not (np.isfinite(self.tolerance) and self.tolerance > 0):
            raise ValueError("tolerance must be finite and positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")

    @property
    def shape(self):
        w, h = self.dims
        return (h, w)


@dataclass
class ReconstructionResult:
    x: np.ndarray
    tv_value: float
    residual_norm: float
    iterations: int
    converged: bool
    pitch: float = 1.0

    @property
    def image(self) -> BeamImage:
        """Estimate as a beam image; negative pixels are clipped to zero."""
        return BeamImage(np.clip(self.x, 0.0, None), self.pitch)


def _finish(problem, x, iterations, converged):
    x = x.reshape(problem.shape)
    residual = float(np.linalg.norm(problem.A @ x.ravel() - problem.y))
    return ReconstructionResult(x, tv_norm(x), residual, iterations, converged)


def _row_gram_scale(a: np.ndarray):
    """Common squared row norm if ``A A^T`` is a multiple of the identity."""
    gram = a @ a.T
    c = float(np.mean(np.diag(gram)))
    if c > 0 and np.allclose(gram, c * np.eye(len(gram)), rtol=0, atol=1e-9 * c):
        return c
    return None


def _steps(norm_sq):
    base = 0.99 / math.sqrt(norm_sq)
    return STEP_RATIO * base, base / STEP_RATIO


def _ball_project(v, center, radius):
    d = v - center
    n = np.linalg.norm(d)
    if n <= radius:
        return v
    return center + d * (radius / n)


def reconstruct_tv(problem: ReconstructionProblem) -> ReconstructionResult:
    """Minimize anisotropic TV subject to ``||A x - y|| <= epsilon``.

    Primal and dual variables start at zero and the steps are fixed,
    ``tau = r * 0.99/||K||`` and ``sigma = 0.99/(r ||K||)`` with
    ``r = STEP_RATIO``, so results are reproducible.  ``||K||`` combines the
    ``sqrt(8)`` gradient bound with the exact norm of ``A``.  The loop
    stops when the root-mean-square primal and dual residuals, measured on
    the image rescaled to unit peak, both drop below ``tolerance``.
    """
    a, y = problem.A, problem.y
    h, w = problem.shape
    c = _row_gram_scale(a)
    # work on a unit-peak problem; the scale only conditions the step sizes
    if c is not None:
        x_ls = a.T @ y / c
    else:
        x_ls = np.linalg.lstsq(a, y, rcond=None)[0]
    scale = float(np.max(np.abs(x_ls))) or 1.0
    ys, eps = y / scale, problem.epsilon / scale
    if c is not None:
        return _tv_projected(problem, a, ys, eps, c, scale)
    return _tv_generic(problem, a, ys, eps, scale)


def _tv_projected(problem, a, ys, eps, c, scale):
    h, w = problem.shape
    an = a / math.sqrt(c)
    yn = ys / math.sqrt(c)
    epsn = eps / math.sqrt(c)

    def project(x):
        u = an @ x
        return x + an.T @ (_ball_project(u, yn, epsn) - u)

    x = project(np.zeros(h * w))
    if epsn == 0 and an.shape[0] == an.shape[1]:
        # square orthogonal A with an equality constraint: one feasible point
        return _finish(problem, x * scale, 0, True)
    tau, sigma = _steps(GRAD_NORM_SQ)
    xbar = x.copy()
    py = np.zeros((h - 1, w))
    px = np.zeros((h, w - 1))
    rms = math.sqrt(h * w)
    converged = False
    it = 0
    for it in range(1, problem.max_iterations + 1):
        gy, gx = gradient(xbar.reshape(h, w))
        py_new = np.clip(py + sigma * gy, -1.0, 1.0)
        px_new = np.clip(px + sigma * gx, -1.0, 1.0)
        dpy, dpx = py - py_new, px - px_new
        x_new = project(x - tau * gradient_adjoint(py_new, px_new).ravel())
        dx = x - x_new
        primal = np.linalg.norm(dx / tau - gradient_adjoint(dpy, dpx).ravel())
        gdy, gdx = gradient(dx.reshape(h, w))
        dual = math.sqrt(np.sum((dpy / sigma - gdy) ** 2) + np.sum((dpx / sigma - gdx) ** 2))
        xbar = 2 * x_new - x
        x, py, px = x_new, py_new, px_new
        if primal / rms < problem.tolerance and dual / rms < problem.tolerance:
            converged = True
            break
    return _finish(problem, x * scale, it, converged)


def _tv_generic(problem, a, ys, eps, scale):
    h, w = problem.shape
    a_norm_sq = float(np.linalg.norm(a, 2)) ** 2
    tau, sigma = _steps(GRAD_NORM_SQ + a_norm_sq)
    x = np.zeros(h * w)
    xbar = x.copy()
    py = np.zeros((h - 1, w))
    px = np.zeros((h, w - 1))
    q = np.zeros(len(ys))
    rms = math.sqrt(h * w)
    converged = False
    it = 0
    for it in range(1, problem.max_iterations + 1):
        gy, gx = gradient(xbar.reshape(h, w))
        py_new = np.clip(py + sigma * gy, -1.0, 1.0)
        px_new = np.clip(px + sigma * gx, -1.0, 1.0)
        # prox of sigma * (<q, y> + eps ||q||)
        v = q + sigma * (a @ xbar) - sigma * ys
        nv = np.linalg.norm(v)
        q_new = v * max(0.0, 1.0 - sigma * eps / nv) if nv > 0 else v
        x_new = x - tau * (gradient_adjoint(py_new, px_new).ravel() + a.T @ q_new)
        dx = x - x_new
        dpy, dpx, dq = py - py_new, px - px_new, q - q_new
        primal = np.linalg.norm(dx / tau - gradient_adjoint(dpy, dpx).ravel() - a.T @ dq)
        gdy, gdx = gradient(dx.reshape(h, w))
        dual = math.sqrt(np.sum((dpy / sigma - gdy) ** 2) + np.sum((dpx / sigma - gdx) ** 2)
                         + np.sum((dq / sigma - a @ dx) ** 2))
        xbar = 2 * x_new - x
        x, py, px, q = x_new, py_new, px_new, q_new
        if primal / rms < problem.tolerance and dual / rms < problem.tolerance:
            feasible = np.linalg.norm(a @ x - ys) <= eps + problem.tolerance / scale
            converged = bool(feasible)
            if converged:
                break
    return _finish(problem, x * scale, it, converged)


def reconstruct_ls(problem: ReconstructionProblem) -> ReconstructionResult:
    """Minimum-norm least-squares solution of ``A x = y``."""
    x = np.linalg.lstsq(problem.A, problem.y, rcond=None)[0]
    return _finish(problem, x, 1, True)
