import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import psnr_loops, tv_cvxpy, tv_loops

from qspc.acquisition import AcquisitionConfig, compressive_acquire
from qspc.images import DMD_PITCH_UM, BeamImage, letter_e
from qspc.model import SourceConfig, build_twin_pair
from qspc.reconstruct import (PSNR_CAP, ReconstructionProblem, gradient, gradient_adjoint, psnr,
                              reconstruct_ls, reconstruct_tv, tv_norm)
from qspc.sampling import sensing_matrix

NRF_31 = 10 ** (-0.31)


def square_phantom():
    x = np.zeros((8, 8))
    x[2:5, 3:6] = 1.0
    return x


@pytest.fixture(scope="module")
def e_truth():
    pair = build_twin_pair(BeamImage(letter_e((32, 32)), 4 * DMD_PITCH_UM), SourceConfig(), 3)
    return pair


def e_problem(pair, m, seed, noise=True):
    a = sensing_matrix(1024, 32, m, seed)
    cfg = AcquisitionConfig("quantum", 1e6, nrf=NRF_31, rng_seed=seed, noise=noise)
    meas = compressive_acquire(pair, a, None, cfg)
    return ReconstructionProblem(meas.y, a, (32, 32), meas.epsilon())


# -- tv_norm / psnr -------------------------------------------------------------

def test_tv_constant():
    assert tv_norm(np.full((5, 7), 3.2)) == 0.0


def test_tv_vertical_step():
    x = np.zeros((6, 9))
    x[:, 4:] = 2.5
    assert tv_norm(x) == 6 * 2.5


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 6), st.integers(2, 6))
def test_tv_brute_force(seed, h, w):
    x = np.random.default_rng(seed).normal(size=(h, w))
    assert math.isclose(tv_norm(x), tv_loops(x), rel_tol=1e-12)


def test_tv_accepts_beam_image():
    x = np.arange(12.0).reshape(3, 4)
    assert tv_norm(BeamImage(x)) == tv_norm(x)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_gradient_adjoint(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(5, 6))
    gy, gx = rng.normal(size=(4, 6)), rng.normal(size=(5, 5))
    dy, dx = gradient(x)
    assert math.isclose(np.sum(dy * gy) + np.sum(dx * gx), np.sum(x * gradient_adjoint(gy, gx)),
                        rel_tol=1e-10, abs_tol=1e-10)


def test_psnr_identical_is_cap():
    x = np.random.default_rng(0).random((4, 4))
    assert psnr(x, x) == PSNR_CAP


def test_psnr_zero_db():
    truth = np.zeros((4, 4))
    truth[0, 0] = 2.0
    est = truth + 2.0
    assert psnr(est, truth) == 0.0


def test_psnr_brute_force():
    rng = np.random.default_rng(3)
    est, truth = rng.random((6, 6)), rng.random((6, 6))
    assert math.isclose(psnr(est, truth), psnr_loops(est, truth), rel_tol=1e-12)


def test_psnr_errors():
    with pytest.raises(ValueError):
        psnr(np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        psnr(np.zeros((2, 3)), np.ones((2, 2)))


# -- problem validation ---------------------------------------------------------

@pytest.mark.parametrize("kw", [
    dict(dims=(3, 3)),
    dict(y=np.zeros(5)),
    dict(epsilon=-1.0),
    dict(epsilon=np.inf),
    dict(tolerance=0.0),
    dict(max_iterations=0),
])
def test_problem_rejects(kw):
    base = dict(y=np.zeros(4), A=np.eye(4), dims=(2, 2))
    base.update(kw)
    with pytest.raises(ValueError):
        ReconstructionProblem(**base)


def test_problem_accepts_sensing_matrix():
    a = sensing_matrix(16, 4, 5, 0)
    prob = ReconstructionProblem(np.zeros(5), a, (4, 4))
    assert prob.A.shape == (5, 16) and prob.A.dtype == float


# -- TV solver ------------------------------------------------------------------

def test_identity_recovers_y():
    y = np.random.default_rng(1).random(12)
    res = reconstruct_tv(ReconstructionProblem(y, np.eye(12), (4, 3)))
    assert res.converged
    assert res.x.shape == (3, 4)
    assert np.allclose(res.x.ravel(), y, atol=1e-12)


def test_square_phantom_exact_recovery():
    x = square_phantom()
    a = sensing_matrix(64, 8, 40, 0)
    res = reconstruct_tv(ReconstructionProblem(a.as_float() @ x.ravel(), a, (8, 8)))
    assert res.converged
    assert np.max(np.abs(res.x - x)) < 1e-3
    assert res.tv_value <= tv_norm(x) + 1e-5 * (1 + tv_norm(x))
    xo, vo = tv_cvxpy(a.as_float(), a.as_float() @ x.ravel(), (8, 8))
    assert np.max(np.abs(xo - x)) < 1e-3


@pytest.mark.parametrize("seed,m,eps", [(0, 24, 0.0), (1, 32, 0.0), (2, 40, 0.3), (3, 20, 0.5)])
def test_oracle_objective(seed, m, eps):
    rng = np.random.default_rng(seed)
    x = np.kron(rng.random((4, 4)), np.ones((2, 2)))
    a = sensing_matrix(64, 16, m, seed)
    y = a.as_float() @ x.ravel() + (rng.normal(scale=0.05, size=m) if eps else 0)
    res = reconstruct_tv(ReconstructionProblem(y, a, (8, 8), eps, 1e-7, 50_000))
    _, vo = tv_cvxpy(a.as_float(), y, (8, 8), eps)
    assert res.converged
    assert abs(res.tv_value - vo) <= 1e-4 * max(1.0, abs(vo))


def test_generic_path_matches_oracle():
    # non-orthogonal rows exercise the operator-splitting branch
    rng = np.random.default_rng(5)
    x = square_phantom()
    a = rng.normal(size=(30, 64))
    y = a @ x.ravel()
    res = reconstruct_tv(ReconstructionProblem(y, a, (8, 8), 0.01, 1e-5, 30_000))
    _, vo = tv_cvxpy(a, y, (8, 8), 0.01)
    assert res.converged
    assert res.residual_norm <= 0.01 + 1e-5
    assert abs(res.tv_value - vo) <= 1e-4 * max(1.0, vo)


def test_residual_recomputed(e_truth):
    prob = e_problem(e_truth, 300, 0)
    res = reconstruct_tv(prob)
    direct = np.linalg.norm(prob.A @ res.x.ravel() - prob.y)
    assert math.isclose(res.residual_norm, direct, rel_tol=1e-8)
    assert math.isclose(res.tv_value, tv_loops(res.x), rel_tol=1e-10)


def test_feasibility_and_dominance(e_truth):
    for seed in range(3):
        prob = e_problem(e_truth, 300, seed)
        res = reconstruct_tv(prob)
        assert res.converged
        assert res.residual_norm <= prob.epsilon + prob.tolerance
        truth = e_truth.probe.intensity
        if np.linalg.norm(prob.A @ truth.ravel() - prob.y) <= prob.epsilon:
            assert res.tv_value <= tv_norm(truth) + prob.tolerance * (1 + tv_norm(truth))


def test_e_phantom_psnr(e_truth):
    res = reconstruct_tv(e_problem(e_truth, 300, 0))
    assert psnr(res.x, e_truth.probe.intensity) >= 15.0


def test_tv_beats_ls(e_truth):
    prob = e_problem(e_truth, 300, 0, noise=False)
    truth = e_truth.probe.intensity
    assert psnr(reconstruct_ls(prob).x, truth) < psnr(reconstruct_tv(prob).x, truth)


def test_deterministic(e_truth):
    prob = e_problem(e_truth, 200, 4)
    a, b = reconstruct_tv(prob), reconstruct_tv(prob)
    assert np.array_equal(a.x, b.x) and a.iterations == b.iterations


def test_iteration_cap_reports_nonconverged(e_truth):
    prob = e_problem(e_truth, 300, 0)
    prob.max_iterations = 1
    res = reconstruct_tv(prob)
    assert res.iterations == 1 and not res.converged


def test_image_clips_negatives():
    y = np.array([-1.0, 2.0, 3.0, 4.0])
    res = reconstruct_tv(ReconstructionProblem(y, np.eye(4), (2, 2)))
    assert res.x.min() == -1.0
    assert res.image.intensity.min() == 0.0


@pytest.mark.slow
def test_psnr_trend_in_m(e_truth):
    truth = e_truth.probe.intensity
    means = []
    for m in (100, 200, 300, 400):
        vals = [psnr(reconstruct_tv(e_problem(e_truth, m, s)).x, truth) for s in range(20)]
        means.append(np.mean(vals))
    assert all(b >= a for a, b in zip(means, means[1:])), means


# -- least squares --------------------------------------------------------------

def test_ls_orthogonal_exact():
    x = np.random.default_rng(2).random(64)
    a = sensing_matrix(64, 8, 64, 3)
    res = reconstruct_ls(ReconstructionProblem(a.as_float() @ x, a, (8, 8)))
    assert np.allclose(res.x.ravel(), x, atol=1e-8)


def test_ls_beats_single_pixel_basis():
    rng = np.random.default_rng(4)
    a = sensing_matrix(64, 16, 20, 1).as_float()
    y = rng.normal(size=20)
    res = reconstruct_ls(ReconstructionProblem(y, a, (8, 8)))
    for j in range(64):
        col = a[:, j]
        coef = col @ y / (col @ col)
        assert res.residual_norm <= np.linalg.norm(y - coef * col) + 1e-9


def test_ls_minimum_norm():
    a = sensing_matrix(64, 16, 20, 1).as_float()
    y = a @ np.random.default_rng(0).random(64)
    x = reconstruct_ls(ReconstructionProblem(y, a, (8, 8))).x.ravel()
    # minimum-norm solution lies in the row space
    assert np.allclose(x, a.T @ np.linalg.solve(a @ a.T, y), atol=1e-9)
