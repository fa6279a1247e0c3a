import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lrgd import (
    Ball,
    DegenerateSample,
    Objective,
    SampleList,
    Subspace,
    check_local_bound,
    combine,
    CompositeSpec,
    estimate_rank,
    hessian_estimate,
    local_hessian_subspace,
    make_quadratic,
    random_ridge,
    verify_approx_rank,
)
from lrgd.rank import normalized_energies


def samples(p, n=30, seed=0):
    return np.random.default_rng(seed).uniform(-2, 2, (n, p))


# ------------------------------------------------------------------ spectra

@pytest.mark.parametrize("p,r,profile", [(5, 1, "quadratic"), (10, 3, "logcosh"), (8, 2, "nonconvex"), (6, 6, "quadratic")])
def test_estimate_rank_of_ridges(p, r, profile):
    f = random_ridge(p, r, profile, seed=1)
    est = estimate_rank(f, samples(p))
    assert est.r == r
    np.testing.assert_allclose(normalized_energies(est.spectrum).sum(), 1.0)


@pytest.mark.parametrize("alpha", [0.5, 2.0, 100.0])
def test_estimate_rank_scale_invariant(alpha):
    f = random_ridge(9, 3, "nonconvex", seed=2)
    g = combine(CompositeSpec("scale", [f], alpha=alpha))
    X = samples(9)
    a, b = estimate_rank(f, X), estimate_rank(g, X)
    assert a.r == b.r == 3
    np.testing.assert_allclose(a.spectrum, b.spectrum, atol=1e-12)


def test_estimate_rank_all_zero_gradients():
    f = make_quadratic(np.eye(2))
    with pytest.raises(DegenerateSample):
        estimate_rank(f, np.zeros((3, 2)))


# ------------------------------------------------------------------ certificates

def test_verify_true_subspace_slack_is_minus_eps():
    f = random_ridge(6, 2, "quadratic", seed=0)
    S = Subspace(f.active_basis)
    c = verify_approx_rank(f, S, Ball((0.0,) * 6, 3.0), 0.0, 0.01, n_samples=200)
    assert c.passed
    np.testing.assert_allclose(c.worst_residual_slack, -0.01, atol=1e-12)


def test_verify_orthogonal_subspace_fails():
    f = random_ridge(6, 1, "quadratic", seed=0)
    Q = f.active_basis
    other = np.linalg.svd(Q.T)[2][1:2].T
    c = verify_approx_rank(f, Subspace(other), Ball((0.0,) * 6, 3.0), 0.5, 0.01, n_samples=200)
    assert not c.passed


def test_verify_exact_rank_needs_positive_eps_for_strongly_convex():
    # a strongly convex function is not approximately rank < p for tiny eps
    f = make_quadratic(np.diag([3.0, 2.0, 1.0]))
    S = Subspace(np.eye(3)[:, :2])
    c = verify_approx_rank(f, S, Ball((0.0,) * 3, 1.0), 0.1, 1e-12, n_samples=500)
    assert not c.passed


@given(st.floats(0.0, 0.9), st.floats(0.01, 1.0), st.floats(0.0, 0.09), st.floats(0.0, 1.0))
def test_verify_monotone_in_eta_and_eps(eta, eps, deta, deps):
    f = make_quadratic(np.eye(2))
    S = Subspace(np.array([[1.0], [0.0]]))
    region = Ball((0.0, 0.0), 1.0)
    a = verify_approx_rank(f, S, region, eta, eps, n_samples=300)
    b = verify_approx_rank(f, S, region, eta + deta, eps + deps, n_samples=300)
    assert b.worst_residual_slack <= a.worst_residual_slack + 1e-15
    if a.passed:
        assert b.passed


def test_certificate_json_round_trip():
    f = make_quadratic(np.eye(2))
    S = Subspace(np.array([[1.0], [0.0]]))
    c = verify_approx_rank(f, S, SampleList(((0.5, 0.5), (1.0, 0.0))), 0.2, 0.5, seed=3)
    rec = json.loads(c.to_json())
    assert rec["r"] == 1 and rec["region"]["kind"] == "samples" and rec["n_samples"] == 2
    assert rec["passed"] is c.passed
    np.testing.assert_allclose(rec["worst_residual_slack"], c.worst_residual_slack)


def test_verify_rejects_bad_parameters():
    f = make_quadratic(np.eye(2))
    S = Subspace(np.array([[1.0], [0.0]]))
    with pytest.raises(ValueError):
        verify_approx_rank(f, S, Ball((0.0, 0.0), 1.0), 1.0, 0.1)
    with pytest.raises(ValueError):
        verify_approx_rank(f, S, Ball((0.0, 0.0), 1.0), 0.1, 0.0)
    with pytest.raises(ValueError):
        Ball((0.0,), 0.0)


def test_ball_samples_inside():
    pts = Ball((1.0, -1.0, 2.0), 0.5).sample(2000, np.random.default_rng(0))
    d = np.linalg.norm(pts - [1.0, -1.0, 2.0], axis=1)
    assert d.max() <= 0.5 and d.mean() > 0.3


# ------------------------------------------------------------------ local Hessian subspace

def test_hessian_estimate_examples():
    q = make_quadratic(np.diag([3.0, 1.0]))
    np.testing.assert_array_equal(hessian_estimate(q, [0.3, 0.1]), [[6.0, 0.0], [0.0, 2.0]])
    lin = Objective(dim=2, value_fn=lambda x: 3 * x[0] - x[1], grad_fn=lambda x: np.array([3.0, -1.0]))
    np.testing.assert_allclose(hessian_estimate(lin, [1.0, 2.0]), np.zeros((2, 2)), atol=1e-10)
    cub = Objective(dim=2, value_fn=lambda x: x[0] ** 2 * x[1],
                    grad_fn=lambda x: np.array([2 * x[0] * x[1], x[0] ** 2]))
    np.testing.assert_allclose(hessian_estimate(cub, [1.0, 1.0]), [[2.0, 2.0], [2.0, 0.0]], atol=1e-7)


def test_local_subspace_examples():
    q = make_quadratic(np.diag([3.0, 1.0]))
    loc = local_hessian_subspace(q, [1.0, 0.0], 1)
    np.testing.assert_allclose(np.abs(loc.subspace.basis[:, 0]), [1.0, 0.0], atol=1e-12)
    assert loc.sigma_r == 6.0 and not loc.gradient_vanished
    full = local_hessian_subspace(q, [1.0, 1.0], 2)
    assert full.subspace.rank == 2
    np.testing.assert_allclose(full.subspace.basis @ full.subspace.basis.T, np.eye(2), atol=1e-12)
    z = local_hessian_subspace(q, [0.0, 0.0], 1)
    assert z.gradient_vanished and z.sigma_r == 6.0
    f = random_ridge(4, 1, "quadratic", seed=0)
    assert local_hessian_subspace(f, np.ones(4), 2).sigma_r == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        local_hessian_subspace(q, [1.0, 0.0], 3)


def test_local_bound_zero_for_quadratic():
    q = make_quadratic(np.diag([3.0, 2.0, 1.0, 0.5]))
    loc = local_hessian_subspace(q, [1.0, 1.0, 1.0, 1.0], 2)
    fit = check_local_bound(q, np.ones(4), loc.subspace, loc.sigma_r, 1.0, n_samples=500)
    assert fit.fitted_M == 0.0 and fit.max_violation == 0.0


def test_local_bound_fit_then_hold_out():
    f = random_ridge(5, 2, "cubic", seed=1)
    A = f.meta["A"]
    center = np.linalg.lstsq(A, [-1.0, -1.0], rcond=None)[0]
    loc = local_hessian_subspace(f, center, 1)
    fit = check_local_bound(f, center, loc.subspace, loc.sigma_r, 1.0, n_samples=1000, seed=1)
    assert fit.fitted_M > 0 and fit.max_violation == 0.0
    held = check_local_bound(f, center, loc.subspace, loc.sigma_r, 1.0, n_samples=300, seed=99, M=fit.fitted_M)
    assert held.max_violation == 0.0
    tight = check_local_bound(f, center, loc.subspace, loc.sigma_r, 1.0, n_samples=300, seed=99,
                              M=0.1 * fit.fitted_M)
    assert tight.max_violation > 0
