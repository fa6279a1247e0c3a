import numpy as np
import pytest
from hypothesis import given, strategies as st

from lrgd import (
    Ball,
    CompositeSpec,
    ConstructionError,
    DomainError,
    SpecError,
    Subspace,
    combine,
    estimate_rank,
    make_approx_low_rank,
    make_geometric_product,
    make_quadratic,
    make_ridge,
    parse_function_spec,
    verify_approx_rank,
)
from lrgd.functions import get_profile, random_ridge
from lrgd.oracle import fd_gradient


def ridge_e1(p=3):
    A = np.zeros((1, p))
    A[0, 0] = 1.0
    return make_ridge(A, get_profile("quadratic", 1))


# ------------------------------------------------------------------ quadratics

def test_quadratic_examples():
    q = make_quadratic(np.diag([3.0, 1.0]))
    assert q([1.5, 1.5]) == 9.0
    np.testing.assert_array_equal(q.gradient([1.5, 1.5]), [9.0, 3.0])
    assert (q.smoothness_L, q.strong_convexity_mu, q.f_star) == (6.0, 2.0, 0.0)
    np.testing.assert_array_equal(make_quadratic(np.eye(3)).gradient([1.0, -2.0, 0.5]), [2.0, -4.0, 1.0])
    q = make_quadratic(np.diag([1000.0, 1.0]))
    assert q.smoothness_L / q.strong_convexity_mu == 1000.0


def test_quadratic_rejects_bad_H():
    with pytest.raises(ValueError):
        make_quadratic([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        make_quadratic(np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        make_quadratic(np.ones((2, 3)))


def test_semidefinite_quadratic_has_no_mu():
    q = make_quadratic(np.diag([2.0, 0.0]))
    assert q.strong_convexity_mu is None and q.known_rank == 1


# ------------------------------------------------------------------ ridges

def test_ridge_rank_one_gradient():
    f = ridge_e1()
    np.testing.assert_array_equal(f.gradient([0.7, -3.0, 2.0]), [1.4, 0.0, 0.0])
    assert f.known_rank == 1


def test_ridge_rejects_rank_deficient():
    with pytest.raises(ValueError):
        make_ridge(np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]), get_profile("quadratic", 2))
    with pytest.raises(ValueError):
        make_ridge(np.eye(2), lambda y: float(y @ y))


@given(st.integers(0, 10_000), st.sampled_from(["quadratic", "nonconvex", "logcosh", "cubic", "conditioned"]))
def test_ridge_null_space_invariance(seed, profile):
    rng = np.random.default_rng(seed)
    f = random_ridge(7, 3, profile, seed=seed)
    A = f.meta["A"]
    theta = rng.uniform(-1, 1, 7)
    null = np.linalg.svd(A)[2][3:].T
    shift = null @ rng.standard_normal(4)
    assert abs(f(theta + shift) - f(theta)) <= 1e-10 * max(1.0, abs(f(theta)))


def test_ridge_restricted_strong_convexity():
    f = random_ridge(6, 2, "quadratic", seed=3, weights=[1.0, 2.0])
    A = f.meta["A"]
    Hs = f.hess_fn(np.zeros(6))
    Q = np.linalg.qr(A.T)[0]
    Qperp = np.linalg.svd(A)[2][2:].T
    along = np.linalg.eigvalsh(Q.T @ Hs @ Q)
    across = np.linalg.eigvalsh(Qperp.T @ Hs @ Qperp)
    assert along.min() > 0.1
    np.testing.assert_allclose(across, 0, atol=1e-12)
    np.testing.assert_allclose(along.min(), f.restricted_mu, rtol=1e-10)


def test_custom_callable_profile():
    A = np.array([[1.0, 1.0, 0.0]])
    f = make_ridge(A, lambda y: float(np.sum(y ** 4)), lambda y: 4 * y ** 3)
    np.testing.assert_allclose(f.gradient([1.0, 1.0, 5.0]), [32.0, 32.0, 0.0])


# ------------------------------------------------------------------ combinators

def test_combine_scale_sum_compose_ranks():
    a = ridge_e1()
    b = make_ridge(np.array([[0.0, 1.0, 0.0]]), get_profile("logcosh", 1))
    samples = np.random.default_rng(0).uniform(-1, 1, (20, 3))
    assert estimate_rank(combine(CompositeSpec("scale", [a], alpha=2.0)), samples).r == 1
    s = combine(CompositeSpec("sum", [a, b]))
    assert s.rank_bound == 2 and estimate_rank(s, samples).r == 2
    e = combine(CompositeSpec("compose", [a], g="exp"))
    assert estimate_rank(e, samples).r == 1 and e.known_rank == 1


def test_combine_zero_scale_rejected():
    with pytest.raises(ValueError, match="alpha"):
        combine(CompositeSpec("scale", [ridge_e1()], alpha=0.0))


def test_combine_product_gradient(rng):
    a, b = random_ridge(4, 1, "quadratic", seed=1), random_ridge(4, 2, "logcosh", seed=2)
    f = combine(CompositeSpec("product", [a, b]))
    assert f.rank_bound == 3
    for _ in range(10):
        x = rng.uniform(-1, 1, 4)
        np.testing.assert_allclose(f.gradient(x), fd_gradient(f, x, 1e-5), rtol=1e-6, atol=1e-8)


def test_combine_custom_outer_function():
    f = combine(CompositeSpec("compose", [ridge_e1()], g=(np.sin, np.cos)))
    np.testing.assert_allclose(f.gradient([0.5, 0, 0]), [np.cos(0.25) * 1.0, 0, 0])
    with pytest.raises(ValueError):
        combine(CompositeSpec("compose", [ridge_e1()], g="nope"))


def test_combine_dimension_mismatch():
    with pytest.raises(ValueError):
        combine(CompositeSpec("sum", [ridge_e1(3), ridge_e1(4)]))


# ------------------------------------------------------------------ geometric product

def test_geometric_product():
    f, g = make_geometric_product(3)
    np.testing.assert_array_equal(f.gradient([1.0, 1.0, 1.0]), [1.0, 1.0, 1.0])
    for i in range(3):
        e = np.eye(3)[i]
        np.testing.assert_array_equal(f.gradient(1 - e), e)
    assert (f.known_rank, g.known_rank) == (3, 1)
    np.testing.assert_array_equal(g.gradient([0.3, -4.0, 2.0]), [1.0, 1.0, 1.0])
    with pytest.raises(DomainError):
        f([1.0, -0.5, 2.0])
    with pytest.raises(ValueError):
        make_geometric_product(1)


def test_geometric_log_transform_equivalence():
    # minimizing g over a box [lo, hi]^p corresponds to minimizing f over [e^lo, e^hi]^p
    p, lo, hi = 3, -1.0, 2.0
    f, g = make_geometric_product(p)
    grid = np.linspace(lo, hi, 7)
    phis = np.array(np.meshgrid(*[grid] * p)).reshape(p, -1).T
    gvals = np.array([g(phi) for phi in phis])
    fvals = np.array([f(np.exp(phi)) for phi in phis])
    np.testing.assert_allclose(np.log(fvals), gvals, atol=1e-12)
    assert np.argmin(gvals) == np.argmin(fvals)
    np.testing.assert_allclose(phis[np.argmin(gvals)], [lo] * p)


# ------------------------------------------------------------------ approximate low rank

def test_approx_reduces_to_base():
    base = random_ridge(6, 2, "quadratic", seed=0)
    f = make_approx_low_rank(base, 0.0, 1e-14, seed=0)
    rng = np.random.default_rng(1)
    Q = f.meta["certificate"]["basis"]
    for _ in range(20):
        x = rng.standard_normal(6)
        g = f.gradient(x)
        assert np.linalg.norm(g - Q @ (Q.T @ g)) <= 1e-13
        np.testing.assert_allclose(g, base.gradient(x), atol=1e-13)


def test_approx_certificate_passes():
    base = random_ridge(10, 2, "logcosh", seed=5)
    f = make_approx_low_rank(base, 0.05, 0.01, seed=5)
    cert = f.meta["certificate"]
    S = Subspace(cert["basis"])
    c = verify_approx_rank(f, S, Ball(tuple(np.zeros(10)), 5.0), 0.05, 0.01, n_samples=1000, seed=2)
    assert c.passed
    assert (cert["eta"], cert["eps"], cert["r"]) == (0.05, 0.01, 2)


def test_approx_strongly_convex_base_obeys_radius_tradeoff():
    base = random_ridge(4, 4, "quadratic", seed=2, orthonormal=True)  # full rank: strongly convex
    mu = base.restricted_mu
    S = Subspace(np.eye(4)[:, :2])
    delta, eta = 1.0, 0.2
    need = mu * delta * (1 - eta)
    region = Ball((0.0,) * 4, delta)
    # a certificate for the lower-rank subspace can only pass when eps is large enough
    for eps in np.linspace(0.05, 2 * need, 15):
        c = verify_approx_rank(base, S, region, eta, eps, n_samples=3000, seed=0)
        if c.passed:
            assert eps >= need - 0.1 * need


def test_approx_validation():
    base = random_ridge(5, 1, "quadratic", seed=0)
    with pytest.raises(ValueError):
        make_approx_low_rank(base, 1.0, 0.1)
    with pytest.raises(ValueError):
        make_approx_low_rank(base, 0.1, 0.0)
    with pytest.raises(ValueError):
        make_approx_low_rank(make_quadratic(np.eye(2)), 0.1, 0.1)


def test_approx_construction_error_is_raised(monkeypatch):
    import lrgd.functions as fn

    base = random_ridge(5, 1, "quadratic", seed=0)
    wrong = np.eye(5)[:, [4]]  # certify a basis that is not the row space
    monkeypatch.setattr(fn, "_orth_rows", lambda A: wrong)
    with pytest.raises(ConstructionError):
        fn.make_approx_low_rank(base, 0.0, 1e-3, seed=0)


# ------------------------------------------------------------------ zoo-wide properties

def zoo():
    out = [make_quadratic(np.diag([3.0, 1.0])), make_quadratic(np.diag([5.0, 2.0, 1.0]))]
    for prof in ("quadratic", "nonconvex", "logcosh", "cubic", "conditioned"):
        out.append(random_ridge(6, 2, prof, seed=3))
    out.append(make_approx_low_rank(random_ridge(6, 2, "nonconvex", seed=4), 0.05, 0.01, seed=4))
    out.append(parse_function_spec("product(ridge(p=4, r=1, seed=1), exp(ridge(p=4, r=1, seed=2, profile=\"logcosh\")))"))
    out.append(make_geometric_product(4)[1])
    return out


@pytest.mark.parametrize("obj", zoo(), ids=lambda o: o.name)
def test_zoo_gradient_check(obj, rng):
    for _ in range(100):
        x = rng.uniform(-1.0, 1.0, obj.dim)
        g = obj.gradient(x)
        fd = fd_gradient(obj, x, 1e-5)
        assert np.linalg.norm(fd - g) <= 1e-6 * (1 + np.linalg.norm(g))


def test_geometric_product_gradient_check(rng):
    f, _ = make_geometric_product(4)
    for _ in range(100):
        x = rng.uniform(0.5, 2.0, 4)
        np.testing.assert_allclose(fd_gradient(f, x, 1e-5), f.gradient(x), rtol=1e-6)


@pytest.mark.parametrize("H", [np.diag([3.0, 1.0]), np.diag([100.0, 1.0, 0.5]), np.array([[2.0, 1.0], [1.0, 2.0]])])
def test_strongly_convex_members_have_full_rank(H):
    q = make_quadratic(H)
    samples = np.random.default_rng(0).standard_normal((20, q.dim))
    assert estimate_rank(q, samples).r == q.dim


# ------------------------------------------------------------------ spec text

def test_parse_function_spec_forms():
    q = parse_function_spec("quadratic(H=[[3, 0], [0, 1]])")
    assert q([1.5, 1.5]) == 9.0
    assert parse_function_spec("quadratic(diag=[3, 1])")([1.0, 1.0]) == 4.0
    r = parse_function_spec("ridge(A=[1, 0, 0], profile=\"quadratic\")")
    assert r.known_rank == 1
    s = parse_function_spec("sum(ridge(p=6, r=1, seed=1), compose(\"exp\", ridge(p=6, r=1, seed=2)))")
    assert s.rank_bound == 2
    assert parse_function_spec("scale(2, ridge(p=3, r=1))").known_rank == 1
    assert parse_function_spec("geometric_log(p=5)").known_rank == 1
    a = parse_function_spec("approx(ridge(p=8, r=2, seed=1), eta=0.05, eps=0.01, seed=2)")
    assert a.meta["certificate"]["r"] == 2
    assert a.meta["spec"].startswith("approx(")


@pytest.mark.parametrize("text", ["quadratic(", "nosuch(p=2)", "ridge(p=x)", "1 + 2", "scale(ridge(p=2))",
                                  "ridge(p=3, profile=\"weird\")"])
def test_parse_function_spec_errors(text):
    with pytest.raises((SpecError, ValueError)):
        parse_function_spec(text)
