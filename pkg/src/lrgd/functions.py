"""Test-function zoo with analytic gradients and rank metadata.

Members: quadratic forms, ridge functions ``sigma(A theta)``, algebraic
combinators, the geometric product and its log transform, and a certified
approximately-low-rank construction. :func:`parse_function_spec` builds any
of them from a one-line expression such as
``sum(ridge(p=6, r=1, seed=1), exp(ridge(p=6, r=1, seed=2)))``.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import ConstructionError, DomainError, SpecError
from .oracle import Objective
from .subspace import orthonormalize


def _orth_rows(A):
    """Orthonormal basis (p x r) of the row space of ``A``."""
    q, _ = np.linalg.qr(np.asarray(A, dtype=float).T)
    return q


def _complement(Q):
    p, r = Q.shape
    full, _ = np.linalg.qr(np.hstack([Q, np.eye(p)]))
    return full[:, r:p]


# --------------------------------------------------------------------------
# quadratics

def make_quadratic(H, name=None):
    """``f(theta) = theta^T H theta`` with ``L = 2 lambda_max`` and ``mu = 2 lambda_min``."""
    H = np.array(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"H must be square, got shape {H.shape}")
    if np.max(np.abs(H - H.T)) > 1e-12:
        raise ValueError("H must be symmetric")
    eig = np.linalg.eigvalsh(H)
    if eig[0] < -1e-12 * max(1.0, abs(eig[-1])):
        raise ValueError("H must be positive semidefinite")
    p = H.shape[0]
    lam_max, lam_min = float(eig[-1]), float(eig[0])
    rank = int(np.sum(eig > 1e-12 * max(1.0, lam_max)))
    H.setflags(write=False)
    twoH = 2.0 * H
    return Objective(
        dim=p,
        value_fn=lambda x: float(x @ H @ x),
        grad_fn=lambda x: twoH @ x,
        hess_fn=lambda x: twoH.copy(),
        smoothness_L=2.0 * lam_max if lam_max > 0 else None,
        strong_convexity_mu=2.0 * lam_min if lam_min > 1e-12 else None,
        known_rank=rank,
        f_star=0.0,
        minimizer=np.zeros(p),
        name=name or f"quadratic{p}",
        meta={"H": H, "kind": "quadratic"},
    )


# --------------------------------------------------------------------------
# ridge profiles

class Profile(NamedTuple):
    """Scalar-field profile ``sigma: R^r -> R`` for ridge functions.

    ``L`` and ``mu`` are smoothness / strong-convexity constants of sigma
    (``None`` when absent); ``f_star`` is its minimum, attained at 0.
    """

    name: str
    value: Callable
    grad: Callable
    hess: Callable
    L: Optional[float]
    mu: Optional[float]
    f_star: Optional[float]


def quadratic_profile(weights):
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("quadratic profile weights must be positive")
    return Profile(
        "quadratic",
        lambda y: float(np.sum(w * y * y)),
        lambda y: 2.0 * w * y,
        lambda y: np.diag(2.0 * w),
        2.0 * float(w.max()),
        2.0 * float(w.min()),
        0.0,
    )


def nonconvex_profile(c=3.0):
    """``sum(y^2 + c sin^2 y)``; curvature ranges over ``[2 - 2c, 2 + 2c]``."""
    return Profile(
        "nonconvex",
        lambda y: float(np.sum(y * y + c * np.sin(y) ** 2)),
        lambda y: 2.0 * y + c * np.sin(2.0 * y),
        lambda y: np.diag(2.0 + 2.0 * c * np.cos(2.0 * y)),
        2.0 + 2.0 * abs(c),
        None,
        0.0,
    )


def logcosh_profile():
    return Profile(
        "logcosh",
        lambda y: float(np.sum(np.logaddexp(y, -y) - np.log(2.0))),
        lambda y: np.tanh(y),
        lambda y: np.diag(1.0 - np.tanh(y) ** 2),
        1.0,
        None,
        0.0,
    )


def conditioned_profile(kappa):
    """``sum(y^2 + 2 (kappa - 1) log cosh y)``: curvature in ``[2, 2 kappa]``, so condition number kappa."""
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    c = 2.0 * (kappa - 1.0)
    return Profile(
        "conditioned",
        lambda y: float(np.sum(y * y + c * (np.logaddexp(y, -y) - np.log(2.0)))),
        lambda y: 2.0 * y + c * np.tanh(y),
        lambda y: np.diag(2.0 + c * (1.0 - np.tanh(y) ** 2)),
        2.0 * kappa,
        2.0,
        0.0,
    )


def cubic_profile():
    """``sum(y^2 + y^3/3)``: constant third derivative, not bounded below."""
    return Profile(
        "cubic",
        lambda y: float(np.sum(y * y + y ** 3 / 3.0)),
        lambda y: 2.0 * y + y * y,
        lambda y: np.diag(2.0 + 2.0 * y),
        None,
        None,
        None,
    )


def get_profile(name, r, weights=None, c=3.0, kappa=10.0):
    if name == "quadratic":
        return quadratic_profile(np.ones(r) if weights is None else weights)
    if name == "nonconvex":
        return nonconvex_profile(c)
    if name == "logcosh":
        return logcosh_profile()
    if name == "cubic":
        return cubic_profile()
    if name == "conditioned":
        return conditioned_profile(kappa)
    raise SpecError(f"unknown ridge profile {name!r}")


# --------------------------------------------------------------------------
# ridges

def make_ridge(A, profile, profile_grad=None, profile_hess=None, name=None):
    """Ridge function ``f(theta) = sigma(A theta)`` with ``A`` of full row rank r.

    ``profile`` is either a :class:`Profile` or a callable sigma, in which
    case ``profile_grad`` is required.
    """
    A = np.array(A, dtype=float)
    if A.ndim == 1:
        A = A[None, :]
    r, p = A.shape
    if r > p or np.linalg.matrix_rank(A) < r:
        raise ValueError("A must have full row rank")
    if not isinstance(profile, Profile):
        if profile_grad is None:
            raise ValueError("a callable profile needs its gradient")
        profile = Profile("custom", profile, profile_grad, profile_hess, None, None, None)
    A.setflags(write=False)
    sig = profile
    hess_fn = None
    if sig.hess is not None:
        hess_fn = lambda x: A.T @ sig.hess(A @ x) @ A

    L = restricted_mu = None
    opnorm = float(np.linalg.norm(A, 2))
    if sig.name == "quadratic":
        # exact constants from the spectrum of A^T D A
        ev = np.linalg.eigvalsh(A.T @ sig.hess(np.zeros(r)) @ A)[-r:]
        L, restricted_mu = float(ev[-1]), float(ev[0])
    else:
        smin = float(np.linalg.svd(A, compute_uv=False)[-1])
        if sig.L is not None:
            L = sig.L * opnorm ** 2
        if sig.mu is not None:
            restricted_mu = sig.mu * smin ** 2
    Q = _orth_rows(A)
    return Objective(
        dim=p,
        value_fn=lambda x: sig.value(A @ x),
        grad_fn=lambda x: A.T @ sig.grad(A @ x),
        hess_fn=hess_fn,
        smoothness_L=L,
        restricted_mu=restricted_mu,
        known_rank=r,
        f_star=sig.f_star,
        minimizer=np.zeros(p) if sig.f_star is not None else None,
        active_basis=Q,
        name=name or f"ridge{p}x{r}-{sig.name}",
        meta={"kind": "ridge", "A": A, "profile": sig},
    )


def random_ridge(p, r, profile="quadratic", seed=0, orthonormal=False, weights=None, c=3.0, kappa=10.0):
    """Ridge with a seeded Gaussian (or orthonormal-row) matrix ``A``."""
    rng = np.random.default_rng(seed)
    if orthonormal:
        q, _ = np.linalg.qr(rng.standard_normal((p, r)))
        A = q.T
    else:
        A = rng.standard_normal((r, p)) / np.sqrt(p)
    return make_ridge(A, get_profile(profile, r, weights, c, kappa), name=f"ridge{p}x{r}-{profile}-s{seed}")


# --------------------------------------------------------------------------
# combinators

OUTER_FUNCTIONS = {
    "exp": (np.exp, np.exp),
    "tanh": (np.tanh, lambda t: 1.0 - np.tanh(t) ** 2),
    "square": (lambda t: t * t, lambda t: 2.0 * t),
    "softplus": (lambda t: np.logaddexp(0.0, t), lambda t: 1.0 / (1.0 + np.exp(-t))),
}

# outer functions with g' > 0 everywhere keep the rank exactly
_RANK_PRESERVING = {"exp", "tanh", "softplus"}


@dataclass
class CompositeSpec:
    """One node of a combinator tree: ``scale``, ``sum``, ``product`` or ``compose``."""

    op: str
    children: Sequence[Objective]
    alpha: Optional[float] = None
    g: object = None

    @property
    def rank_bound(self):
        bounds = [c.rank_bound if c.rank_bound is not None else c.dim for c in self.children]
        if self.op in ("scale", "compose"):
            return bounds[0]
        return min(sum(bounds), self.children[0].dim)


def combine(spec):
    ch = list(spec.children)
    if not ch:
        raise ValueError("combinator needs at least one child")
    p = ch[0].dim
    if any(c.dim != p for c in ch):
        raise ValueError("children must share the same dimension")
    grads = [c.gradient for c in ch]
    bases = [c.active_basis for c in ch]
    known = None
    if spec.op == "scale":
        a = spec.alpha
        if a is None or a == 0:
            raise ValueError("rank statement requires alpha != 0")
        f = ch[0]
        value = lambda x: a * f.value_fn(x)
        grad = lambda x: a * grads[0](x)
        known = f.known_rank
        label = f"scale({a:g},{f.name})"
    elif spec.op == "sum":
        value = lambda x: sum(c.value_fn(x) for c in ch)
        grad = lambda x: sum(g(x) for g in grads)
        label = "sum(" + ",".join(c.name for c in ch) + ")"
    elif spec.op == "product":
        if len(ch) != 2:
            raise ValueError("product takes exactly two children")
        f1, f2 = ch
        value = lambda x: f1.value_fn(x) * f2.value_fn(x)
        grad = lambda x: f1.value_fn(x) * grads[1](x) + f2.value_fn(x) * grads[0](x)
        label = f"product({f1.name},{f2.name})"
    elif spec.op == "compose":
        if len(ch) != 1:
            raise ValueError("compose takes exactly one child")
        gname = spec.g if isinstance(spec.g, str) else "custom"
        try:
            g, dg = OUTER_FUNCTIONS[spec.g] if isinstance(spec.g, str) else spec.g
        except (KeyError, TypeError):
            raise ValueError(f"unknown outer function {spec.g!r}") from None
        f = ch[0]
        value = lambda x: float(g(f.value_fn(x)))
        grad = lambda x: dg(f.value_fn(x)) * grads[0](x)
        if gname in _RANK_PRESERVING:
            known = f.known_rank
        label = f"{gname}({f.name})"
    else:
        raise ValueError(f"unknown combinator {spec.op!r}")
    basis = None
    if all(b is not None for b in bases):
        basis = orthonormalize(list(np.hstack(bases).T), drop_tol=1e-10).basis
    return Objective(
        dim=p,
        value_fn=value,
        grad_fn=grad,
        known_rank=known,
        rank_bound=spec.rank_bound,
        active_basis=basis,
        name=label,
        meta={"kind": "composite", "op": spec.op},
    )


# --------------------------------------------------------------------------
# geometric product

def make_geometric_product(p):
    """Return ``(f, g)`` with ``f = prod(theta)`` (rank p) and ``g = sum(phi)`` (rank 1).

    ``f`` is defined on the closed non-negative orthant; negative coordinates
    raise :class:`DomainError`.
    """
    if p < 2:
        raise ValueError("geometric product needs p >= 2")

    def check(x):
        if np.any(x < 0):
            raise DomainError(f"geometric product is defined on the non-negative orthant, got {x!r}")

    def value(x):
        check(x)
        return float(np.prod(x))

    def grad(x):
        check(x)
        out = np.empty(p)
        for j in range(p):
            out[j] = np.prod(np.delete(x, j))
        return out

    f = Objective(dim=p, value_fn=value, grad_fn=grad, known_rank=p, name=f"geomprod{p}",
                  meta={"kind": "geometric"})
    ones = np.ones(p)
    g = Objective(
        dim=p,
        value_fn=lambda phi: float(np.sum(phi)),
        grad_fn=lambda phi: ones.copy(),
        hess_fn=lambda phi: np.zeros((p, p)),
        known_rank=1,
        active_basis=(ones / np.sqrt(p))[:, None],
        name=f"geomlog{p}",
        meta={"kind": "geometric-log"},
    )
    return f, g


# --------------------------------------------------------------------------
# approximately low-rank construction

def make_approx_low_rank(base, eta, eps, seed=0, n_terms=4, check_radius=5.0, n_check=200):
    """(eta, eps)-approximately rank-r objective built around a ridge ``base``.

    The ridge matrix is tilted out of its row space ``H`` by a coupling whose
    orthogonal gradient part is at most ``eta |Pi_H grad f|``, and a bounded
    term ``eps * sum c_k (1 - cos <w_k, theta>)`` with ``w_k`` in ``H^perp``
    adds an orthogonal gradient of norm at most ``eps``. Both terms are
    nonnegative offsets of the base minimum, so ``f_star`` is preserved.
    """
    if base.meta.get("kind") != "ridge":
        raise ValueError("base must be a ridge function")
    if not 0 <= eta < 1:
        raise ValueError("eta must lie in [0, 1)")
    if not eps > 0:
        raise ValueError("eps must be positive")
    A = np.asarray(base.meta["A"])
    sig = base.meta["profile"]
    r, p = A.shape
    Q = _orth_rows(A)
    rng = np.random.default_rng(seed)
    if p > r:
        Wp = _complement(Q)
        M = rng.standard_normal((r, p - r))
        B = M @ Wp.T
        B /= np.linalg.norm(B, 2)
        smin = float(np.linalg.svd(A, compute_uv=False)[-1])
        A_t = A + eta * smin * B
        W = Wp @ rng.standard_normal((p - r, n_terms))
        W /= np.linalg.norm(W, axis=0)
        c = rng.uniform(0.2, 1.0, n_terms)
        c /= c.sum()
    else:
        A_t, W, c = A, np.zeros((p, 0)), np.zeros(0)

    def value(x):
        return sig.value(A_t @ x) + eps * float(np.sum(c * (1.0 - np.cos(W.T @ x))))

    def grad(x):
        return A_t.T @ sig.grad(A_t @ x) + eps * (W @ (c * np.sin(W.T @ x)))

    hess_fn = None
    if sig.hess is not None:
        hess_fn = lambda x: A_t.T @ sig.hess(A_t @ x) @ A_t + eps * (W * (c * np.cos(W.T @ x))) @ W.T
    L = None
    if sig.L is not None:
        L = sig.L * float(np.linalg.norm(A_t, 2)) ** 2 + eps
    obj = Objective(
        dim=p,
        value_fn=value,
        grad_fn=grad,
        hess_fn=hess_fn,
        smoothness_L=L,
        f_star=sig.f_star,
        minimizer=np.zeros(p) if sig.f_star is not None else None,
        name=f"approx({base.name},eta={eta:g},eps={eps:g})",
        meta={"kind": "approx", "certificate": {"eta": eta, "eps": eps, "r": r, "basis": Q},
              "base": base},
    )
    # self-check inside a ball: the bound holds globally by construction
    P = Q @ Q.T
    for _ in range(n_check):
        d = rng.standard_normal(p)
        x = d / np.linalg.norm(d) * check_radius * rng.uniform() ** (1.0 / p)
        g = grad(x)
        resid = np.linalg.norm(g - P @ g)
        if resid > eta * np.linalg.norm(g) + eps + 1e-12:
            raise ConstructionError(f"orthogonal gradient cap violated at {x!r}")
    return obj


# --------------------------------------------------------------------------
# function-spec text

def _literal(node):
    try:
        return ast.literal_eval(node)
    except ValueError:
        raise SpecError(f"expected a literal, got {ast.unparse(node)!r}") from None


def _build(node):
    if not isinstance(node, ast.Call) or not isinstance(node.func, ast.Name):
        raise SpecError(f"expected a constructor call, got {ast.unparse(node)!r}")
    fn = node.func.id
    kw = {k.arg: k.value for k in node.keywords}
    args = node.args
    lit = lambda key, default=None: _literal(kw[key]) if key in kw else default

    if fn == "quadratic":
        if "H" in kw:
            return make_quadratic(lit("H"))
        if "diag" in kw:
            return make_quadratic(np.diag(lit("diag")))
        raise SpecError("quadratic needs H=[[...]] or diag=[...]")
    if fn == "ridge":
        profile = lit("profile", "quadratic")
        if "A" in kw:
            A = np.asarray(lit("A"), dtype=float)
            A = A[None, :] if A.ndim == 1 else A
            return make_ridge(A, get_profile(profile, A.shape[0], lit("weights"), lit("c", 3.0),
                                             lit("kappa", 10.0)))
        return random_ridge(int(lit("p")), int(lit("r", 1)), profile, int(lit("seed", 0)),
                            bool(lit("orthonormal", False)), lit("weights"), lit("c", 3.0),
                            lit("kappa", 10.0))
    if fn in ("geometric", "geometric_log"):
        f, g = make_geometric_product(int(lit("p")))
        return f if fn == "geometric" else g
    if fn == "scale":
        if len(args) != 2:
            raise SpecError("scale(alpha, f)")
        return combine(CompositeSpec("scale", [_build(args[1])], alpha=float(_literal(args[0]))))
    if fn in ("sum", "product"):
        return combine(CompositeSpec(fn, [_build(a) for a in args]))
    if fn == "compose":
        if len(args) != 2:
            raise SpecError("compose(name, f)")
        return combine(CompositeSpec("compose", [_build(args[1])], g=_literal(args[0])))
    if fn in OUTER_FUNCTIONS:
        return combine(CompositeSpec("compose", [_build(a) for a in args], g=fn))
    if fn == "approx":
        return make_approx_low_rank(_build(args[0]), float(lit("eta", 0.0)), float(lit("eps")),
                                    int(lit("seed", 0)))
    raise SpecError(f"unknown constructor {fn!r}")


def parse_function_spec(text):
    """Build an :class:`Objective` from a constructor expression.

    Constructors: ``quadratic(H=..|diag=..)``, ``ridge(p=, r=, profile=, seed=,
    orthonormal=, weights=, c=)`` or ``ridge(A=..., profile=)``,
    ``geometric(p=)``, ``geometric_log(p=)``, ``scale(alpha, f)``,
    ``sum(f, ...)``, ``product(f, g)``, ``compose("exp", f)`` (or ``exp(f)``,
    ``tanh(f)``, ...), ``approx(ridge(...), eta=, eps=, seed=)``.
    """
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise SpecError(f"cannot parse function spec {text!r}: {exc}") from None
    obj = _build(tree.body)
    obj.meta["spec"] = text.strip()
    return obj
