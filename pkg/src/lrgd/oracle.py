"""Objectives, the directional-derivative oracle and call accounting.

Function values are free. Every directional derivative costs one call and a
full gradient costs ``p`` calls, whichever route actually produced it. Calls
are charged to one of three buckets of a :class:`CallLedger`; only the
``sampling`` and ``descent`` buckets count toward reported complexity.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ObjectiveOverflow, OracleUnavailable

CATEGORIES = ("sampling", "descent", "instrumentation")

DIRECTION_TOL = 1e-12


def as_point(point, dim=None):
    x = np.asarray(point, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise ValueError(f"point must be a non-empty 1-D vector, got shape {x.shape}")
    if dim is not None and x.size != dim:
        raise ValueError(f"point has dimension {x.size}, objective expects {dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"point has non-finite entries: {x!r}")
    return x


def as_direction(direction, dim=None):
    u = as_point(direction, dim)
    if abs(np.linalg.norm(u) - 1.0) > DIRECTION_TOL:
        raise ValueError(f"direction must have unit norm, got norm {np.linalg.norm(u)!r}")
    return u


@dataclass
class Objective:
    """A differentiable scalar function of a ``dim``-vector plus metadata.

    ``grad_fn`` and ``dderiv_fn`` are optional; without either, derivatives
    fall back to central finite differences. ``restricted_mu`` is the strong
    convexity constant of the restriction to the active subspace (ridges are
    never strongly convex on the whole space). ``active_basis`` is a p x r
    orthonormal basis of a subspace known to contain every gradient.
    """

    dim: int
    value_fn: Callable[[np.ndarray], float]
    grad_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    dderiv_fn: Optional[Callable[[np.ndarray, np.ndarray], float]] = None
    hess_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    smoothness_L: Optional[float] = None
    strong_convexity_mu: Optional[float] = None
    restricted_mu: Optional[float] = None
    known_rank: Optional[int] = None
    rank_bound: Optional[int] = None
    f_star: Optional[float] = None
    minimizer: Optional[np.ndarray] = None
    active_basis: Optional[np.ndarray] = None
    name: str = "objective"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        self.dim = int(self.dim)
        for attr in ("smoothness_L", "strong_convexity_mu", "restricted_mu"):
            v = getattr(self, attr)
            if v is not None and not v > 0:
                raise ValueError(f"{attr} must be positive when present, got {v!r}")
        if (
            self.smoothness_L is not None
            and self.strong_convexity_mu is not None
            and self.strong_convexity_mu > self.smoothness_L * (1 + 1e-12)
        ):
            raise ValueError("strong_convexity_mu cannot exceed smoothness_L")
        if self.known_rank is not None and not 0 <= self.known_rank <= self.dim:
            raise ValueError(f"known_rank must lie in [0, {self.dim}]")
        if self.rank_bound is None and self.known_rank is not None:
            self.rank_bound = self.known_rank

    @property
    def has_gradient(self):
        return self.grad_fn is not None or self.dderiv_fn is not None

    def __call__(self, point):
        return eval_objective(self, point)

    def gradient(self, point):
        """Uncounted gradient, for analysis code that sits outside the cost model."""
        x = as_point(point, self.dim)
        if self.grad_fn is not None:
            return np.asarray(self.grad_fn(x), dtype=float)
        if self.dderiv_fn is not None:
            eye = np.eye(self.dim)
            return np.array([self.dderiv_fn(x, eye[i]) for i in range(self.dim)])
        return fd_gradient(self, x)


def eval_objective(obj, point):
    x = as_point(point, obj.dim)
    value = float(obj.value_fn(x))
    if not np.isfinite(value):
        raise ObjectiveOverflow(x, value)
    return value


def default_fd_step(point):
    return 1e-6 * (1.0 + float(np.linalg.norm(point)))


def fd_directional(obj, point, direction, h=None):
    """Central difference ``(f(x + h u) - f(x - h u)) / 2h``."""
    x = np.asarray(point, dtype=float)
    u = np.asarray(direction, dtype=float)
    if h is None:
        h = default_fd_step(x)
    if not h > 0:
        raise ValueError(f"finite-difference step must be positive, got {h!r}")
    try:
        fp = float(obj.value_fn(x + h * u))
        fm = float(obj.value_fn(x - h * u))
    except (ArithmeticError, ValueError) as exc:
        raise OracleUnavailable(f"finite-difference stencil failed at {x!r}: {exc}") from exc
    if not (np.isfinite(fp) and np.isfinite(fm)):
        raise OracleUnavailable(f"non-finite finite-difference stencil at {x!r}")
    return (fp - fm) / (2.0 * h)


def fd_gradient(obj, point, h=None):
    x = np.asarray(point, dtype=float)
    eye = np.eye(x.size)
    return np.array([fd_directional(obj, x, eye[i], h) for i in range(x.size)])


def _raw_directional(obj, x, u):
    if obj.dderiv_fn is not None:
        val = float(obj.dderiv_fn(x, u))
    elif obj.grad_fn is not None:
        val = float(np.dot(obj.grad_fn(x), u))
    else:
        val = fd_directional(obj, x, u)
    if not np.isfinite(val):
        raise OracleUnavailable(f"non-finite directional derivative at {x!r}")
    return val


def _raw_gradient(obj, x):
    if obj.grad_fn is not None:
        g = np.asarray(obj.grad_fn(x), dtype=float)
    elif obj.dderiv_fn is not None:
        eye = np.eye(obj.dim)
        g = np.array([obj.dderiv_fn(x, eye[i]) for i in range(obj.dim)], dtype=float)
    else:
        g = fd_gradient(obj, x)
    if g.shape != (obj.dim,) or not np.all(np.isfinite(g)):
        raise OracleUnavailable(f"gradient unavailable or non-finite at {x!r}")
    return g


@dataclass(frozen=True)
class CallLedger:
    """Itemized oracle-call counts.

    ``check_calls`` is the part of ``instrumentation_calls`` spent on
    termination checks whose result did not feed an update. Adding it to
    ``total_counted`` gives the "everything charged" accounting variant.
    """

    sampling_calls: int = 0
    descent_calls: int = 0
    instrumentation_calls: int = 0
    check_calls: int = 0

    @property
    def total_counted(self):
        return self.sampling_calls + self.descent_calls

    @property
    def total_with_checks(self):
        return self.total_counted + self.check_calls


class Tab:
    """Calls made inside :meth:`CountedObjective.tentative`, awaiting a bucket."""

    def __init__(self):
        self.pending = 0
        self.settled = False


class CountedObjective:
    """Wraps an :class:`Objective` and charges every oracle call to a ledger bucket.

    Inside :meth:`tentative` calls are held back and charged at once when the
    caller decides what they were for (an update or only a check).
    """

    def __init__(self, inner, category="descent"):
        if category not in CATEGORIES:
            raise ValueError(f"unknown ledger category {category!r}")
        self.inner = inner
        self.category = category
        self._counts = dict.fromkeys(CATEGORIES, 0)
        self._check = 0
        self._tab = None

    @property
    def dim(self):
        return self.inner.dim

    def charge(self, n, category=None):
        if n < 0:
            raise ValueError("cannot charge a negative number of calls")
        if self._tab is not None:
            self._tab.pending += n
            return
        self._counts[category or self.category] += n

    @contextlib.contextmanager
    def charging(self, category):
        if category not in CATEGORIES:
            raise ValueError(f"unknown ledger category {category!r}")
        previous, self.category = self.category, category
        try:
            yield self
        finally:
            self.category = previous

    @contextlib.contextmanager
    def tentative(self):
        if self._tab is not None:
            raise RuntimeError("tentative blocks do not nest")
        tab = self._tab = Tab()
        try:
            yield tab
        finally:
            self._tab = None
            if not tab.settled:
                self._settle(tab, "instrumentation", check=True)

    def settle(self, tab, category, check=False):
        """Charge the calls held in ``tab``; ``check`` marks pure termination checks."""
        if tab.settled:
            raise RuntimeError("tab already settled")
        self._settle(tab, category, check)

    def _settle(self, tab, category, check):
        self._counts[category] += tab.pending
        if check and category == "instrumentation":
            self._check += tab.pending
        tab.settled = True

    @property
    def ledger(self):
        return ledger_snapshot(self)


def ledger_snapshot(cobj):
    c = cobj._counts
    return CallLedger(c["sampling"], c["descent"], c["instrumentation"], cobj._check)


def directional_derivative(cobj, point, direction):
    obj = cobj.inner
    x = as_point(point, obj.dim)
    u = as_direction(direction, obj.dim)
    val = _raw_directional(obj, x, u)
    cobj.charge(1)
    return val


def projected_gradient(cobj, point, basis):
    """``sum_j d_{u_j} f(x) u_j`` over the columns of ``basis``; costs one call per column."""
    obj = cobj.inner
    x = as_point(point, obj.dim)
    B = np.asarray(basis, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if obj.dderiv_fn is not None:
        coeffs = np.array([_raw_directional(obj, x, B[:, j]) for j in range(B.shape[1])])
    else:
        # one gradient evaluation serves all r inner products; the cost model still charges r
        g = _raw_gradient(obj, x)
        coeffs = B.T @ g
    cobj.charge(B.shape[1])
    return B @ coeffs


def full_gradient(cobj, point):
    obj = cobj.inner
    x = as_point(point, obj.dim)
    g = _raw_gradient(obj, x)
    cobj.charge(obj.dim)
    return g
