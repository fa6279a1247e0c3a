"""Rank analysis: spectra of sampled gradients, approximate-rank certificates,
and local Hessian-based subspaces with a fitted Taylor bound.

Everything here sits outside the oracle cost model and uses uncounted
gradients.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateSample, OracleUnavailable
from .oracle import as_point
from .subspace import Subspace, orthonormalize


class RankEstimate(NamedTuple):
    r: int
    spectrum: np.ndarray


def gradient_spectrum(obj, samples):
    """Singular values of the matrix of normalized gradients at ``samples``."""
    cols = []
    for x in samples:
        g = obj.gradient(as_point(x, obj.dim))
        n = np.linalg.norm(g)
        if n > 0:
            cols.append(g / n)
    if not cols:
        raise DegenerateSample("every sampled gradient is zero")
    return np.linalg.svd(np.column_stack(cols), compute_uv=False)


def estimate_rank(obj, samples, energy_tol=1e-8):
    """Smallest r whose leading squared singular values keep ``1 - energy_tol`` of the energy."""
    s = gradient_spectrum(obj, samples)
    energy = np.cumsum(s ** 2)
    r = int(np.searchsorted(energy, (1.0 - energy_tol) * energy[-1] * (1 - 1e-15)) + 1)
    return RankEstimate(min(r, s.size), s)


def normalized_energies(spectrum):
    """``sigma_i^2 / sum_j sigma_j^2``."""
    e = np.asarray(spectrum, dtype=float) ** 2
    return e / e.sum()


# --------------------------------------------------------------------------
# regions and certificates

@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    def sample(self, n, rng):
        c = np.asarray(self.center, dtype=float)
        d = rng.standard_normal((n, c.size))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        rad = self.radius * rng.uniform(size=(n, 1)) ** (1.0 / c.size)
        return c + rad * d

    def to_record(self):
        return {"kind": "ball", "center": [float(v) for v in self.center], "radius": float(self.radius)}


@dataclass(frozen=True)
class SampleList:
    points: tuple

    def sample(self, n, rng):
        return np.asarray(self.points, dtype=float)

    def to_record(self):
        return {"kind": "samples", "points": np.asarray(self.points, dtype=float).tolist()}


@dataclass(frozen=True)
class ApproxRankCertificate:
    r: int
    eta: float
    eps: float
    subspace: Subspace
    region: object
    n_samples: int
    seed: int
    worst_residual_slack: float

    @property
    def passed(self):
        return self.worst_residual_slack <= 0.0

    def to_record(self):
        return {
            "r": self.r,
            "eta": self.eta,
            "eps": self.eps,
            "subspace": self.subspace.basis.tolist(),
            "region": self.region.to_record(),
            "n_samples": self.n_samples,
            "seed": self.seed,
            "worst_residual_slack": self.worst_residual_slack,
            "passed": self.passed,
        }

    def to_json(self):
        return json.dumps(self.to_record(), sort_keys=True)


def verify_approx_rank(obj, S, region, eta, eps, n_samples=1000, seed=0):
    """Check ``|grad f - P_S grad f| <= eta |grad f| + eps`` at points drawn from ``region``."""
    if not 0 <= eta < 1:
        raise ValueError("eta must lie in [0, 1)")
    if not eps > 0:
        raise ValueError("eps must be positive")
    pts = region.sample(n_samples, np.random.default_rng(seed))
    B = S.basis
    Gs = np.array([obj.gradient(x) for x in pts])
    resid = np.linalg.norm(Gs - (Gs @ B) @ B.T, axis=1)
    worst = float(np.max(resid - (eta * np.linalg.norm(Gs, axis=1) + eps)))
    return ApproxRankCertificate(S.rank, float(eta), float(eps), S, region, len(pts), seed, float(worst))


# --------------------------------------------------------------------------
# local Hessian subspace

def hessian_estimate(obj, point, h=None):
    """Analytic Hessian when available, else central differences of the gradient; symmetrized."""
    x = as_point(point, obj.dim)
    if obj.hess_fn is not None:
        M = np.asarray(obj.hess_fn(x), dtype=float)
    else:
        if not obj.has_gradient:
            raise ValueError("hessian_estimate needs a gradient route")
        if h is None:
            h = 1e-4 * (1.0 + float(np.linalg.norm(x)))
        eye = np.eye(obj.dim)
        M = np.column_stack([(obj.gradient(x + h * e) - obj.gradient(x - h * e)) / (2 * h) for e in eye])
    if not np.all(np.isfinite(M)):
        raise OracleUnavailable(f"non-finite Hessian estimate at {x!r}")
    return 0.5 * (M + M.T)


class LocalSubspace(NamedTuple):
    subspace: Subspace
    sigma_r: float
    gradient_vanished: bool


def local_hessian_subspace(obj, point, r):
    """Span of the gradient at ``point`` and the top ``r-1`` Hessian singular vectors.

    When the gradient vanishes the top ``r`` singular vectors are used instead.
    """
    x = as_point(point, obj.dim)
    if not 1 <= r <= obj.dim:
        raise ValueError(f"r must lie in [1, {obj.dim}]")
    U, s, _ = np.linalg.svd(hessian_estimate(obj, x))
    g = obj.gradient(x)
    gn = np.linalg.norm(g)
    vanished = gn <= 1e-14 * max(1.0, s[0])
    if vanished:
        vectors = list(U[:, :r].T)
    else:
        vectors = [g / gn] + list(U[:, : r - 1].T)
    return LocalSubspace(orthonormalize(vectors), float(s[r - 1]), bool(vanished))


class LocalBoundFit(NamedTuple):
    fitted_M: float
    max_violation: float
    n_samples: int


def _local_residual(obj, center, B, sigma_r, x):
    g = obj.gradient(x)
    d = float(np.linalg.norm(x - center))
    return float(np.linalg.norm(g - B @ (B.T @ g))) - sigma_r * d, d


def check_local_bound(obj, point, S, sigma_r, radius, n_samples=2000, seed=0, M=None, refine=True):
    """Fit (or test) ``M`` in ``rho(theta) <= M |theta - center|^2`` over a ball.

    ``rho = |grad f - P_S grad f| - sigma_r |theta - center|``. Without ``M``
    the smallest admissible value is fitted on the sample (and, with
    ``refine``, pushed up by a local search for larger ratios), so the
    reported violation is zero. With ``M`` given, the sample is treated as
    held out and the largest ``rho - M d^2`` is reported.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    c = as_point(point, obj.dim)
    B = S.basis
    rng = np.random.default_rng(seed)
    pts = Ball(tuple(c), radius).sample(n_samples, rng)
    res = np.array([_local_residual(obj, c, B, sigma_r, x) for x in pts])
    rho, d = res[:, 0], res[:, 1]
    if M is not None:
        return LocalBoundFit(float(M), float(max(0.0, np.max(rho - M * d * d))), len(pts))

    def ratio(x):
        rh, dd = _local_residual(obj, c, B, sigma_r, x)
        return max(rh, 0.0) / (dd * dd) if dd > 0 else 0.0

    ratios = np.where(d > 0, np.maximum(rho, 0.0) / np.where(d > 0, d * d, 1.0), 0.0)
    fitted = float(np.max(ratios))
    if refine and fitted > 0:
        dmin = 1e-3 * radius
        for i in np.argsort(-ratios)[:5]:
            x, best, step = pts[i].copy(), ratios[i], 0.1 * radius
            fails = 0
            while step > 1e-6 * radius:
                y = x + step * rng.standard_normal(c.size) / np.sqrt(c.size)
                off = y - c
                n = np.linalg.norm(off)
                if n > radius:
                    y = c + off * (radius / n)
                elif n < dmin:
                    continue
                v = ratio(y)
                if v > best:
                    x, best, fails = y, v, 0
                else:
                    fails += 1
                    if fails >= 20:
                        step *= 0.5
                        fails = 0
            fitted = max(fitted, best)
    return LocalBoundFit(fitted, 0.0, len(pts))
