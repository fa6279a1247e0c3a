"""Descent engines: gradient descent, LRGD, iterated and adaptive LRGD.

All engines talk to the objective through a :class:`CountedObjective`, so
every derivative they consume is charged. Termination checks run inside a
tentative block: when the check passes (or its result is otherwise unused)
the calls land in the instrumentation bucket, and when the same evaluation
feeds the next update they are charged as descent work instead.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import DegenerateSample, DivergenceError, StalledResidual
from .oracle import (
    CallLedger,
    CountedObjective,
    _raw_gradient,
    as_point,
    eval_objective,
    full_gradient,
    projected_gradient,
)
from .subspace import GradientMatrix, Subspace, orthonormalize, svd_left_basis


# --------------------------------------------------------------------------
# termination rules

def _positive(name, value):
    if not (value > 0 and math.isfinite(value)):
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class GradNorm:
    """Stop when ``|grad f| <= threshold``."""

    threshold: float

    def __post_init__(self):
        _positive("threshold", self.threshold)


@dataclass(frozen=True)
class PLSuboptimality:
    """Stop when ``|grad f| <= sqrt(2 mu eps)``, which certifies ``f - f* <= eps`` under PL."""

    mu: float
    eps: float

    def __post_init__(self):
        _positive("mu", self.mu)
        _positive("eps", self.eps)

    @property
    def threshold(self):
        return math.sqrt(2.0 * self.mu * self.eps)


@dataclass(frozen=True)
class ProjGradNorm:
    """Stop when the projected gradient has norm strictly below ``threshold``."""

    threshold: float

    def __post_init__(self):
        _positive("threshold", self.threshold)


@dataclass(frozen=True)
class SuboptimalityGap:
    """Stop when ``f - f_star <= eps``; costs no oracle calls."""

    f_star: float
    eps: float

    def __post_init__(self):
        _positive("eps", self.eps)


TerminationRule = Union[GradNorm, PLSuboptimality, ProjGradNorm, SuboptimalityGap]


def is_satisfied(rule, obj, point, basis=None):
    """Uncounted re-check of ``rule`` at ``point`` (used to audit reports)."""
    x = as_point(point, obj.dim)
    if isinstance(rule, SuboptimalityGap):
        return eval_objective(obj, x) - rule.f_star <= rule.eps
    g = obj.gradient(x)
    if isinstance(rule, ProjGradNorm):
        if basis is not None:
            B = np.asarray(basis)
            g = B @ (B.T @ g)
        return float(np.linalg.norm(g)) < rule.threshold
    return float(np.linalg.norm(g)) <= rule.threshold


# --------------------------------------------------------------------------
# configuration and reports

@dataclass(frozen=True)
class SamplerSpec:
    """Isotropic Gaussian ``center + scale * N(0, I)``; ``center=None`` means theta0."""

    scale: float = 1.0
    seed: int = 0
    center: Optional[tuple] = None

    def __post_init__(self):
        _positive("scale", self.scale)


@dataclass(frozen=True)
class AlgoConfig:
    stepsize_alpha: float
    target_eps: float
    termination: Optional[TerminationRule] = None
    rank_r: Optional[int] = None
    max_iters: int = 10000
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    resample_limit: int = 20
    grad_floor_eps_prime: float = 1e-8
    inner_termination: Optional[TerminationRule] = None
    schedule: str = "arithmetic"
    record_trace: bool = False
    report_best: bool = False
    divergence_window: int = 10
    drop_tol: Optional[float] = None

    def __post_init__(self):
        _positive("stepsize_alpha", self.stepsize_alpha)
        _positive("target_eps", self.target_eps)
        _positive("grad_floor_eps_prime", self.grad_floor_eps_prime)
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.rank_r is not None and self.rank_r < 1:
            raise ValueError("rank_r must be at least 1")
        if self.resample_limit < 0:
            raise ValueError("resample_limit must be nonnegative")
        if self.schedule not in ("arithmetic", "geometric"):
            raise ValueError(f"unknown rank schedule {self.schedule!r}")

    @property
    def rule(self):
        return self.termination if self.termination is not None else GradNorm(self.target_eps)


@dataclass
class RunTrace:
    """Per-iterate record; gradient norms are paid for from the instrumentation bucket."""

    iterates: list = field(default_factory=list)
    f_values: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    counted_calls: list = field(default_factory=list)
    phases: list = field(default_factory=list)
    phase_marks: list = field(default_factory=list)
    subspaces: list = field(default_factory=list)


@dataclass(frozen=True)
class RunReport:
    algorithm: str
    final_point: np.ndarray
    final_f: float
    converged: bool
    iterations: int
    ledger: CallLedger
    delta0: Optional[float]
    final_grad_norm: float
    phases: int = 0
    phase_marks: tuple = ()
    subspace: Optional[Subspace] = None
    gradient_matrix: Optional[GradientMatrix] = None
    trace: Optional[RunTrace] = None


class _OutOfIterations(Exception):
    pass


class _Run:
    """Mutable state shared by the engines: iterate, divergence watch, trace."""

    def __init__(self, cobj, theta0, cfg, name):
        if not isinstance(cobj, CountedObjective):
            raise TypeError("engines need a CountedObjective")
        self.cobj = cobj
        self.obj = cobj.inner
        self.cfg = cfg
        self.name = name
        self.theta = as_point(theta0, self.obj.dim).copy()
        self.f = eval_objective(self.obj, self.theta)
        self.f0 = self.f
        self.updates = 0
        self.rises = 0
        self.best = None
        self.phase_marks = []
        self.trace = RunTrace() if cfg.record_trace else None
        self.label = "init"
        self.record()

    def record(self):
        if self.trace is None:
            return
        g = _raw_gradient(self.obj, self.theta)
        self.cobj.charge(self.obj.dim, "instrumentation")
        t = self.trace
        t.iterates.append(self.theta.copy())
        t.f_values.append(self.f)
        t.grad_norms.append(float(np.linalg.norm(g)))
        t.counted_calls.append(self.cobj.ledger.total_counted)
        t.phases.append(self.label)

    def mark(self, label):
        self.phase_marks.append((self.updates, label))
        if self.trace is not None:
            self.trace.phase_marks.append((self.updates, label))

    def note(self, gnorm):
        if self.best is None or gnorm < self.best[0]:
            self.best = (gnorm, self.theta.copy(), self.f)

    @property
    def exhausted(self):
        return self.updates >= self.cfg.max_iters

    def step(self, direction):
        if self.exhausted:
            raise _OutOfIterations
        alpha = self.cfg.stepsize_alpha
        new = self.theta - alpha * direction
        f_new = eval_objective(self.obj, new)
        self.rises = self.rises + 1 if f_new > self.f else 0
        if self.rises >= self.cfg.divergence_window:
            raise DivergenceError(alpha, self.obj.smoothness_L, self.updates + 1)
        self.theta, self.f = new, f_new
        self.updates += 1
        self.record()

    def guard(self, rule, reuse):
        """Evaluate an outer rule. Returns ``(passed, gradient or None)``.

        A failing check's gradient is charged as descent work when ``reuse``
        says the caller will step along it, otherwise it stays a check.
        """
        if isinstance(rule, SuboptimalityGap):
            passed = self.f - rule.f_star <= rule.eps
            if passed or not reuse:
                return passed, None
            if self.exhausted:
                raise _OutOfIterations
            with self.cobj.charging("descent"):
                return False, full_gradient(self.cobj, self.theta)
        with self.cobj.tentative() as tab:
            g = full_gradient(self.cobj, self.theta)
            gn = float(np.linalg.norm(g))
            self.note(gn)
            if isinstance(rule, ProjGradNorm):
                passed = gn < rule.threshold
            else:
                passed = gn <= rule.threshold
            if passed or not reuse or self.exhausted:
                self.cobj.settle(tab, "instrumentation", check=True)
            else:
                self.cobj.settle(tab, "descent")
        if not passed and reuse and self.exhausted:
            raise _OutOfIterations
        return passed, g

    def projected(self, basis, threshold):
        """Tentative projected gradient; ``None`` when its norm drops below ``threshold``."""
        with self.cobj.tentative() as tab:
            h = projected_gradient(self.cobj, self.theta, basis)
            if threshold is not None and float(np.linalg.norm(h)) < threshold:
                self.cobj.settle(tab, "instrumentation", check=True)
                return None
            if self.exhausted:
                self.cobj.settle(tab, "instrumentation", check=True)
                raise _OutOfIterations
            self.cobj.settle(tab, "descent")
        return h

    def report(self, converged, **extra):
        theta, f = self.theta, self.f
        if self.cfg.report_best and not converged and self.best is not None:
            _, theta, f = self.best
        fs = self.obj.f_star
        return RunReport(
            algorithm=self.name,
            final_point=theta.copy(),
            final_f=f,
            converged=converged,
            iterations=self.updates,
            ledger=self.cobj.ledger,
            delta0=None if fs is None else self.f0 - fs,
            final_grad_norm=float(np.linalg.norm(self.obj.gradient(theta))),
            phase_marks=tuple(self.phase_marks),
            trace=self.trace,
            **extra,
        )


def _threshold(rule):
    if isinstance(rule, SuboptimalityGap):
        raise ValueError("this engine needs a gradient-norm rule (GradNorm, PLSuboptimality or ProjGradNorm)")
    return rule.threshold


def _inner_threshold(cfg):
    rule = cfg.inner_termination
    if rule is None:
        return _threshold(cfg.rule)
    return _threshold(rule)


# --------------------------------------------------------------------------
# engines

def gd(cobj, theta0, cfg):
    """Plain gradient descent; each update costs one full gradient (p calls)."""
    L = cobj.inner.smoothness_L
    if L is not None and cfg.stepsize_alpha > 1.0 / L * (1 + 1e-12):
        warnings.warn(f"stepsize {cfg.stepsize_alpha!r} exceeds 1/L = {1.0 / L!r}", RuntimeWarning, stacklevel=2)
    run = _Run(cobj, theta0, cfg, "gd")
    run.label = "gd"
    rule = cfg.rule
    try:
        while True:
            if isinstance(rule, ProjGradNorm):
                rule = GradNorm(rule.threshold)
            passed, g = run.guard(rule, reuse=True)
            if passed:
                return run.report(True)
            run.step(g)
    except _OutOfIterations:
        return run.report(False)


def _sample_points(cfg, center, rng):
    c = np.asarray(cfg.sampler.center if cfg.sampler.center is not None else center, dtype=float)
    while True:
        yield c + cfg.sampler.scale * rng.standard_normal(c.size)


def estimate_active_subspace(cobj, cfg, center=None):
    """Sample r gradients, normalize them and return (dominant left singular span, G).

    Gradients no larger than ``grad_floor_eps_prime`` are redrawn; more than
    ``resample_limit`` redraws raises :class:`DegenerateSample`.
    """
    r = cfg.rank_r
    if r is None:
        raise ValueError("rank_r is required")
    p = cobj.dim
    if r > p:
        raise ValueError(f"rank_r={r} exceeds the dimension {p}")
    if center is None and cfg.sampler.center is None:
        center = np.zeros(p)
    rng = np.random.default_rng(cfg.sampler.seed)
    points = _sample_points(cfg, center, rng)
    grads, redraws = [], 0
    with cobj.charging("sampling"):
        while len(grads) < r:
            g = full_gradient(cobj, next(points))
            if np.linalg.norm(g) > cfg.grad_floor_eps_prime:
                grads.append(g)
                continue
            redraws += 1
            if redraws > cfg.resample_limit:
                raise DegenerateSample(
                    f"{redraws} sampled gradients fell below eps'={cfg.grad_floor_eps_prime!r}"
                )
    G = GradientMatrix.from_gradients(grads)
    return svd_left_basis(G).subspace, G


def lrgd(cobj, theta0, cfg, subspace=None):
    """Low-rank gradient descent: estimate an r-dimensional subspace once, then
    step along the projected gradient (r directional derivatives per update).

    Passing ``subspace`` skips estimation (and its p*r sampling cost).
    """
    G = None
    if subspace is None:
        subspace, G = estimate_active_subspace(cobj, cfg, center=theta0)
    run = _Run(cobj, theta0, cfg, "lrgd")
    run.label = "subspace"
    if run.trace is not None:
        run.trace.subspaces.append(subspace)
    B = subspace.basis
    rule = cfg.rule
    try:
        while True:
            if isinstance(rule, ProjGradNorm):
                h = run.projected(B, rule.threshold)
                if h is None:
                    return run.report(True, subspace=subspace, gradient_matrix=G)
            else:
                passed, _ = run.guard(rule, reuse=False)
                if passed:
                    return run.report(True, subspace=subspace, gradient_matrix=G)
                if run.exhausted:
                    raise _OutOfIterations
                h = run.projected(B, None)
            run.step(h)
    except _OutOfIterations:
        return run.report(False, subspace=subspace, gradient_matrix=G)


def iterated_lrgd(cobj, theta0, cfg):
    """Alternate r full-gradient steps with subspace descent on their span.

    Each phase: check the outer rule, take r gradient steps (the guard's
    gradient feeds the first), orthonormalize those r gradients at no extra
    cost, then descend along projected gradients until their norm drops
    below the inner threshold.
    """
    r = cfg.rank_r
    if r is None:
        raise ValueError("rank_r is required")
    outer = cfg.rule
    _threshold(outer)
    inner = _inner_threshold(cfg)
    run = _Run(cobj, theta0, cfg, "iterated")
    phases = 0
    subspace = None
    try:
        while True:
            passed, g = run.guard(outer, reuse=True)
            if passed:
                return run.report(True, phases=phases, subspace=subspace)
            phases += 1
            run.label = "gd"
            run.mark(f"phase{phases}:gd")
            grads = [g]
            run.step(g)
            with cobj.charging("descent"):
                for _ in range(r - 1):
                    if run.exhausted:
                        raise _OutOfIterations
                    g = full_gradient(cobj, run.theta)
                    grads.append(g)
                    run.step(g)
            try:
                subspace = orthonormalize(grads, drop_tol=cfg.drop_tol)
            except DegenerateSample:
                if cfg.drop_tol is None:
                    raise
                continue
            if run.trace is not None:
                run.trace.subspaces.append(subspace)
            run.label = "subspace"
            run.mark(f"phase{phases}:subspace")
            while True:
                h = run.projected(subspace.basis, inner)
                if h is None:
                    break
                run.step(h)
    except _OutOfIterations:
        return run.report(False, phases=phases, subspace=subspace)


def adaptive_lrgd(cobj, theta0, cfg):
    """Grow an orthonormal set one residual direction at a time.

    Starts from the normalized initial gradient, descends on the current
    span, then probes the full gradient (charged to sampling) and appends its
    component outside the span. The ``geometric`` schedule doubles the rank
    per round by stepping along each probe and probing again.
    """
    outer = cfg.rule
    thr = _threshold(outer)
    inner = _inner_threshold(cfg)
    run = _Run(cobj, theta0, cfg, "adaptive")
    p = cobj.dim

    def probe():
        with cobj.charging("sampling"):
            g = full_gradient(cobj, run.theta)
        gn = float(np.linalg.norm(g))
        run.note(gn)
        return g, gn

    def done(gn):
        return gn < thr if isinstance(outer, ProjGradNorm) else gn <= thr

    g, gn = probe()
    if done(gn):
        return run.report(True, phases=0)
    U = [g / gn]
    drop = cfg.drop_tol if cfg.drop_tol is not None else 1e-10 * max(1.0, gn)
    rounds = 0
    try:
        while True:
            rounds += 1
            run.label = f"rank{len(U)}"
            run.mark(f"rank{len(U)}")
            B = np.column_stack(U)
            if run.trace is not None:
                run.trace.subspaces.append(Subspace(B))
            while True:
                h = run.projected(B, inner)
                if h is None:
                    break
                run.step(h)
            g, gn = probe()
            if done(gn):
                return run.report(True, phases=rounds, subspace=Subspace(B))
            target = len(U) + 1 if cfg.schedule == "arithmetic" else 2 * len(U)
            target = min(target, p)
            grown = 0
            while True:
                resid = g - B @ (B.T @ g)
                resid -= B @ (B.T @ resid)  # second pass keeps the set orthonormal
                rn = float(np.linalg.norm(resid))
                if rn <= drop or len(U) >= p:
                    if grown == 0:
                        raise StalledResidual(
                            f"residual norm {rn:.3e} with |grad f|={gn:.3e} above threshold {thr:.3e}"
                        )
                    break
                U.append(resid / rn)
                B = np.column_stack(U)
                grown += 1
                if len(U) >= target:
                    break
                # geometric schedule: step along the probe (already paid for), then probe again
                run.step(g)
                g, gn = probe()
                if done(gn):
                    return run.report(True, phases=rounds, subspace=Subspace(B))
    except _OutOfIterations:
        return run.report(False, phases=rounds, subspace=Subspace(np.column_stack(U)))


# --------------------------------------------------------------------------
# complexity budgets and hypotheses of the approximate-rank guarantees

SETTINGS = ("exactSC", "approxSC", "exactNC", "approxNC")


def theoretical_budget(setting, *, r, p, delta0, eps, kappa=None, L=None):
    """Oracle-call budget (natural log) for one of the four guarantee settings.

    ``exactSC``: kappa r ln(delta0/eps) + p r; ``approxSC``: 16 kappa r
    ln(2 delta0/eps) + p r; ``exactNC``: 2 r L delta0/eps^2 + p r;
    ``approxNC``: 72 r L delta0/eps^2 + p r.
    """
    if setting not in SETTINGS:
        raise ValueError(f"unknown setting {setting!r}; expected one of {SETTINGS}")
    for name, v in (("r", r), ("p", p), ("eps", eps)):
        _positive(name, v)
    if delta0 < 0:
        raise ValueError("delta0 must be nonnegative")
    base = p * r
    if setting.endswith("SC"):
        if kappa is None:
            raise ValueError("kappa is required for strongly convex settings")
        _positive("kappa", kappa)
        if setting == "exactSC":
            if not delta0 > eps:
                raise ValueError("delta0 must exceed eps")
            return kappa * r * math.log(delta0 / eps) + base
        if not 2 * delta0 > eps:
            raise ValueError("2*delta0 must exceed eps")
        return 16 * kappa * r * math.log(2 * delta0 / eps) + base
    if L is None:
        raise ValueError("L is required for non-convex settings")
    _positive("L", L)
    factor = 2 if setting == "exactNC" else 72
    return factor * r * L * delta0 / eps ** 2 + base


def approx_condition_lhs(setting, eta, eps, eps_prime, sigma_r, r, mu=None):
    """Left-hand side of the sigma_r condition; compare against ``1/sqrt(10)``."""
    if not sigma_r > 0:
        raise ValueError("sigma_r must be positive")
    head = eta * (1 + 2 * r / sigma_r)
    if setting == "approxSC":
        if mu is None:
            raise ValueError("mu is required for approxSC")
        return head + 2 * r / (sigma_r * eps_prime) * math.sqrt(mu * eps / 5)
    if setting == "approxNC":
        return head + 2 * r * eps / (3 * sigma_r * eps_prime)
    raise ValueError(f"conditions exist only for approxSC and approxNC, got {setting!r}")


def check_approx_conditions(setting, eta, eps, eps_prime, sigma_r, r, mu=None):
    return approx_condition_lhs(setting, eta, eps, eps_prime, sigma_r, r, mu) <= 1 / math.sqrt(10)


def eta_tilde(eta, eps_tilde, eps_prime, sigma_r, r):
    """Relative factor in ``|hat grad - grad| <= eta_tilde |grad| + eps_tilde``."""
    return eta + 2 * r * (eta + eps_tilde / eps_prime) / sigma_r


def default_stepsize(obj, setting="exact"):
    """``1/L`` for exact-rank settings, ``1/(8L)`` for approximate ones."""
    if obj.smoothness_L is None:
        raise ValueError("objective has no smoothness constant")
    return 1.0 / obj.smoothness_L if setting.startswith("exact") else 1.0 / (8 * obj.smoothness_L)
