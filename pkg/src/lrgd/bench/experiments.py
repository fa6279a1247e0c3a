"""Experiment runners behind the ``lrgd-bench`` subcommands.

Each runner takes a parsed config dict, writes delimited files into an
output directory and returns the rows it wrote. Cells are independent and
may run in a process pool; rows are always emitted in grid order.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from ..algorithms import (
    AlgoConfig,
    GradNorm,
    PLSuboptimality,
    SamplerSpec,
    SuboptimalityGap,
    gd,
    iterated_lrgd,
    lrgd,
    adaptive_lrgd,
    theoretical_budget,
)
from ..errors import DivergenceError, SpecError
from ..functions import get_profile, make_quadratic, make_ridge, parse_function_spec
from ..oracle import CountedObjective
from ..rank import Ball, gradient_spectrum, normalized_energies

ENGINES = {"gd": gd, "lrgd": lrgd, "iterated": iterated_lrgd, "adaptive": adaptive_lrgd}


def fmt(v):
    """Deterministic text for a CSV cell (shortest round-trip repr for floats)."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return json.dumps([float(x) for x in v])
    return str(v)


@dataclass
class ResultRow:
    objective: str
    algorithm: str
    theta0: list
    alpha: float
    eps: float
    threshold: float
    mu: float
    converged: bool
    status: str
    iterations: int
    sampling_calls: int
    descent_calls: int
    total_counted: int
    instrumentation_calls: int
    full_accounting_calls: int
    final_f: float
    final_grad_norm: float
    final_point: list
    theoretical_budget: float


def row_from_report(rep, objective, theta0, alpha, eps, threshold=None, mu=None, budget=None):
    led = rep.ledger
    return ResultRow(
        objective, rep.algorithm, list(theta0), alpha, eps, threshold, mu, rep.converged,
        "ok" if rep.converged else "max_iters", rep.iterations, led.sampling_calls,
        led.descent_calls, led.total_counted, led.instrumentation_calls, led.total_with_checks,
        rep.final_f, rep.final_grad_norm, list(rep.final_point), budget,
    )


def diverged_row(objective, algorithm, theta0, alpha, eps, threshold=None, mu=None):
    return ResultRow(objective, algorithm, list(theta0), alpha, eps, threshold, mu, False, "diverged",
                     0, 0, 0, 0, 0, 0, float("nan"), float("nan"), [], None)


def write_rows(path, rows, columns, delimiter=","):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter)  # RFC 4180: CRLF line endings
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_result_rows(path, rows, delimiter=","):
    cols = [f.name for f in fields(ResultRow)]
    write_rows(path, [[getattr(r, c) for c in cols] for r in rows], cols, delimiter)


def _map(fn, cells, jobs):
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, cells))
    return [fn(c) for c in cells]


def _ext(fmt_name):
    return ("tsv", "\t") if fmt_name == "tsv" else ("csv", ",")


# --------------------------------------------------------------------------
# table

def _table_cell(cell):
    L, theta0, factor, algo, c = cell
    obj = make_quadratic(np.diag([float(L), 1.0]))
    alpha = 1.0 / (factor * L)
    rule = PLSuboptimality(c["guard_mu"], c["eps"])
    max_iters = c["lrgd_max_iters"] if algo == "lrgd" else c["max_iters"]
    cfg = AlgoConfig(stepsize_alpha=alpha, target_eps=c["eps"], termination=rule, rank_r=c["rank"],
                     max_iters=max_iters, sampler=SamplerSpec(seed=c["seed"]))
    name = f"diag({L:g},1)"
    try:
        rep = ENGINES[algo](CountedObjective(obj), theta0, cfg)
    except DivergenceError:
        return diverged_row(name, algo, theta0, alpha, c["eps"], rule.threshold, rule.mu)
    return row_from_report(rep, name, theta0, alpha, c["eps"], rule.threshold, rule.mu)


def run_table_experiment(cfg, out_dir, fmt_name="csv", jobs=1):
    """Grid over (alpha factor, theta0, L, algorithm); writes ``table.<ext>``."""
    for key in ("hessian_L", "thetas", "alpha_factors", "algorithms"):
        if not cfg[key]:
            raise SpecError(f"{key} must be non-empty")
    unknown = set(cfg["algorithms"]) - set(ENGINES)
    if unknown:
        raise SpecError(f"unknown algorithms {sorted(unknown)}")
    cells = [
        (L, tuple(th), fac, algo, cfg)
        for fac in cfg["alpha_factors"]
        for th in cfg["thetas"]
        for L in cfg["hessian_L"]
        for algo in cfg["algorithms"]
    ]
    rows = _map(_table_cell, cells, jobs)
    ext, delim = _ext(fmt_name)
    os.makedirs(out_dir, exist_ok=True)
    write_result_rows(os.path.join(out_dir, f"table.{ext}"), rows, delim)
    return rows


def format_table(rows, cfg):
    """Aligned text, one block per alpha factor: ``gd_calls (iterated_calls)`` per cell."""
    index = {(r.objective, tuple(r.theta0), r.alpha, r.algorithm): r for r in rows}
    out = []
    for fac in cfg["alpha_factors"]:
        out.append(f"alpha = 1/({fac}L), eps = {cfg['eps']:g}")
        head = ["theta0"] + [f"diag({L:g},1)" for L in cfg["hessian_L"]]
        lines = [head]
        for th in cfg["thetas"]:
            line = [f"({th[0]:.2f}, {th[1]:.2f})"]
            for L in cfg["hessian_L"]:
                key = (f"diag({L:g},1)", tuple(th), 1.0 / (fac * L))
                g = index.get(key + ("gd",))
                it = index.get(key + ("iterated",))
                cell = f"{g.total_counted}" if g else "-"
                if it:
                    cell += f" ({it.total_counted})"
                line.append(cell)
            lines.append(line)
        widths = [max(len(l[i]) for l in lines) for i in range(len(head))]
        out.extend("  ".join(s.rjust(w) for s, w in zip(l, widths)) for l in lines)
        out.append("")
    return "\n".join(out)


# --------------------------------------------------------------------------
# trajectory

def run_trajectory_experiment(cfg, out_dir, fmt_name="csv", jobs=1):
    """Per-iteration traces (delimited + gnuplot ``.dat``), phase marks and a summary."""
    obj = parse_function_spec(cfg["objective"])
    theta0 = np.asarray(cfg["theta0"], dtype=float)
    rule = GradNorm(cfg["threshold"])
    acfg = AlgoConfig(stepsize_alpha=cfg["alpha"], target_eps=cfg["eps"], termination=rule,
                      rank_r=cfg["rank"], max_iters=cfg["max_iters"], record_trace=True,
                      sampler=SamplerSpec(seed=cfg["seed"]))
    ext, delim = _ext(fmt_name)
    os.makedirs(out_dir, exist_ok=True)
    p = obj.dim
    cols = ["iter"] + [f"theta_{i}" for i in range(p)] + ["f", "grad_norm", "cum_counted_calls", "phase"]
    summary, phase_rows = [], []
    for algo in cfg["algorithms"]:
        if algo not in ENGINES:
            raise SpecError(f"unknown algorithm {algo!r}")
        rep = ENGINES[algo](CountedObjective(obj), theta0, acfg)
        t = rep.trace
        rows = [
            [k, *t.iterates[k], t.f_values[k], t.grad_norms[k], t.counted_calls[k], t.phases[k]]
            for k in range(len(t.iterates))
        ]
        write_rows(os.path.join(out_dir, f"trajectory_{algo}.{ext}"), rows, cols, delim)
        with open(os.path.join(out_dir, f"trajectory_{algo}.dat"), "w", encoding="utf-8") as fh:
            fh.write("# " + " ".join(cols) + "\n")
            prev = None
            for row in rows:
                if prev is not None and row[-1] != prev:
                    fh.write("\n\n")  # new gnuplot data block per phase
                fh.write(" ".join(fmt(v) for v in row) + "\n")
                prev = row[-1]
        for it, label in rep.phase_marks:
            phase_rows.append([algo, it, label])
        led = rep.ledger
        summary.append([algo, rep.iterations, led.total_counted, led.total_with_checks,
                        led.sampling_calls, led.descent_calls, led.instrumentation_calls,
                        rep.phases, rep.converged, rep.final_f])
    write_rows(os.path.join(out_dir, f"phases.{ext}"), phase_rows, ["algorithm", "iteration", "label"], delim)
    write_rows(os.path.join(out_dir, f"summary.{ext}"), summary,
               ["algorithm", "iterations", "total_counted", "full_accounting_calls", "sampling_calls",
                "descent_calls", "instrumentation_calls", "phases", "converged", "final_f"], delim)
    return summary


# --------------------------------------------------------------------------
# scaling

def embedded_ridge(p, r, kappa, seed=0):
    """Rank-r quadratic ridge whose restriction does not depend on p.

    ``A`` has orthonormal rows and the profile weights run geometrically from
    1 to kappa, so the restricted function is the same r-dimensional
    quadratic for every p. Returns ``(objective, theta0)`` with
    ``A theta0 = (1, ..., 1)``.
    """
    rng = np.random.default_rng([seed, p, r])
    q, _ = np.linalg.qr(rng.standard_normal((p, r)))
    A = q.T
    w = np.geomspace(1.0, kappa, r) if r > 1 else np.ones(1)
    obj = make_ridge(A, get_profile("quadratic", r, w), name=f"embedded{p}x{r}")
    z = rng.standard_normal(p)
    theta0 = A.T @ np.ones(r) + (z - A.T @ (A @ z))
    return obj, theta0


def _scaling_cell(cell):
    p, r, eps, algo, c = cell
    obj, theta0 = embedded_ridge(p, r, c["kappa"], c["seed"])
    alpha = 1.0 / obj.smoothness_L
    rule = SuboptimalityGap(0.0, eps)
    acfg = AlgoConfig(stepsize_alpha=alpha, target_eps=eps, termination=rule, rank_r=r,
                      max_iters=c["max_iters"], sampler=SamplerSpec(seed=c["seed"]))
    delta0 = obj(theta0)
    budget = theoretical_budget("exactSC", r=r, p=p, delta0=delta0, eps=eps,
                                kappa=obj.smoothness_L / obj.restricted_mu)
    try:
        rep = ENGINES[algo](CountedObjective(obj), theta0, acfg)
    except DivergenceError:
        return diverged_row(obj.name, algo, theta0, alpha, eps)
    return row_from_report(rep, obj.name, theta0, alpha, eps, None, obj.restricted_mu, budget)


def run_scaling_experiment(cfg, out_dir, fmt_name="csv", jobs=1):
    """GD and LRGD over the (p, r, eps) grid; adds the LRGD/GD counted-call ratio."""
    cells = [
        (p, r, eps, algo, cfg)
        for p in cfg["p"]
        for r in cfg["r"]
        if r <= p
        for eps in cfg["eps"]
        for algo in ("gd", "lrgd")
    ]
    if not cells:
        raise SpecError("scaling grid is empty")
    rows = _map(_scaling_cell, cells, jobs)
    out = []
    for cell, g_row, l_row in zip(cells[0::2], rows[0::2], rows[1::2]):
        p, r = cell[0], cell[1]
        ratio = l_row.total_counted / g_row.total_counted if g_row.total_counted else float("nan")
        for row in (g_row, l_row):
            out.append([row.objective, row.algorithm, p, r, row.eps,
                        row.converged, row.status, row.iterations, row.sampling_calls, row.descent_calls,
                        row.total_counted, row.instrumentation_calls, row.final_f,
                        row.theoretical_budget, ratio])
    ext, delim = _ext(fmt_name)
    os.makedirs(out_dir, exist_ok=True)
    write_rows(os.path.join(out_dir, f"scaling.{ext}"), out,
               ["objective", "algorithm", "p", "r", "eps", "converged", "status", "iterations",
                "sampling_calls", "descent_calls", "total_counted", "instrumentation_calls", "final_f",
                "theoretical_budget", "lrgd_over_gd"], delim)
    return out


# --------------------------------------------------------------------------
# spectrum

def run_rank_spectrum(cfg, out_dir, fmt_name="csv", jobs=1):
    """``(index, sigma_i^2 / sum sigma_j^2)`` for gradients sampled in a ball."""
    obj = parse_function_spec(cfg["objective"])
    center = cfg.get("center") or [0.0] * obj.dim
    pts = Ball(tuple(center), cfg["radius"]).sample(cfg["n_samples"], np.random.default_rng(cfg["seed"]))
    energies = normalized_energies(gradient_spectrum(obj, pts))
    rows = [[i + 1, e] for i, e in enumerate(energies)]
    ext, delim = _ext(fmt_name)
    os.makedirs(out_dir, exist_ok=True)
    write_rows(os.path.join(out_dir, f"spectrum.{ext}"), rows, ["index", "normalized_sq_singular_value"], delim)
    return rows
