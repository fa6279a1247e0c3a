"""Orthonormal bases, thin SVD of tall-thin gradient matrices, projections."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateSample

ORTHO_TOL = 1e-10


def _fix_signs(Q, *others):
    """Flip columns so the first nonzero coordinate of each column is positive."""
    Q = Q.copy()
    others = [o.copy() for o in others]
    for j in range(Q.shape[1]):
        col = Q[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-14)
        if nz.size and col[nz[0]] < 0:
            Q[:, j] = -col
            for o in others:
                o[:, j] = -o[:, j]
    return (Q, *others) if others else Q


@dataclass(frozen=True)
class Subspace:
    """Span of the orthonormal columns of ``basis`` (shape p x r)."""

    basis: np.ndarray

    def __post_init__(self):
        B = np.array(self.basis, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if B.ndim != 2 or B.shape[1] < 1 or B.shape[1] > B.shape[0]:
            raise ValueError(f"basis must be p x r with 1 <= r <= p, got shape {B.shape}")
        gram = B.T @ B
        if np.max(np.abs(gram - np.eye(B.shape[1]))) > ORTHO_TOL:
            raise ValueError("basis columns are not orthonormal")
        B.setflags(write=False)
        object.__setattr__(self, "basis", B)

    @property
    def ambient_dim(self):
        return self.basis.shape[0]

    @property
    def rank(self):
        return self.basis.shape[1]

    def projector(self):
        return self.basis @ self.basis.T

    def project(self, v):
        return project(self, v)

    def __len__(self):
        return self.rank


def project(S, v):
    v = np.asarray(v, dtype=float)
    if v.shape[0] != S.ambient_dim:
        raise ValueError(f"vector has dimension {v.shape[0]}, subspace lives in {S.ambient_dim}")
    return S.basis @ (S.basis.T @ v)


def orthonormalize(vectors, drop_tol=None):
    """Modified Gram-Schmidt with one re-orthogonalization pass.

    Vectors whose residual against the partial basis has norm <= ``drop_tol``
    are dropped. The default tolerance is ``1e-10`` times the largest input norm.
    """
    V = [np.asarray(v, dtype=float).ravel() for v in vectors]
    if not V:
        raise DegenerateSample("no vectors to orthonormalize")
    norms = [np.linalg.norm(v) for v in V]
    if drop_tol is None:
        drop_tol = 1e-10 * max(norms)
    if max(norms) <= drop_tol:
        raise DegenerateSample("every input vector is below the drop tolerance")
    basis = []
    for v in V:
        w = v.copy()
        for _ in range(2):
            for q in basis:
                w -= np.dot(q, w) * q
        n = np.linalg.norm(w)
        if n > drop_tol:
            basis.append(w / n)
    if not basis:
        raise DegenerateSample("every residual is below the drop tolerance")
    return Subspace(_fix_signs(np.column_stack(basis)))


def jacobi_svd(A, tol=1e-15, max_sweeps=60):
    """One-sided (Hestenes) Jacobi SVD of a p x r matrix with r <= p.

    Returns ``(U, s, Vt)`` with ``s`` sorted descending. Columns of ``U`` that
    belong to zero singular values are left as zero vectors.
    """
    W = np.array(A, dtype=float)
    if W.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    p, r = W.shape
    V = np.eye(r)
    for _ in range(max_sweeps):
        rotated = False
        for i in range(r - 1):
            for j in range(i + 1, r):
                a = W[:, i] @ W[:, i]
                b = W[:, j] @ W[:, j]
                c = W[:, i] @ W[:, j]
                if c == 0.0 or abs(c) <= tol * np.sqrt(a * b):
                    continue
                rotated = True
                # tan of the rotation angle, written without forming (b - a) / (2c)
                d = b - a
                t = np.copysign(1.0, d) * 2.0 * c / (abs(d) + np.hypot(d, 2.0 * c))
                cs = 1.0 / np.sqrt(1.0 + t * t)
                sn = cs * t
                wi, wj = W[:, i].copy(), W[:, j].copy()
                W[:, i] = cs * wi - sn * wj
                W[:, j] = sn * wi + cs * wj
                vi, vj = V[:, i].copy(), V[:, j].copy()
                V[:, i] = cs * vi - sn * vj
                V[:, j] = sn * vi + cs * vj
        if not rotated:
            break
    s = np.linalg.norm(W, axis=0)
    order = np.argsort(-s, kind="stable")
    s, W, V = s[order], W[:, order], V[:, order]
    U = np.zeros_like(W)
    nz = s > 0
    U[:, nz] = W[:, nz] / s[nz]
    return U, s, V.T


@dataclass(frozen=True)
class GradientMatrix:
    """Normalized sampled gradients ``[g_1/|g_1|, ..., g_r/|g_r|]``."""

    columns: np.ndarray
    raw_norms: np.ndarray
    singular_values: np.ndarray

    @classmethod
    def from_gradients(cls, gradients):
        G = np.column_stack([np.asarray(g, dtype=float) for g in gradients])
        norms = np.linalg.norm(G, axis=0)
        if np.any(norms == 0):
            raise DegenerateSample("cannot normalize a zero gradient")
        cols = G / norms
        _, s, _ = jacobi_svd(cols)
        return cls(cols, norms, s)

    @property
    def shape(self):
        return self.columns.shape

    @property
    def sigma_r(self):
        return float(self.singular_values[-1])


class LeftBasis(NamedTuple):
    subspace: Subspace
    singular_values: np.ndarray
    rank_deficient: bool


def svd_left_basis(G, rank_tol=1e-12):
    """Span of the left singular vectors of ``G`` (a GradientMatrix or p x r array).

    When ``sigma_r`` falls below ``rank_tol * max(1, sigma_1)`` only the
    numerical-rank part of the basis is returned and ``rank_deficient`` is set.
    """
    M = G.columns if isinstance(G, GradientMatrix) else np.asarray(G, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.shape[1] < 1 or not np.all(np.isfinite(M)):
        raise ValueError("G must have at least one finite column")
    U, s, _ = jacobi_svd(M)
    cutoff = rank_tol * max(1.0, float(s[0]))
    k = int(np.sum(s > cutoff))
    if k == 0:
        raise DegenerateSample("gradient matrix is numerically zero")
    return LeftBasis(Subspace(_fix_signs(U[:, :k])), s, k < M.shape[1])


def smallest_singular(G):
    M = G.columns if isinstance(G, GradientMatrix) else np.asarray(G, dtype=float)
    _, s, _ = jacobi_svd(M)
    return float(s[-1])


def principal_angle_gap(S1, S2):
    """Operator norm of the difference of the two orthogonal projectors."""
    if S1.ambient_dim != S2.ambient_dim:
        raise ValueError("subspaces live in different ambient dimensions")
    return float(np.linalg.norm(S1.projector() - S2.projector(), ord=2))
