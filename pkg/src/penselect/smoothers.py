"""Selection among linear estimators y -> A y.

Each smoother matrix A induces an approximation space spanned by the
directions of its range that A reproduces well: the right-singular vectors of
``A^+ - P`` (inverse of A restricted to its range, minus the projection of the
range of A onto the range of A*) carrying singular values below 1.  Selection
then runs the penalized criterion with weights ``a * max(1, dim)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .selection import EstimatorCandidate, SelectionConfig, SelectionReport, select
from .spaces import ModelSpace, registry_build

RANK_TOL_FACTOR = 1e-10
UNIT_SV_TOL = 1e-10


@dataclass(frozen=True)
class LinearSmoother:
    """A label plus the n x n matrix applied to the observation vector."""

    id: str
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError(f"smoother {self.id!r} must be square")
        if not np.all(np.isfinite(m)):
            raise DomainError(f"smoother {self.id!r} has non-finite entries")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SmootherDecomposition:
    """Singular structure of a smoother restricted to its range.

    ``left_basis`` and ``right_basis`` span the range of A and of A*;
    ``singvals`` are the singular values of ``A^+ - P`` sorted nonincreasing,
    with ``directions`` holding the matching right-singular directions lifted
    to R^n (orthonormal columns inside the range of A).
    """

    rank: int
    left_basis: np.ndarray
    right_basis: np.ndarray
    singvals: np.ndarray
    directions: np.ndarray
    trace_ata: float

    @property
    def n(self) -> int:
        return self.left_basis.shape[0]


def decompose(smoother: LinearSmoother) -> SmootherDecomposition:
    """Decompose a smoother into the singular structure driving its space.

    Uses the SVD ``A = U S V^T`` with numerical rank r (threshold
    ``1e-10 * s_max * n``); in coordinates the restricted operator is
    ``diag(1/s_r) - V_r^T U_r`` mapping range(A) to range(A*).
    """
    a = smoother.matrix
    n = a.shape[0]
    u, s, vt = np.linalg.svd(a)
    trace_ata = float(np.sum(s * s))
    if s.size == 0 or s[0] == 0.0:
        return SmootherDecomposition(
            rank=0,
            left_basis=np.zeros((n, 0)),
            right_basis=np.zeros((n, 0)),
            singvals=np.zeros(0),
            directions=np.zeros((n, 0)),
            trace_ata=trace_ata,
        )
    rank = int(np.sum(s > RANK_TOL_FACTOR * s[0] * n))
    u_r = u[:, :rank]
    v_r = vt[:rank].T
    m_coord = np.diag(1.0 / s[:rank]) - v_r.T @ u_r
    _, sv, wt = np.linalg.svd(m_coord)
    directions = u_r @ wt.T
    return SmootherDecomposition(
        rank=rank,
        left_basis=u_r,
        right_basis=v_r,
        singvals=sv,
        directions=directions,
        trace_ata=trace_ata,
    )


def _ascending_order(singvals: np.ndarray) -> np.ndarray:
    return np.argsort(singvals, kind="stable")


def s_lambda(
    decomp: SmootherDecomposition, k: int | None = None, *, id: str = ""
) -> ModelSpace:
    """Approximation space of a decomposed smoother.

    Without ``k``: span of the directions whose singular value is strictly
    below 1 (values within ``1e-10`` of 1 count as excluded); if more than
    ``n - 2`` qualify, only the ``n - 2`` smallest are kept so the space stays
    admissible.  With ``k``: span of the directions of the ``k`` smallest
    singular values, ``1 <= k <= min(rank, n - 2)``.
    """
    n = decomp.n
    order = _ascending_order(decomp.singvals)
    if k is None:
        below = [int(i) for i in order if decomp.singvals[i] < 1.0 - UNIT_SV_TOL]
        chosen = below[: n - 2]
    else:
        if k < 1 or k > min(decomp.rank, n - 2):
            raise DomainError(
                f"k must satisfy 1 <= k <= min(rank, n - 2), got {k}"
            )
        chosen = [int(i) for i in order[:k]]
    if not chosen:
        return ModelSpace(id, np.zeros((n, 0)))
    return ModelSpace(id, decomp.directions[:, chosen])


def truncation_needed(decomp: SmootherDecomposition) -> bool:
    """Whether the below-1 directions exceed the admissible dimension n - 2."""
    below = int(np.sum(decomp.singvals < 1.0 - UNIT_SV_TOL))
    return below > decomp.n - 2


def select_linear(
    smoothers,
    y: np.ndarray,
    a: float | None = None,
    config: SelectionConfig = SelectionConfig(),
    per_lambda_extra: bool = False,
) -> SelectionReport:
    """Run the selection rule over a finite family of linear smoothers.

    Each candidate is ``A y`` approximated by its own space; with
    ``per_lambda_extra`` the nested spaces built from the k smallest singular
    directions (k up to ``min(rank, n - 2)``) are added to each candidate's
    collection.  Weights are ``a * max(1, dim)`` with ``a`` defaulting to
    ``max(log(#smoothers), 1)``.
    """
    smoothers = list(smoothers)
    if not smoothers:
        raise DomainError("no smoothers given")
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    for sm in smoothers:
        if sm.n != n:
            raise DomainError(f"smoother {sm.id!r} has size {sm.n}, expected {n}")
    if a is None:
        a = max(math.log(len(smoothers)), 1.0)

    spaces = []
    candidates = []
    per_lambda = {}
    for sm in smoothers:
        decomp = decompose(sm)
        main = s_lambda(decomp, id=f"{sm.id}/S")
        ids = [main.id]
        sm_spaces = [main]
        if per_lambda_extra:
            for k in range(1, min(decomp.rank, n - 2) + 1):
                sk = s_lambda(decomp, k, id=f"{sm.id}/S^{k}")
                sm_spaces.append(sk)
                ids.append(sk.id)
        spaces.extend(sm_spaces)
        candidates.append(
            EstimatorCandidate(sm.id, sm.matrix @ y, tuple(ids))
        )
        per_lambda[sm.id] = {
            "rank": decomp.rank,
            "dim_s_lambda": main.dim,
            "trace_ata": decomp.trace_ata,
            "truncated": truncation_needed(decomp),
        }

    registry = registry_build(spaces, scheme="linear", kappa=config.kappa, a=a)
    return select(
        candidates,
        y,
        registry,
        config,
        notes={"a": a, "per_lambda": per_lambda},
    )


def nadaraya_matrix(
    points, bandwidth: float, kernel: str = "gaussian"
) -> np.ndarray:
    """Kernel-weighted averaging matrix over scalar design points.

    Row i holds the normalized kernel weights K((x_i - x_j) / h); the diagonal
    weight is always positive so rows sum to one.  Kernels: ``gaussian``
    (exp(-u^2/2)) and ``uniform`` (indicator of |u| < 1).
    """
    pts = np.asarray(points, dtype=float)
    if bandwidth <= 0:
        raise DomainError(f"bandwidth must be > 0, got {bandwidth}")
    u = (pts[:, None] - pts[None, :]) / bandwidth
    if kernel == "gaussian":
        w = np.exp(-0.5 * u * u)
    elif kernel == "uniform":
        w = (np.abs(u) < 1.0).astype(float)
    else:
        raise DomainError(f"unknown kernel {kernel!r}")
    return w / w.sum(axis=1, keepdims=True)
