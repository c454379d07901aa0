"""Linear approximation spaces, their weights, and the registry holding them.

A model space is a linear subspace of R^n stored through an orthonormal basis
together with a nonnegative weight.  The registry collects the spaces in play
for one selection run, deduplicates equal ranges, tracks the weight mass
``sigma = sum exp(-delta)`` and per-space admissibility flags.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy.linalg import qr
from scipy.special import gammaln

from .errors import DomainError

ORTHO_TOL = 1e-10
DEFAULT_RANK_TOL = 1e-8
DEDUP_TOL = 1e-8
ENUMERATION_CAP = 1_000_000


@dataclass(frozen=True)
class ModelSpace:
    """An orthonormally-based linear subspace of R^n.

    Parameters
    ----------
    id : str
        Opaque identifier, unique within a registry.
    basis : ndarray, shape (n, dim)
        Columns form an orthonormal basis of the space.  ``dim`` may be 0.
    delta : float
        Nonnegative complexity weight.
    """

    id: str
    basis: np.ndarray
    delta: float = 0.0

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim != 2:
            raise DomainError("basis must be a 2-d array (n, dim)")
        d = basis.shape[1]
        if d > 0:
            gram = basis.T @ basis
            if not np.allclose(gram, np.eye(d), atol=ORTHO_TOL):
                raise DomainError(f"basis of space {self.id!r} is not orthonormal")
        if not math.isfinite(self.delta) or self.delta < 0:
            raise DomainError(f"delta must be finite and >= 0, got {self.delta}")
        basis = basis.copy()
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def with_delta(self, delta: float) -> "ModelSpace":
        return replace(self, delta=float(delta))


def span_of(
    vectors, *, n: int | None = None, rank_tol: float = DEFAULT_RANK_TOL, id: str = ""
) -> ModelSpace:
    """Orthonormal span of a family of vectors.

    Rank is revealed by column-pivoted QR: columns whose pivot falls below
    ``rank_tol`` times the largest pivot are dropped.  Empty or fully
    degenerate input yields the zero-dimensional space (``n`` must then be
    given to fix the ambient dimension).
    """
    cols = np.column_stack([np.asarray(v, dtype=float) for v in vectors]) if len(
        vectors
    ) else None
    if cols is None or cols.size == 0:
        if n is None and cols is None:
            raise DomainError("ambient dimension n required for an empty span")
        amb = n if n is not None else cols.shape[0]
        return ModelSpace(id, np.zeros((amb, 0)))
    if cols.ndim != 2:
        raise DomainError("vectors must be 1-d arrays of a common length")
    if n is not None and cols.shape[0] != n:
        raise DomainError(f"vectors have length {cols.shape[0]}, expected {n}")
    q, r, _ = qr(cols, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        return ModelSpace(id, np.zeros((cols.shape[0], 0)))
    rank = int(np.sum(diag >= rank_tol * diag[0]))
    return ModelSpace(id, q[:, :rank])


def project(space: ModelSpace, v: np.ndarray) -> np.ndarray:
    """Orthogonal projection of ``v`` onto ``space``."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != space.n:
        raise DomainError(f"vector length {v.shape[0]} != ambient dimension {space.n}")
    if space.dim == 0:
        return np.zeros_like(v)
    return space.basis @ (space.basis.T @ v)


def projector_matrix(space: ModelSpace) -> np.ndarray:
    """The n x n projection matrix of ``space``."""
    return space.basis @ space.basis.T


def residual_variance(space: ModelSpace, y: np.ndarray) -> float:
    """Residual variance estimate ||y - proj(y)||^2 / (n - dim)."""
    y = np.asarray(y, dtype=float)
    if space.dim >= space.n:
        raise DomainError("residual variance undefined when dim == n")
    res = y - project(space, y)
    return float(res @ res) / (space.n - space.dim)


def log_binom(n: int, k: int) -> float:
    """log of the binomial coefficient C(n, k), exact via log-gamma."""
    if k < 0 or k > n:
        raise DomainError(f"binomial C({n}, {k}) out of range")
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


def aggregation_weight(size: int, n_dict: int) -> float:
    """Weight |m| + log C(M, |m|) of a dictionary subset of given size."""
    return size + log_binom(n_dict, size)


def varsel_weight(dim: int, p: int) -> float:
    """Weight log C(p, D) + log(1 + D) of a predictor-support space."""
    return log_binom(p, dim) + math.log1p(dim)


def linear_weight(dim: int, a: float) -> float:
    """Weight a * max(1, dim) used for smoother spaces."""
    if a < 1:
        raise DomainError(f"linear weight scale must be >= 1, got {a}")
    return a * max(1, dim)


def weight_of(scheme: str, dim: int, **params) -> float:
    """Evaluate a named weight scheme.

    ``scheme`` is one of ``aggregation`` (params ``size``, ``n_dict``),
    ``varsel`` (param ``p``), ``linear`` (param ``a``) or ``explicit``
    (param ``delta``).
    """
    if scheme == "aggregation":
        return aggregation_weight(params.get("size", dim), params["n_dict"])
    if scheme == "varsel":
        return varsel_weight(dim, params["p"])
    if scheme == "linear":
        return linear_weight(dim, params["a"])
    if scheme == "explicit":
        return float(params["delta"])
    raise DomainError(f"unknown weight scheme {scheme!r}")


@dataclass(frozen=True)
class ModelRegistry:
    """A finite, deduplicated collection of model spaces.

    ``aliases`` maps every registered id (including merged duplicates) to the
    id of its canonical representative.  ``sigma`` is the enumerated weight
    mass over canonical spaces; ``sigma_bound`` is the scheme's analytic bound
    when one exists.  ``h4_violations`` lists spaces failing
    ``1 <= max(dim, delta) <= kappa * n``.
    """

    spaces: tuple[ModelSpace, ...]
    aliases: dict[str, str]
    sigma: float
    kappa: float
    scheme: str
    sigma_bound: float | None = None
    h4_violations: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.spaces[0].n if self.spaces else 0

    @cached_property
    def _by_id(self) -> dict[str, ModelSpace]:
        return {s.id: s for s in self.spaces}

    def space(self, space_id: str) -> ModelSpace:
        canonical = self.aliases.get(space_id)
        if canonical is None:
            raise DomainError(f"unknown space id {space_id!r}")
        return self._by_id[canonical]

    def ids(self) -> list[str]:
        return [s.id for s in self.spaces]


def _ranges_equal(a: ModelSpace, b: ModelSpace) -> bool:
    # Equal-dimensional orthonormal bases span the same range iff
    # ||P_a - P_b||_F^2 = 2 (dim - ||B_a^T B_b||_F^2) vanishes.
    if a.dim != b.dim:
        return False
    if a.dim == 0:
        return True
    cross = a.basis.T @ b.basis
    dist_sq = 2.0 * (a.dim - float(np.sum(cross * cross)))
    return dist_sq < DEDUP_TOL**2


def registry_build(
    spaces,
    scheme: str = "explicit",
    kappa: float = 0.5,
    *,
    p: int | None = None,
    a: float | None = None,
    d_max: int | None = None,
) -> ModelRegistry:
    """Assemble a registry from model spaces.

    Weights are recomputed from the scheme where the scheme determines them
    (``varsel`` needs ``p``, ``linear`` needs ``a``); ``explicit`` and
    ``aggregation`` keep the deltas stored on the spaces.  Spaces with equal
    ranges are merged, keeping the smallest weight so the penalty of the
    merged space is the smallest of the candidates'.  ``sigma`` is the exact
    sum of ``exp(-delta)`` over canonical spaces; for the ``varsel`` scheme
    the analytic bound ``1 + log(1 + p)`` is recorded alongside.
    """
    spaces = list(spaces)
    if len(spaces) > ENUMERATION_CAP:
        raise DomainError(f"registry larger than {ENUMERATION_CAP} spaces")
    if not 0 < kappa < 1:
        raise DomainError(f"kappa must lie in (0, 1), got {kappa}")
    if scheme == "varsel" and p is None:
        raise DomainError("varsel scheme requires p")
    if scheme == "linear" and a is None:
        raise DomainError("linear scheme requires a")

    seen_ids = set()
    for s in spaces:
        if s.id in seen_ids:
            raise DomainError(f"duplicate space id {s.id!r}")
        seen_ids.add(s.id)
        if spaces and s.n != spaces[0].n:
            raise DomainError("all spaces must share the ambient dimension")
        if s.dim > s.n - 2:
            raise DomainError(
                f"space {s.id!r} has dim {s.dim} > n - 2 = {s.n - 2}"
            )

    if scheme == "varsel":
        spaces = [s.with_delta(varsel_weight(s.dim, p)) for s in spaces]
    elif scheme == "linear":
        spaces = [s.with_delta(linear_weight(s.dim, a)) for s in spaces]

    # Merge equal ranges, keeping the smallest weight.  Comparisons are
    # restricted to same-dimension groups.
    canonical: list[ModelSpace] = []
    aliases: dict[str, str] = {}
    by_dim: dict[int, list[int]] = {}
    for s in spaces:
        match = None
        for idx in by_dim.get(s.dim, ()):
            if _ranges_equal(canonical[idx], s):
                match = idx
                break
        if match is None:
            by_dim.setdefault(s.dim, []).append(len(canonical))
            canonical.append(s)
            aliases[s.id] = s.id
        else:
            kept = canonical[match]
            if s.delta < kept.delta:
                canonical[match] = kept.with_delta(s.delta)
            aliases[s.id] = kept.id

    sigma = float(sum(math.exp(-s.delta) for s in canonical))
    sigma_bound = None
    if scheme == "varsel":
        sigma_bound = 1.0 + math.log1p(p)

    violations = tuple(
        s.id
        for s in canonical
        if not (1 <= max(s.dim, s.delta) <= kappa * s.n)
    )
    return ModelRegistry(
        spaces=tuple(canonical),
        aliases=aliases,
        sigma=sigma,
        kappa=kappa,
        scheme=scheme,
        sigma_bound=sigma_bound,
        h4_violations=violations,
    )
