"""Aggregating a dictionary of preliminary estimators.

Three ways of combining M given vectors: keep one (model-selection
aggregation), mix them convexly, or fit freely in their linear span.  Each
problem is an instance of the penalized selection rule with dictionary-subset
spaces weighted by ``|m| + log C(M, |m|)``; the three resulting estimators can
in turn be fed back to the selector to pick the best of the three.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, FeasibilityError
from .penalty import PenaltyQuery, pen_delta
from .selection import EstimatorCandidate, SelectionConfig, SelectionReport, select
from .spaces import (
    ModelSpace,
    aggregation_weight,
    registry_build,
    residual_variance,
    span_of,
)

SUBSET_GUARD = 100_000
DEFAULT_SIZE_CAP = 8
PG_MAX_ITER = 10_000
PG_SLACK_TOL = 1e-12
HULL_TOL = 1e-6
VERTEX_TOL = 1e-9


@dataclass(frozen=True)
class Dictionary:
    """M preliminary estimators stored as the columns of an n x M array."""

    phis: np.ndarray

    def __post_init__(self):
        phis = np.asarray(self.phis, dtype=float)
        if phis.ndim != 2:
            raise DomainError("phis must be an (n, M) array")
        if phis.shape[1] < 2:
            raise DomainError(f"need at least 2 estimators, got {phis.shape[1]}")
        if not np.all(np.isfinite(phis)):
            raise DomainError("dictionary has non-finite entries")
        phis = phis.copy()
        phis.setflags(write=False)
        object.__setattr__(self, "phis", phis)

    @property
    def n(self) -> int:
        return self.phis.shape[0]

    @property
    def size(self) -> int:
        return self.phis.shape[1]

    def label(self, j: int) -> str:
        width = len(str(self.size))
        return f"phi{j + 1:0{width}d}"


@dataclass(frozen=True)
class ConvexWeights:
    """A point of the probability simplex."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if np.any(lam < -1e-12) or abs(lam.sum() - 1.0) > 1e-10:
            raise DomainError("weights must be nonnegative and sum to one")
        lam = np.maximum(lam, 0.0)
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)


@dataclass(frozen=True)
class AggregationDiagnostics:
    """Scale and regime indicators of an aggregation problem.

    ``l_scale`` is sup_j ||phi_j|| / (sigma sqrt(n)) (needs sigma),
    ``d_n_m`` the subset-size cap n / (2 log(eM)), ``hm_holds`` whether the
    convex-aggregation regime condition is met (None when sigma is unknown).
    """

    l_scale: float | None
    d_n_m: float
    hm_holds: bool | None


def d_n_m(n: int, m: int) -> float:
    """Subset-size cap n / (2 log(eM)) for convex aggregation."""
    return n / (2.0 * (1.0 + math.log(m)))


def diagnostics(dictionary: Dictionary, sigma: float | None = None) -> AggregationDiagnostics:
    d = d_n_m(dictionary.n, dictionary.size)
    if sigma is None:
        return AggregationDiagnostics(None, d, None)
    if sigma <= 0:
        raise DomainError(f"sigma must be > 0, got {sigma}")
    n, m = dictionary.n, dictionary.size
    l_scale = float(
        np.max(np.linalg.norm(dictionary.phis, axis=0)) / (sigma * math.sqrt(n))
    )
    root_nl = math.sqrt(n) * l_scale
    try:
        upper = math.exp(-1) * min(
            root_nl * math.exp(n * l_scale**2), math.exp(math.sqrt(n) / (2 * l_scale))
        )
    except OverflowError:
        upper = math.inf
    hm = 2 <= root_nl <= m <= upper
    return AggregationDiagnostics(l_scale, d, hm)


def subset_space(dictionary: Dictionary, subset) -> ModelSpace:
    """Span of the dictionary columns in ``subset`` (0-based), weighted by
    ``|m| + log C(M, |m|)``."""
    subset = tuple(sorted(subset))
    if not subset:
        raise DomainError("aggregation subsets must be nonempty")
    if subset[0] < 0 or subset[-1] >= dictionary.size:
        raise DomainError(f"subset {subset} out of range")
    sid = "m:" + ",".join(str(j + 1) for j in subset)
    space = span_of(
        [dictionary.phis[:, j] for j in subset], n=dictionary.n, id=sid
    )
    return space.with_delta(aggregation_weight(len(subset), dictionary.size))


def simplex_project(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    cond = u - css / idx > 0
    rho = int(np.nonzero(cond)[0][-1])
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def _simplex_quadratic_min(
    h_mat: np.ndarray, g_vec: np.ndarray, const: float
) -> tuple[np.ndarray, float, float, int]:
    """Minimize lam' H lam - 2 g' lam + const over the simplex.

    Projected gradient with step 1/L, followed by an exact solve on the
    identified face.  Returns (lam, value, kkt_slack, iterations); the slack
    is lam' grad - min_j grad_j >= 0 up to roundoff.
    """
    m = h_mat.shape[0]
    lam = np.full(m, 1.0 / m)
    lip = 2.0 * max(float(np.linalg.eigvalsh(h_mat)[-1]), 1e-300)
    step = 1.0 / lip

    def grad(x):
        return 2.0 * (h_mat @ x - g_vec)

    def value(x):
        return float(x @ h_mat @ x - 2.0 * g_vec @ x + const)

    def slack(x, gr):
        return float(x @ gr - gr.min())

    iters = 0
    for iters in range(1, PG_MAX_ITER + 1):
        gr = grad(lam)
        scale = max(1.0, float(np.abs(gr).max()))
        if slack(lam, gr) <= PG_SLACK_TOL * scale:
            break
        new = simplex_project(lam - step * gr)
        if np.max(np.abs(new - lam)) <= 1e-17:
            lam = new
            break
        lam = new

    # Exact KKT solve on the active face often sharpens the last digits.
    face = lam > 1e-12
    k = int(face.sum())
    if 0 < k:
        sys = np.zeros((k + 1, k + 1))
        sys[:k, :k] = 2.0 * h_mat[np.ix_(face, face)]
        sys[:k, k] = 1.0
        sys[k, :k] = 1.0
        rhs = np.concatenate([2.0 * g_vec[face], [1.0]])
        try:
            sol = np.linalg.solve(sys, rhs)
            cand = np.zeros(m)
            cand[face] = sol[:k]
            if cand.min() >= -1e-12:
                cand = np.maximum(cand, 0.0)
                cand /= cand.sum()
                if value(cand) <= value(lam):
                    lam = cand
        except np.linalg.LinAlgError:
            pass

    gr = grad(lam)
    return lam, value(lam), slack(lam, gr), iters


def _inner_quadratic(dictionary: Dictionary, space: ModelSpace, y: np.ndarray):
    # crit(S, f_lam) = ||y - P f_lam||^2 + alpha ||(I-P) f_lam||^2 expands to
    # lam' H lam - 2 g' lam + ||y||^2 with H, g below.
    phis = dictionary.phis
    g_mat = space.basis.T @ phis if space.dim else np.zeros((0, dictionary.size))
    gram = phis.T @ phis
    proj_gram = g_mat.T @ g_mat
    g_vec = g_mat.T @ (space.basis.T @ y) if space.dim else np.zeros(dictionary.size)
    return gram, proj_gram, g_vec


def hull_distance(dictionary: Dictionary, v: np.ndarray) -> float:
    """Distance from ``v`` to the convex hull of the dictionary columns."""
    v = np.asarray(v, dtype=float)
    h_mat = dictionary.phis.T @ dictionary.phis
    g_vec = dictionary.phis.T @ v
    _, val, _, _ = _simplex_quadratic_min(h_mat, g_vec, float(v @ v))
    return math.sqrt(max(val, 0.0))


def linear_aggregate(
    dictionary: Dictionary, y: np.ndarray
) -> tuple[np.ndarray, ModelSpace]:
    """Free linear combination: the projection of y onto the dictionary span."""
    y = np.asarray(y, dtype=float)
    space = subset_space(dictionary, range(dictionary.size))
    est = space.basis @ (space.basis.T @ y) if space.dim else np.zeros_like(y)
    return est, space


def ms_aggregate(
    dictionary: Dictionary,
    y: np.ndarray,
    config: SelectionConfig = SelectionConfig(),
    enforce: bool = True,
) -> SelectionReport:
    """Pick one dictionary element by the penalized criterion.

    Each candidate phi_j is approximated by its own line span(phi_j).
    Requires ``log(eM) <= n / 2`` so the singleton weights stay admissible;
    pass ``enforce=False`` to run anyway with a warning note.
    """
    y = np.asarray(y, dtype=float)
    notes = {}
    if 1.0 + math.log(dictionary.size) > dictionary.n / 2.0:
        if enforce:
            raise ConfigError(
                f"log(eM) = {1 + math.log(dictionary.size):.3f} exceeds n/2 = "
                f"{dictionary.n / 2}"
            )
        notes["warnings"] = ["log(eM) > n/2: singleton weights violate admissibility"]
    spaces = [subset_space(dictionary, (j,)) for j in range(dictionary.size)]
    registry = registry_build(spaces, scheme="aggregation", kappa=config.kappa)
    candidates = [
        EstimatorCandidate(dictionary.label(j), dictionary.phis[:, j], (spaces[j].id,))
        for j in range(dictionary.size)
    ]
    return select(candidates, y, registry, config, notes=notes)


@dataclass(frozen=True)
class ConvexAggregationReport:
    """Outcome of the two-step convex aggregation."""

    chosen_subset: tuple[int, ...]
    weights: ConvexWeights
    inner_value: float
    penalized_value: float
    kkt_slack: float
    d_n_m: float
    max_size: int
    rows: tuple  # (subset, dim, inner_value, penalized_value)


def convex_aggregate(
    dictionary: Dictionary,
    y: np.ndarray,
    config: SelectionConfig = SelectionConfig(),
    size_cap: int = DEFAULT_SIZE_CAP,
) -> tuple[np.ndarray, ConvexAggregationReport]:
    """Best convex mixture of the dictionary, by subset-wise minimization.

    For every dictionary subset of size up to ``min(d(n, M), size_cap)`` the
    convex criterion is minimized over the simplex; the subset minimizing
    inner value + penalty * residual variance wins and its mixture is
    returned.
    """
    y = np.asarray(y, dtype=float)
    n, m = dictionary.n, dictionary.size
    cap = d_n_m(n, m)
    max_size = min(int(math.floor(cap)), size_cap, m)
    if max_size < 1:
        raise ConfigError(
            f"d(n, M) = {cap:.3f} < 1: no admissible subsets; increase n or reduce M"
        )
    count = sum(math.comb(m, d) for d in range(1, max_size + 1))
    if count > SUBSET_GUARD:
        raise FeasibilityError(
            f"{count} subsets exceed the {SUBSET_GUARD} guard; lower size_cap"
        )

    gram = dictionary.phis.T @ dictionary.phis
    y_sq = float(y @ y)
    best = None
    rows = []
    for size in range(1, max_size + 1):
        for subset in itertools.combinations(range(m), size):
            space = subset_space(dictionary, subset)
            g_mat = space.basis.T @ dictionary.phis
            proj_gram = g_mat.T @ g_mat
            h_mat = proj_gram + config.alpha * (gram - proj_gram)
            g_vec = g_mat.T @ (space.basis.T @ y)
            lam, inner, kkt, _ = _simplex_quadratic_min(h_mat, g_vec, y_sq)
            pen = config.K * pen_delta(
                PenaltyQuery(n, space.dim, space.delta)
            ).pen_delta
            total = inner + pen * residual_variance(space, y)
            rows.append((subset, space.dim, inner, total))
            key = (total, space.dim, subset)
            if best is None or key < best[0]:
                best = (key, lam, inner, kkt)
    key, lam, inner, kkt = best
    weights = ConvexWeights(lam)
    report = ConvexAggregationReport(
        chosen_subset=key[2],
        weights=weights,
        inner_value=inner,
        penalized_value=key[0],
        kkt_slack=kkt,
        d_n_m=cap,
        max_size=max_size,
        rows=tuple(rows),
    )
    return dictionary.phis @ weights.lam, report


def simultaneous_select(
    f_linear: np.ndarray,
    f_ms: np.ndarray,
    f_convex: np.ndarray,
    dictionary: Dictionary,
    y: np.ndarray,
    config: SelectionConfig = SelectionConfig(),
    size_cap: int = DEFAULT_SIZE_CAP,
) -> SelectionReport:
    """Select among the three aggregation estimators.

    Builds the union of the three space families (full span, singletons,
    small subsets) and scores each estimator against its own family.  The
    estimators are only expected, not required, to live in their nominal
    sets; violations are reported as warnings.
    """
    y = np.asarray(y, dtype=float)
    n, m = dictionary.n, dictionary.size
    full = subset_space(dictionary, range(m))
    singles = [subset_space(dictionary, (j,)) for j in range(m)]
    cap = d_n_m(n, m)
    max_size = min(int(math.floor(cap)), size_cap, m)
    if max_size < 1:
        raise ConfigError(f"d(n, M) = {cap:.3f} < 1: no convex subsets")
    count = sum(math.comb(m, d) for d in range(1, max_size + 1))
    if count > SUBSET_GUARD:
        raise FeasibilityError(
            f"{count} subsets exceed the {SUBSET_GUARD} guard; lower size_cap"
        )
    convex_spaces = [
        subset_space(dictionary, subset)
        for size in range(1, max_size + 1)
        for subset in itertools.combinations(range(m), size)
    ]

    warnings = []
    f_ms = np.asarray(f_ms, dtype=float)
    vert_gap = min(
        float(np.linalg.norm(f_ms - dictionary.phis[:, j])) for j in range(m)
    )
    if vert_gap > VERTEX_TOL * max(1.0, float(np.linalg.norm(f_ms))):
        warnings.append(f"MS estimate is {vert_gap:.3e} away from every dictionary element")
    f_convex = np.asarray(f_convex, dtype=float)
    gap = hull_distance(dictionary, f_convex)
    if gap > HULL_TOL * max(1.0, float(np.linalg.norm(f_convex))):
        warnings.append(f"convex estimate lies {gap:.3e} outside the hull")

    all_spaces = [full] + singles + convex_spaces
    registry = registry_build(all_spaces, scheme="aggregation", kappa=config.kappa)
    candidates = [
        EstimatorCandidate("L", np.asarray(f_linear, dtype=float), (full.id,)),
        EstimatorCandidate("MS", f_ms, tuple(s.id for s in singles)),
        EstimatorCandidate("Cv", f_convex, tuple(s.id for s in convex_spaces)),
    ]
    return select(candidates, y, registry, config, notes={"warnings": warnings})
