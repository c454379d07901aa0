"""Variable selection: candidate supports, their criterion, discovery rates.

Candidate supports come from three in-repo generators (the LARS-lasso
homotopy, ridge-coefficient ranking, exhaustive enumeration) or from an
external manifest.  A support m is scored by

    crit(m) = ||y - P_m y||^2 + K pen(S_m) sigma2_m

with the support-span weight ``log C(p, D) + log(1 + D)`` at ``D = dim(S_m)``
(the numerical rank of the selected columns), and the catalog minimizer is
reported together with per-procedure winners.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FeasibilityError
from .penalty import PenaltyQuery, pen_delta
from .selection import SelectionConfig
from .spaces import residual_variance, span_of, varsel_weight

SUBSET_GUARD = 1_000_000
_LAM_FLOOR = 1e-12
_DEN_EPS = 1e-12


@dataclass(frozen=True)
class DesignMatrix:
    """An n x p design with column labels."""

    x: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2 or x.shape[1] < 2:
            raise DomainError("design must be an (n, p) array with p >= 2")
        if not np.all(np.isfinite(x)):
            raise DomainError("design has non-finite entries")
        labels = tuple(self.labels) or tuple(f"x{j + 1}" for j in range(x.shape[1]))
        if len(labels) != x.shape[1]:
            raise DomainError("labels must match the number of columns")
        x = x.copy()
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class SupportSet:
    """A sorted set of predictor indices (0-based) with its provenance."""

    indices: tuple[int, ...]
    origin: tuple[str, str] = ("", "")

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.indices))
        if len(set(idx)) != len(idx):
            raise DomainError(f"duplicate indices in support {idx}")
        if idx and idx[0] < 0:
            raise DomainError("indices must be nonnegative")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "origin", (str(self.origin[0]), str(self.origin[1])))


@dataclass(frozen=True)
class CatalogEntry:
    indices: tuple[int, ...]
    origins: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class SupportCatalog:
    """Deduplicated supports; every origin that produced a support is kept."""

    entries: tuple[CatalogEntry, ...]

    @property
    def size(self) -> int:
        return len(self.entries)


def build_catalog(supports) -> SupportCatalog:
    order: list[tuple[int, ...]] = []
    origins: dict[tuple[int, ...], list[tuple[str, str]]] = {}
    for s in supports:
        if s.indices not in origins:
            order.append(s.indices)
            origins[s.indices] = []
        if s.origin not in origins[s.indices]:
            origins[s.indices].append(s.origin)
    entries = tuple(
        CatalogEntry(idx, tuple(origins[idx])) for idx in order
    )
    return SupportCatalog(entries)


def default_path_d_max(n: int, p: int) -> int:
    return min(n - 2, p, 30)


def exhaustive_default_d_max(p: int) -> int:
    if p <= 50:
        return 4
    if p <= 100:
        return 3
    if p <= 200:
        return 2
    return 1


# ---------------------------------------------------------------------------
# LARS-lasso homotopy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LarsStep:
    """State at the knot ending one homotopy move."""

    support: tuple[int, ...]
    beta: np.ndarray
    lam: float
    event: str  # "add", "drop" or "end"
    index: int | None


@dataclass(frozen=True)
class LarsPath:
    steps: tuple[LarsStep, ...]
    excluded: tuple[int, ...]

    def supports(self) -> list[tuple[int, ...]]:
        return [s.support for s in self.steps]

    def fits(self, x: np.ndarray) -> list[np.ndarray]:
        return [x @ s.beta for s in self.steps]


def lasso_path_steps(x: np.ndarray, y: np.ndarray, max_steps: int) -> LarsPath:
    """Run the LARS homotopy with the lasso drop modification.

    Each entering or dropping event is one step; the recorded support after a
    step is the active set during the preceding move (without a variable
    dropped at its end), so the step-h support carries at most h variables.
    Exactly collinear entering columns are excluded from the path and
    reported in ``excluded``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = x.shape
    if max_steps < 1:
        raise DomainError(f"max_steps must be >= 1, got {max_steps}")

    beta = np.zeros(p)
    c = x.T @ y
    scale = max(1.0, float(np.abs(c).max()) if p else 1.0)
    lam = float(np.abs(c).max())
    if lam <= _LAM_FLOOR * scale:
        return LarsPath((), ())

    active: list[int] = [int(np.argmax(np.abs(c)))]
    excluded: set[int] = set()
    steps: list[LarsStep] = []

    while len(steps) < max_steps and lam > _LAM_FLOOR * scale and active:
        xa = x[:, active]
        gram = xa.T @ xa
        s_vec = np.sign(c[active])
        try:
            d_act = np.linalg.solve(gram, s_vec)
        except np.linalg.LinAlgError:
            bad = active.pop()
            excluded.add(bad)
            if not active:
                mask = np.ones(p, dtype=bool)
                mask[list(excluded)] = False
                if not mask.any() or np.abs(c[mask]).max() <= _LAM_FLOOR * scale:
                    break
                cand = np.where(mask)[0]
                active = [int(cand[np.argmax(np.abs(c[cand]))])]
            continue

        a_full = x.T @ (xa @ d_act)

        # Entering events: an inactive correlation catches up with lam.
        inactive = np.ones(p, dtype=bool)
        inactive[active] = False
        if excluded:
            inactive[list(excluded)] = False
        gamma_enter = math.inf
        enter_j = None
        if inactive.any():
            idx = np.where(inactive)[0]
            cj = c[idx]
            aj = a_full[idx]
            for num, den in ((lam - cj, 1.0 - aj), (lam + cj, 1.0 + aj)):
                ok = den > _DEN_EPS
                g = np.where(ok, num / np.where(ok, den, 1.0), math.inf)
                g = np.where(g >= -1e-12, np.maximum(g, 0.0), math.inf)
                k = int(np.argmin(g))
                if g[k] < gamma_enter - 1e-15 * scale or (
                    abs(g[k] - gamma_enter) <= 1e-15 * scale
                    and enter_j is not None
                    and idx[k] < enter_j
                ):
                    gamma_enter = float(g[k])
                    enter_j = int(idx[k])

        # Dropping events: an active coefficient crosses zero.
        gamma_drop = math.inf
        drop_j = None
        for pos, j in enumerate(active):
            if d_act[pos] != 0.0 and beta[j] != 0.0:
                g = -beta[j] / d_act[pos]
                if 1e-14 * scale < g < gamma_drop:
                    gamma_drop = g
                    drop_j = j

        gamma = min(gamma_enter, gamma_drop, lam)
        beta[active] += gamma * d_act
        lam -= gamma
        # Refresh correlations from the residual to avoid drift.
        c = x.T @ (y - x @ beta)

        if gamma_drop <= gamma_enter and drop_j is not None and gamma == gamma_drop:
            beta[drop_j] = 0.0
            support = tuple(sorted(j for j in active if j != drop_j))
            steps.append(LarsStep(support, beta.copy(), lam, "drop", drop_j))
            active.remove(drop_j)
        elif gamma == gamma_enter and enter_j is not None:
            support = tuple(sorted(active))
            steps.append(LarsStep(support, beta.copy(), lam, "add", enter_j))
            active.append(enter_j)
        else:
            support = tuple(sorted(active))
            steps.append(LarsStep(support, beta.copy(), max(lam, 0.0), "end", None))
            break

    return LarsPath(tuple(steps), tuple(sorted(excluded)))


def lars_lasso_path(x: np.ndarray, y: np.ndarray, d_max: int) -> list[SupportSet]:
    """Supports after the first ``d_max`` steps of the LARS-lasso homotopy."""
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    if d_max > min(p, n - 2):
        raise DomainError(f"d_max={d_max} exceeds min(p, n - 2) = {min(p, n - 2)}")
    path = lasso_path_steps(x, y, d_max)
    return [
        SupportSet(step.support, ("lars", str(h)))
        for h, step in enumerate(path.steps, start=1)
    ]


# ---------------------------------------------------------------------------
# Ridge ranking and exhaustive enumeration
# ---------------------------------------------------------------------------


def ridge_coefficients(x: np.ndarray, y: np.ndarray, h: float) -> np.ndarray:
    """Solve (X'X + h I) beta = X'y."""
    if h <= 0:
        raise DomainError(f"ridge parameter must be > 0, got {h}")
    x = np.asarray(x, dtype=float)
    p = x.shape[1]
    return np.linalg.solve(x.T @ x + h * np.eye(p), x.T @ np.asarray(y, dtype=float))


def ridge_rank_supports(
    x: np.ndarray, y: np.ndarray, h_grid, d_max: int
) -> list[SupportSet]:
    """Nested supports ranked by decreasing |ridge coefficient| per grid value.

    Ties in magnitude break by column index.
    """
    x = np.asarray(x, dtype=float)
    p = x.shape[1]
    out = []
    for h in h_grid:
        b = ridge_coefficients(x, y, h)
        order = sorted(range(p), key=lambda j: (-abs(b[j]), j))
        for k in range(1, min(d_max, p) + 1):
            out.append(SupportSet(tuple(order[:k]), ("ridge", str(h))))
    return out


def exhaustive_supports(p: int, d_max: int) -> list[SupportSet]:
    """All supports of size 0..d_max in lexicographic order."""
    total = sum(math.comb(p, k) for k in range(0, min(d_max, p) + 1))
    if total > SUBSET_GUARD:
        raise FeasibilityError(
            f"{total} subsets exceed the {SUBSET_GUARD} guard; lower d_max"
        )
    out = []
    for k in range(0, min(d_max, p) + 1):
        for combo in itertools.combinations(range(p), k):
            out.append(SupportSet(combo, ("exhaustive", "0")))
    return out


# ---------------------------------------------------------------------------
# Criterion and selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SupportScore:
    indices: tuple[int, ...]
    crit: float
    dim: int
    rss: float
    sigma2: float
    penalty: float
    origins: tuple[tuple[str, str], ...]


def _score_support(
    indices, x: np.ndarray, y: np.ndarray, config: SelectionConfig
) -> SupportScore:
    n, p = x.shape
    if len(indices) > n - 2:
        raise DomainError(f"support size {len(indices)} exceeds n - 2 = {n - 2}")
    space = span_of([x[:, j] for j in indices], n=n)
    delta = varsel_weight(space.dim, p)
    pen = config.K * pen_delta(PenaltyQuery(n, space.dim, delta)).pen_delta
    sigma2 = residual_variance(space, y)
    rss = sigma2 * (n - space.dim)
    return SupportScore(
        indices=tuple(indices),
        crit=rss + pen * sigma2,
        dim=space.dim,
        rss=rss,
        sigma2=sigma2,
        penalty=pen,
        origins=(),
    )


def crit_m(support, x: np.ndarray, y: np.ndarray, config: SelectionConfig = SelectionConfig()) -> float:
    """Criterion value of one support (indices or SupportSet)."""
    indices = support.indices if isinstance(support, SupportSet) else tuple(support)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return _score_support(indices, x, y, config).crit


@dataclass(frozen=True)
class VarSelectionResult:
    chosen: CatalogEntry
    estimate: np.ndarray
    scores: tuple[SupportScore, ...]
    per_procedure: dict[str, tuple[int, ...]]
    sigma_bound: float
    warnings: tuple[str, ...]


def select_support(
    x: np.ndarray,
    y: np.ndarray,
    catalog: SupportCatalog,
    config: SelectionConfig = SelectionConfig(),
) -> VarSelectionResult:
    """Minimize the support criterion over a catalog.

    Ties break by support size then lexicographic indices.  The report keeps
    one score per deduplicated support, the winner of each contributing
    procedure, and the analytic weight-mass bound 1 + log(1 + p).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if catalog.size == 0:
        raise DomainError("empty support catalog")
    n, p = x.shape

    warnings = []
    max_size = max(len(e.indices) for e in catalog.entries)
    admissible = config.kappa * n / (2.0 * math.log(p)) if p > 1 else math.inf
    if max_size > admissible:
        warnings.append(
            f"largest support ({max_size}) exceeds kappa*n/(2 log p) = {admissible:.2f}"
        )

    scores = []
    best = None
    for entry in catalog.entries:
        s = _score_support(entry.indices, x, y, config)
        s = SupportScore(
            indices=s.indices,
            crit=s.crit,
            dim=s.dim,
            rss=s.rss,
            sigma2=s.sigma2,
            penalty=s.penalty,
            origins=entry.origins,
        )
        scores.append(s)
        key = (s.crit, len(s.indices), s.indices)
        if best is None or key < best[0]:
            best = (key, entry)

    per_procedure: dict[str, tuple[int, ...]] = {}
    for proc in sorted({o[0] for e in catalog.entries for o in e.origins}):
        proc_best = min(
            (s for s in scores if any(o[0] == proc for o in s.origins)),
            key=lambda s: (s.crit, len(s.indices), s.indices),
        )
        per_procedure[proc] = proc_best.indices

    chosen = best[1]
    space = span_of([x[:, j] for j in chosen.indices], n=n)
    estimate = space.basis @ (space.basis.T @ y) if space.dim else np.zeros_like(y)
    return VarSelectionResult(
        chosen=chosen,
        estimate=estimate,
        scores=tuple(scores),
        per_procedure=per_procedure,
        sigma_bound=1.0 + math.log1p(p),
        warnings=tuple(warnings),
    )


def fdr_tdr(chosen, truth) -> tuple[float, float]:
    """False and true discovery rates of ``chosen`` against ``truth``.

    fdr = |chosen - truth| / max(|chosen|, 1); tdr = |chosen & truth| / |truth|.
    """
    chosen_set = set(chosen.indices if isinstance(chosen, (SupportSet, CatalogEntry)) else chosen)
    truth_set = set(truth.indices if isinstance(truth, (SupportSet, CatalogEntry)) else truth)
    if not truth_set:
        raise DomainError("truth support must be nonempty")
    fdr = len(chosen_set - truth_set) / max(len(chosen_set), 1)
    tdr = len(chosen_set & truth_set) / len(truth_set)
    return fdr, tdr
