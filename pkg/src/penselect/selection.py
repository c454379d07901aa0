"""The penalized selection rule over arbitrary candidate estimators.

Each candidate carries a fitted vector and a nonempty set of approximation
spaces drawn from a shared registry.  Its criterion is the minimum over those
spaces of

    ||y - P_S fit||^2 + alpha ||fit - P_S fit||^2 + K pen(S) sigma2_S

where ``pen(S)`` solves the penalty equation for (n, dim S, delta S) and
``sigma2_S`` is the residual variance of ``y`` in ``S``.  The selected
candidate minimizes the criterion; ties break by the dimension of the
minimizing space, then by candidate id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .penalty import PenaltyQuery, pen_delta
from .spaces import ModelRegistry, project, residual_variance

DEFAULT_K = 1.1
DEFAULT_ALPHA = 0.5


@dataclass(frozen=True)
class SelectionConfig:
    """Constants of the selection rule.

    ``K`` multiplies the solved penalty (must exceed 1), ``alpha`` weights the
    candidate-to-space proximity term, ``delta`` is the slack allowed to a
    near-minimizer (only reported; finite families are minimized exactly) and
    ``kappa`` is the admissibility constant used for registry flags.
    """

    K: float = DEFAULT_K
    alpha: float = DEFAULT_ALPHA
    delta: float = 0.0
    kappa: float = 0.5

    def __post_init__(self):
        if self.K <= 1:
            raise DomainError(f"K must be > 1, got {self.K}")
        if self.alpha <= 0:
            raise DomainError(f"alpha must be > 0, got {self.alpha}")
        if self.delta < 0:
            raise DomainError(f"delta must be >= 0, got {self.delta}")
        if not 0 < self.kappa < 1:
            raise DomainError(f"kappa must lie in (0, 1), got {self.kappa}")


@dataclass(frozen=True)
class EstimatorCandidate:
    """A fitted estimator plus the ids of its approximation spaces."""

    id: str
    fitted: np.ndarray
    approx_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "fitted", np.asarray(self.fitted, dtype=float)
        )
        object.__setattr__(self, "approx_ids", tuple(self.approx_ids))
        if not self.approx_ids:
            raise DomainError(f"candidate {self.id!r} has no approximation spaces")


@dataclass(frozen=True)
class CandidateScore:
    """Per-candidate decomposition of the criterion at its minimizing space."""

    candidate_id: str
    crit: float
    argmin_space: str
    fit_term: float
    proximity_term: float
    penalty_term: float
    sigma2: float
    accuracy: float
    h4_violated: bool


@dataclass(frozen=True)
class SelectionReport:
    """Outcome of one selection run."""

    chosen: str
    scores: tuple[CandidateScore, ...]
    constant_C: float
    sigma: float
    config: SelectionConfig
    notes: dict = field(default_factory=dict)

    def score(self, candidate_id: str) -> CandidateScore:
        for s in self.scores:
            if s.candidate_id == candidate_id:
                return s
        raise DomainError(f"unknown candidate {candidate_id!r}")


def risk_constant(K: float, alpha: float) -> float:
    """The constant C(K, alpha) entering the selection risk bound.

    Its reciprocal is (1 + alpha - 1/K)(alpha + 2(1 + 1/K)) / (alpha (1 - 1/K)).
    Diagnostic only.
    """
    inv_k = 1.0 / K
    inv_c = (1.0 + alpha - inv_k) * (alpha + 2.0 * (1.0 + inv_k)) / (
        alpha * (1.0 - inv_k)
    )
    return 1.0 / inv_c


class _SpaceStats:
    """Caches sigma2 and the scaled penalty per space for one (y, registry)."""

    def __init__(self, y: np.ndarray, registry: ModelRegistry, config: SelectionConfig):
        self.y = y
        self.registry = registry
        self.config = config
        self._cache: dict[str, tuple[float, float]] = {}

    def stats(self, space_id: str) -> tuple[float, float]:
        space = self.registry.space(space_id)
        got = self._cache.get(space.id)
        if got is None:
            sigma2 = residual_variance(space, self.y)
            pen = self.config.K * pen_delta(
                PenaltyQuery(space.n, space.dim, space.delta)
            ).pen_delta
            got = (sigma2, pen)
            self._cache[space.id] = got
        return got


def _score(
    candidate: EstimatorCandidate,
    y: np.ndarray,
    registry: ModelRegistry,
    config: SelectionConfig,
    stats: _SpaceStats,
) -> CandidateScore:
    best = None
    h4_set = set(registry.h4_violations)
    violated = False
    accuracy = np.inf
    for sid in candidate.approx_ids:
        space = registry.space(sid)
        sigma2, pen = stats.stats(sid)
        proj = project(space, candidate.fitted)
        fit_res = y - proj
        prox_res = candidate.fitted - proj
        fit_term = float(fit_res @ fit_res)
        prox_term = float(prox_res @ prox_res)
        pen_term = pen * sigma2
        value = fit_term + config.alpha * prox_term + pen_term
        accuracy = min(accuracy, prox_term + pen_term)
        if space.id in h4_set:
            violated = True
        key = (value, space.dim, space.id)
        if best is None or key < best[0]:
            best = (key, fit_term, prox_term, pen_term, sigma2)
    key, fit_term, prox_term, pen_term, sigma2 = best
    return CandidateScore(
        candidate_id=candidate.id,
        crit=key[0],
        argmin_space=key[2],
        fit_term=fit_term,
        proximity_term=prox_term,
        penalty_term=pen_term,
        sigma2=sigma2,
        accuracy=float(accuracy),
        h4_violated=violated,
    )


def crit_alpha(
    candidate: EstimatorCandidate,
    y: np.ndarray,
    registry: ModelRegistry,
    config: SelectionConfig = SelectionConfig(),
) -> tuple[float, str]:
    """Criterion value of one candidate and the space attaining it."""
    y = np.asarray(y, dtype=float)
    score = _score(candidate, y, registry, config, _SpaceStats(y, registry, config))
    return score.crit, score.argmin_space


def accuracy_index(
    candidate: EstimatorCandidate,
    y: np.ndarray,
    registry: ModelRegistry,
    config: SelectionConfig = SelectionConfig(),
) -> float:
    """Accuracy index: min over spaces of proximity + penalty terms."""
    y = np.asarray(y, dtype=float)
    score = _score(candidate, y, registry, config, _SpaceStats(y, registry, config))
    return score.accuracy


def select(
    candidates,
    y: np.ndarray,
    registry: ModelRegistry,
    config: SelectionConfig = SelectionConfig(),
    notes: dict | None = None,
) -> SelectionReport:
    """Score every candidate and pick the criterion minimizer.

    The report lists candidates sorted by id; the winner is the exact
    minimizer with ties broken by smallest criterion, then the dimension of
    the minimizing space, then candidate id.
    """
    candidates = list(candidates)
    if not candidates:
        raise DomainError("no candidates to select from")
    y = np.asarray(y, dtype=float)
    stats = _SpaceStats(y, registry, config)
    scores = [_score(c, y, registry, config, stats) for c in candidates]
    scores.sort(key=lambda s: s.candidate_id)
    dims = {s.candidate_id: registry.space(s.argmin_space).dim for s in scores}
    winner = min(scores, key=lambda s: (s.crit, dims[s.candidate_id], s.candidate_id))
    return SelectionReport(
        chosen=winner.candidate_id,
        scores=tuple(scores),
        constant_C=risk_constant(config.K, config.alpha),
        sigma=registry.sigma,
        config=config,
        notes=dict(notes or {}),
    )
