"""Forecast scoring and cross-series comparison of methods."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import AggregationError, ScoringError, StatisticalTestError

DEFAULT_ROPE = (-5.0, 5.0)
DEFAULT_DRAWS = 50_000
_DRAW_CHUNK = 5_000


def naive_mae(train, season: int = 1) -> float:
    """In-sample MAE of the seasonal naive forecast ``y[t - season]``."""
    train = np.asarray(train, dtype=float)
    if season < 1:
        raise ScoringError("season must be a positive integer")
    if train.size <= season:
        raise ScoringError(f"training series of length {train.size} is too short for season {season}")
    return float(np.mean(np.abs(train[season:] - train[:-season])))


def mase(train, test_actuals, test_forecasts, season: int = 1, series_id: str | None = None) -> float:
    """Mean absolute scaled error.

    ``test_actuals`` and ``test_forecasts`` may be vectors or (origins, steps)
    matrices; the error is averaged over every entry.

    >>> mase([1, 2, 3], [4, 5], [4, 4])
    0.5
    """
    actual = np.asarray(test_actuals, dtype=float)
    pred = np.asarray(test_forecasts, dtype=float)
    if actual.shape != pred.shape:
        raise ScoringError(f"actuals {actual.shape} and forecasts {pred.shape} differ in shape")
    if actual.size == 0:
        raise ScoringError("nothing to score")
    scale = naive_mae(train, season)
    if scale <= 0:
        who = f"series {series_id!r}" if series_id else "training series"
        raise ScoringError(f"{who} is constant: the naive scaling error is zero")
    return float(np.mean(np.abs(actual - pred)) / scale)


def rolling_origins(values, n_train: int, q: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    """Lag inputs and h-step actuals for every test origin.

    Origins run over the test segment ``[n_train, t - h]``. Each input is the
    true last ``q`` observations before the origin, which may reach back
    into the training segment.
    """
    values = np.asarray(values, dtype=float)
    origins = np.arange(max(n_train, q), values.size - h + 1)
    if origins.size == 0:
        raise ScoringError(f"test segment of length {values.size - n_train} is shorter than the horizon {h}")
    X = np.stack([values[i - q:i] for i in origins])
    Y = np.stack([values[i:i + h] for i in origins])
    return X, Y


@dataclass(frozen=True, eq=False)
class ForecastRun:
    dataset: str
    target_id: str
    method: str
    forecasts: np.ndarray
    actuals: np.ndarray
    mase: float

    def __post_init__(self):
        if np.shape(self.forecasts) != np.shape(self.actuals):
            raise ScoringError("forecasts and actuals must have the same shape")


def score_series(model, values, n_train: int, season: int = 1, series_id: str | None = None):
    """Rolling-origin forecasts of ``model`` on one series and their MASE."""
    X, Y = rolling_origins(values, n_train, model.q, model.h)
    pred = model.predict(X)
    return pred, Y, mase(np.asarray(values)[:n_train], Y, pred, season, series_id)


def average_rank(scores: Mapping[str, Sequence[float]]) -> dict[str, float]:
    """Mean per-problem rank of each method (1 = lowest MASE, ties share mid-ranks)."""
    methods = list(scores)
    table = rank_table(scores)
    means = table.mean(axis=1)
    return {m: float(v) for m, v in zip(methods, means)}


def rank_table(scores: Mapping[str, Sequence[float]]) -> np.ndarray:
    """Ranks shaped (methods, problems)."""
    if not scores:
        raise AggregationError("no methods to rank")
    try:
        M = np.array([np.asarray(v, dtype=float) for v in scores.values()])
    except ValueError:
        raise AggregationError("every method must be scored on the same problems") from None
    if M.ndim != 2 or M.shape[1] == 0:
        raise AggregationError("every method must be scored on at least one common problem")
    if not np.all(np.isfinite(M)):
        raise AggregationError("missing (non-finite) score in the ranking table")
    return rankdata(M, axis=0)


def pct_diff(method_mase: float, reference_mase: float) -> float:
    """``100 * (method - reference) / reference``; negative means the method is better."""
    if not reference_mase > 0:
        raise ScoringError(f"reference MASE must be positive, got {reference_mase}")
    return 100.0 * (method_mase - reference_mase) / reference_mase


def bayesian_signed_rank(
    diffs: Sequence[float],
    rope: tuple[float, float] = DEFAULT_ROPE,
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
    prior: float = 0.5,
) -> tuple[float, float, float]:
    """Bayesian signed-rank test on per-problem differences.

    Each Monte Carlo draw takes Dirichlet weights over the observations plus
    a pseudo-observation at 0 (weight parameter ``prior``), and splits the
    weight of all pairwise means ``(z_i + z_j) / 2`` into left of, inside and
    right of the ROPE. The draw counts for whichever region holds the most.

    Returns ``(p_win, p_rope, p_lose)``: the probability that the differences
    lie below, inside or above the ROPE (below = the method has lower error).
    Draws are generated in fixed-size chunks, each from its own child of
    ``SeedSequence(seed)``.
    """
    z = np.asarray(diffs, dtype=float)
    lo, hi = rope
    if z.size < 2:
        raise StatisticalTestError("the signed-rank test needs at least two problems")
    if not lo < hi:
        raise StatisticalTestError(f"ROPE bounds must satisfy lo < hi, got {rope}")
    if draws < 1000:
        raise StatisticalTestError("use at least 1000 Monte Carlo draws")
    if not np.all(np.isfinite(z)):
        raise StatisticalTestError("differences must be finite")
    z = np.concatenate([[0.0], z])
    walsh = (z[:, None] + z[None, :]) / 2.0
    left = (walsh < lo).astype(float)
    right = (walsh > hi).astype(float)
    alpha = np.ones(z.size)
    alpha[0] = prior

    counts = np.zeros(3, dtype=np.int64)
    n_chunks = -(-draws // _DRAW_CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    for c, child in enumerate(children):
        size = min(_DRAW_CHUNK, draws - c * _DRAW_CHUNK)
        W = np.random.default_rng(child).dirichlet(alpha, size=size)
        p_left = np.einsum("ij,ij->i", W @ left, W)
        p_right = np.einsum("ij,ij->i", W @ right, W)
        p_rope = 1.0 - p_left - p_right
        winner = np.argmax(np.column_stack([p_left, p_rope, p_right]), axis=1)
        counts += np.bincount(winner, minlength=3)
    p = counts / draws
    return float(p[0]), float(p[1]), float(p[2])


def other_series_gap(model, collection, target_id: str, train_fraction: float = 0.7, season: int = 1):
    """Mean MASE on the other series minus MASE on ``target_id``, same fitted model.

    ``collection`` must be on the scale the model was trained on. Returns
    ``(gap, per_series_mase)``.
    """
    from .series import train_size

    if len(collection) < 2:
        raise ScoringError("the other-series gap needs at least two series")
    per = {}
    for s in collection:
        n_train = train_size(len(s), train_fraction)
        per[s.id] = score_series(model, s.values, n_train, season, s.id)[2]
    if target_id not in per:
        raise ScoringError(f"target series {target_id!r} is not in the collection")
    others = [v for sid, v in per.items() if sid != target_id]
    return float(np.mean(others) - per[target_id]), per


@dataclass
class ComparisonReport:
    """Scores of several methods over the same problems and their aggregates."""

    methods: list[str]
    problems: list[str]
    scores: dict[str, np.ndarray]
    avg_rank: dict[str, float] = field(default_factory=dict)
    rank_std: dict[str, float] = field(default_factory=dict)
    pct_diff: dict[str, dict[str, float]] = field(default_factory=dict)
    bayes: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    bayes_reference: str | None = None
    gaps: dict[str, float] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def rank_of(self, method: str, problem: str) -> float:
        ranks = rank_table({m: [self.scores[m][self.problems.index(problem)]] for m in self.methods})
        return float(ranks[self.methods.index(method), 0])


def compare(
    scores: Mapping[str, Sequence[float]],
    problems: Sequence[str],
    references: Sequence[str] = ("GLOBAL", "LOCAL"),
    bayes_reference: str = "GLOBAL",
    rope: tuple[float, float] = DEFAULT_ROPE,
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
) -> ComparisonReport:
    """Aggregate a methods-by-problems score table.

    Problems where any method has a missing score are dropped before ranking.
    """
    methods = list(scores)
    M = np.array([np.asarray(scores[m], dtype=float) for m in methods])
    if M.ndim != 2 or M.shape[1] != len(problems):
        raise AggregationError("score table does not match the problem list")
    complete = np.all(np.isfinite(M), axis=0)
    if not complete.any():
        raise AggregationError("no problem has a score for every method")
    kept = M[:, complete]
    report = ComparisonReport(
        methods, list(problems), {m: M[i] for i, m in enumerate(methods)}, bayes_reference=None
    )
    report.extra["complete_problems"] = [p for p, ok in zip(problems, complete) if ok]
    ranks = rank_table({m: kept[i] for i, m in enumerate(methods)})
    report.avg_rank = {m: float(ranks[i].mean()) for i, m in enumerate(methods)}
    report.rank_std = {m: float(ranks[i].std()) for i, m in enumerate(methods)}
    for ref in references:
        if ref not in methods:
            continue
        ref_row = kept[methods.index(ref)]
        if np.any(ref_row <= 0):
            continue
        report.pct_diff[ref] = {
            m: float(np.mean([pct_diff(a, b) for a, b in zip(kept[i], ref_row)])) for i, m in enumerate(methods)
        }
    if bayes_reference in methods and kept.shape[1] >= 2:
        ref_row = kept[methods.index(bayes_reference)]
        if np.all(ref_row > 0):
            report.bayes_reference = bayes_reference
            for i, m in enumerate(methods):
                diffs = [pct_diff(a, b) for a, b in zip(kept[i], ref_row)]
                report.bayes[m] = bayesian_signed_rank(diffs, rope, draws, seed)
    return report
