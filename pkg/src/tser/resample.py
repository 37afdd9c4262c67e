"""Entity labeling and neighbor-based resampling of embedded rows.

All methods work on the concatenated ``(x, y)`` vector of each row with
Euclidean distance. Random draws come from one ``numpy`` generator per call,
consumed in this order: every sample pick, then every neighbor pick, then
every interpolation weight.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, ResampleError, ShapeError
from .preprocess import EmbeddedDataset

log = logging.getLogger(__name__)

METHODS = ("SMOTE", "ADASYN", "BSMOTE", "NEARMISS", "NONE")
OVERSAMPLERS = ("SMOTE", "ADASYN", "BSMOTE")

# absorbs float error in products such as 0.1 * 30 before ceil/floor
_EPS = 1e-9
_CHUNK = 512


@dataclass(frozen=True)
class ResamplePlan:
    """Everything that determines the resampled dataset."""

    method: str = "SMOTE"
    k: int = 10
    ratio: float = 1.0
    seed: int = 0
    target_id: str | None = None
    nearmiss_version: int = 1

    def __post_init__(self):
        method = str(self.method).upper()
        if method == "NM":
            method = "NEARMISS"
        if method not in METHODS:
            raise ConfigError(f"unknown resampling method {self.method!r}; expected one of {METHODS}")
        object.__setattr__(self, "method", method)
        if int(self.k) < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not 0.0 < float(self.ratio) <= 1.0:
            raise ConfigError(f"ratio must lie in (0, 1], got {self.ratio}")
        if self.nearmiss_version not in (1, 2):
            raise ConfigError(f"NearMiss version {self.nearmiss_version} is not supported (1 or 2)")

    def with_target(self, target_id: str) -> ResamplePlan:
        return replace(self, target_id=target_id)


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """An embedded dataset plus the indicator ``b`` (1 for the target's rows)."""

    base: EmbeddedDataset
    labels: np.ndarray
    target_id: str

    @property
    def minority(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 1)

    @property
    def majority(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 0)


def label(dataset: EmbeddedDataset, target_id: str) -> LabeledDataset:
    """Mark rows whose origin is ``target_id`` with 1 and all others with 0."""
    labels = (dataset.origin_id == target_id).astype(np.int8)
    if not labels.any():
        raise ConfigError(f"target series {target_id!r} has no rows in the dataset")
    labels.setflags(write=False)
    return LabeledDataset(dataset, labels, target_id)


def required_synthetics(n_min: int, n_maj: int, ratio: float) -> int:
    """Synthetic rows needed so that minority / majority reaches ``ratio``.

    >>> required_synthetics(100, 900, 1.0)
    800
    >>> required_synthetics(100, 900, 0.5)
    350
    """
    return max(0, math.ceil(ratio * n_maj - _EPS) - n_min)


def nearmiss_retain_count(n_min: int, ratio: float) -> int:
    return int(math.floor(n_min / ratio + _EPS))


def _pairwise_sq(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # explicit differences, not the |a|^2 - 2ab + |b|^2 expansion: exact ties stay ties
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _distances(Z, queries, candidates):
    return np.sqrt(_pairwise_sq(Z[queries], Z[candidates]))


def _smallest(d: np.ndarray, k: int) -> np.ndarray:
    """Column indices of the ``k`` smallest entries per row, ties to the lower index."""
    if k >= d.shape[1]:
        return np.argsort(d, axis=1, kind="stable")
    out = np.empty((d.shape[0], k), dtype=np.int64)
    kth = np.partition(d, k - 1, axis=1)[:, k - 1]
    for r in range(d.shape[0]):
        cand = np.flatnonzero(d[r] <= kth[r])
        out[r] = cand[np.argsort(d[r, cand], kind="stable")[:k]]
    return out


def neighbor_table(Z: np.ndarray, queries, candidates, k: int, exclude_self: bool = True):
    """k nearest candidates of each query row.

    Returns ``(indices, distances)``; indices are row numbers of ``Z``.
    ``candidates`` must be sorted ascending so that ties resolve to the lower
    row. A query that is itself a candidate is excluded when ``exclude_self``.
    """
    queries = np.asarray(queries, dtype=np.int64)
    candidates = np.asarray(candidates, dtype=np.int64)
    idx = np.empty((queries.size, k), dtype=np.int64)
    dist = np.empty((queries.size, k))
    pos = np.full(Z.shape[0], -1, dtype=np.int64)
    pos[candidates] = np.arange(candidates.size)
    for start in range(0, queries.size, _CHUNK):
        qs = queries[start:start + _CHUNK]
        d = _distances(Z, qs, candidates)
        if exclude_self:
            self_pos = pos[qs]
            rows = np.flatnonzero(self_pos >= 0)
            d[rows, self_pos[rows]] = np.inf
        cols = _smallest(d, k)
        idx[start:start + qs.size] = candidates[cols]
        dist[start:start + qs.size] = np.take_along_axis(d, cols, axis=1)
    return idx, dist


def knn(points, query, k: int, restrict=None) -> list[int]:
    """Indices of the ``k`` nearest ``points`` to ``query``.

    ``query`` is either a vector or an integer index into ``points``; in the
    latter case the query itself is excluded. ``restrict`` limits the
    candidate set. Ties go to the lower index; if fewer than ``k``
    candidates exist, all of them are returned.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim != 2:
        raise ShapeError("points must be a list of equal-length vectors")
    member = None
    if isinstance(query, (int, np.integer)):
        member = int(query)
        q = P[member]
    else:
        q = np.asarray(query, dtype=float)
    if q.shape != (P.shape[1],):
        raise ShapeError(f"query has dimension {q.shape}, points have {P.shape[1]}")
    cand = np.arange(P.shape[0]) if restrict is None else np.unique(np.asarray(restrict, dtype=np.int64))
    if member is not None:
        cand = cand[cand != member]
    if cand.size == 0:
        raise ShapeError("no candidate points")
    d = np.sqrt(_pairwise_sq(q[None, :], P[cand]))[0]
    order = np.argsort(d, kind="stable")[: min(k, cand.size)]
    return cand[order].tolist()


def _saturate(k: int, available: int, what: str) -> int:
    if available < 1:
        raise ResampleError(f"no {what} neighbors available")
    if k > available:
        log.warning("k=%d exceeds the %d available %s neighbors; using %d", k, available, what, available)
        return available
    return k


def interpolate(start, neighbor, u):
    """Point(s) ``start + u * (neighbor - start)``; one scalar ``u`` per row."""
    start = np.asarray(start, dtype=float)
    neighbor = np.asarray(neighbor, dtype=float)
    u = np.asarray(u, dtype=float)
    if start.ndim == 2:
        u = u.reshape(-1, 1)
    return start + u * (neighbor - start)


def _synthetic_rows(base: EmbeddedDataset, Z, s, nn, u, origin_ids) -> EmbeddedDataset:
    rows = interpolate(Z[s], Z[nn], u)
    q = base.q
    n = len(s)
    return EmbeddedDataset(
        rows[:, :q], rows[:, q:], origin_ids, np.full(n, -1), np.ones(n, dtype=bool), np.column_stack([s, nn])
    )


def _interpolate(data: LabeledDataset, Z, pool_pos, s_pos, minority, k, rng, origin_ids=None):
    """Draw a neighbor and a weight for every chosen parent and interpolate.

    ``s_pos`` indexes ``pool_pos``; ``pool_pos`` and the neighbor candidates
    are row numbers within ``minority``.
    """
    k_eff = _saturate(k, minority.size - 1, "same-class")
    parents_rows = minority[pool_pos]
    unique_pos, inverse = np.unique(s_pos, return_inverse=True)
    table, _ = neighbor_table(Z, parents_rows[unique_pos], minority, k_eff)
    choice = rng.integers(k_eff, size=s_pos.size)
    u = rng.random(s_pos.size)
    s = parents_rows[s_pos]
    nn = table[inverse, choice]
    if origin_ids is None:
        origin_ids = np.full(s.size, data.target_id, dtype=object)
    else:
        origin_ids = origin_ids[s]
    return _synthetic_rows(data.base, Z, s, nn, u, origin_ids)


def _class_rows(data: LabeledDataset, invert: bool):
    minority, majority = data.minority, data.majority
    return (majority, minority) if invert else (minority, majority)


def _check_minority(minority, what="minority"):
    if minority.size < 2:
        raise ResampleError(f"{what} class has {minority.size} row(s); at least 2 are needed to interpolate")


def _n_new(data, plan, n_new, minority, majority):
    if n_new is None:
        return required_synthetics(minority.size, majority.size, plan.ratio)
    return int(n_new)


def smote(data: LabeledDataset, plan: ResamplePlan, n_new=None, rng=None, invert=False) -> EmbeddedDataset:
    """SMOTE: interpolate random minority rows toward a random minority neighbor.

    Returns only the synthetic rows; their ``parents`` index ``data.base``.
    ``invert`` swaps the class roles (synthetics then keep the origin id of
    the row they start from).
    """
    minority, majority = _class_rows(data, invert)
    _check_minority(minority)
    n_new = _n_new(data, plan, n_new, minority, majority)
    rng = np.random.default_rng(plan.seed) if rng is None else rng
    if n_new == 0:
        return EmbeddedDataset.empty(data.base.q, data.base.h)
    Z = data.base.Z
    s_pos = rng.integers(minority.size, size=n_new)
    ids = data.base.origin_id if invert else None
    return _interpolate(data, Z, np.arange(minority.size), s_pos, minority, plan.k, rng, ids)


def _majority_counts(data, Z, rows, k):
    """Number of other-class rows among each row's k nearest neighbors in the whole dataset."""
    n = len(data.base)
    k_eff = _saturate(k, n - 1, "dataset")
    table, _ = neighbor_table(Z, rows, np.arange(n), k_eff)
    own = data.labels[rows][:, None]
    return (data.labels[table] != own).sum(axis=1), k_eff


def largest_remainder(weights, total: int) -> np.ndarray:
    """Integer apportionment of ``total`` proportional to ``weights``, summing exactly.

    Leftover units go to the largest fractional parts, ties to the lower index.
    """
    w = np.asarray(weights, dtype=float)
    share = w / w.sum() * total
    base = np.floor(share).astype(np.int64)
    short = int(total - base.sum())
    if short > 0:
        order = np.argsort(-(share - base), kind="stable")
        base[order[:short]] += 1
    return base


def adasyn(data: LabeledDataset, plan: ResamplePlan, n_new=None, rng=None, invert=False) -> EmbeddedDataset:
    """ADASYN: per-row synthetic counts proportional to majority density.

    Falls back to ``smote`` (same generator) when no minority row has a
    majority neighbor.
    """
    minority, majority = _class_rows(data, invert)
    _check_minority(minority)
    n_new = _n_new(data, plan, n_new, minority, majority)
    rng = np.random.default_rng(plan.seed) if rng is None else rng
    if n_new == 0:
        return EmbeddedDataset.empty(data.base.q, data.base.h)
    Z = data.base.Z
    delta, k_eff = _majority_counts(data, Z, minority, plan.k)
    r = delta / k_eff
    if r.sum() == 0:
        log.warning("ADASYN: no minority row has a majority neighbor; falling back to SMOTE")
        return smote(data, plan, n_new, rng, invert)
    g = largest_remainder(r, n_new)
    s_pos = np.repeat(np.arange(minority.size), g)
    ids = data.base.origin_id if invert else None
    return _interpolate(data, Z, np.arange(minority.size), s_pos, minority, plan.k, rng, ids)


SAFE, DANGER, NOISE = "SAFE", "DANGER", "NOISE"


def borderline_categories(m: np.ndarray, k: int) -> np.ndarray:
    """SAFE if m < k/2, DANGER if k/2 <= m < k, NOISE if m == k."""
    m = np.asarray(m)
    out = np.full(m.shape, SAFE, dtype=object)
    out[(2 * m >= k) & (m < k)] = DANGER
    out[m >= k] = NOISE
    return out


def borderline_smote(data: LabeledDataset, plan: ResamplePlan, n_new=None, rng=None, invert=False) -> EmbeddedDataset:
    """Borderline-SMOTE: only DANGER minority rows act as interpolation parents.

    Falls back to ``smote`` when the DANGER set is empty.
    """
    minority, majority = _class_rows(data, invert)
    _check_minority(minority)
    n_new = _n_new(data, plan, n_new, minority, majority)
    rng = np.random.default_rng(plan.seed) if rng is None else rng
    if n_new == 0:
        return EmbeddedDataset.empty(data.base.q, data.base.h)
    Z = data.base.Z
    m, k_eff = _majority_counts(data, Z, minority, plan.k)
    danger = np.flatnonzero(borderline_categories(m, k_eff) == DANGER)
    if danger.size == 0:
        log.warning("Borderline-SMOTE: DANGER set is empty; falling back to SMOTE")
        return smote(data, plan, n_new, rng, invert)
    pick = rng.integers(danger.size, size=n_new)
    ids = data.base.origin_id if invert else None
    return _interpolate(data, Z, danger, pick, minority, plan.k, rng, ids)


def nearmiss_scores(Z, majority, minority, k: int, version: int = 1) -> np.ndarray:
    """Mean distance of each majority row to its k nearest (v1) or farthest (v2) minority rows."""
    k_eff = min(k, minority.size)
    scores = np.empty(majority.size)
    for start in range(0, majority.size, _CHUNK):
        rows = majority[start:start + _CHUNK]
        d = np.sort(_distances(Z, rows, minority), axis=1)
        part = d[:, :k_eff] if version == 1 else d[:, d.shape[1] - k_eff:]
        scores[start:start + rows.size] = part.mean(axis=1)
    return scores


def nearmiss(data: LabeledDataset, plan: ResamplePlan) -> EmbeddedDataset:
    """NearMiss undersampling: keep the majority rows closest to the minority.

    Retains ``floor(n_min / ratio)`` majority rows with the smallest score
    (ties to the lower index) plus every minority row, in original order.
    """
    minority, majority = data.minority, data.majority
    if minority.size < 1 or majority.size < 1:
        raise ResampleError("NearMiss needs at least one row of each class")
    keep_n = nearmiss_retain_count(minority.size, plan.ratio)
    if keep_n >= majority.size:
        if keep_n > majority.size:
            log.warning("NearMiss: retain count %d exceeds majority size %d; keeping all", keep_n, majority.size)
        return data.base
    if plan.k > minority.size:
        log.warning("k=%d exceeds the %d minority rows; using %d", plan.k, minority.size, minority.size)
    scores = nearmiss_scores(data.base.Z, majority, minority, plan.k, plan.nearmiss_version)
    kept = majority[np.argsort(scores, kind="stable")[:keep_n]]
    mask = data.labels == 1
    mask[kept] = True
    return data.base.subset(mask)


OVERSAMPLER_FUNCS = {"SMOTE": smote, "ADASYN": adasyn, "BSMOTE": borderline_smote}


def synthesize(data: LabeledDataset, plan: ResamplePlan, rng=None) -> EmbeddedDataset:
    """The resampled part only: synthetic rows, or the reduced set for NearMiss."""
    if plan.method == "NONE":
        return EmbeddedDataset.empty(data.base.q, data.base.h)
    if plan.method == "NEARMISS":
        return nearmiss(data, plan)
    return OVERSAMPLER_FUNCS[plan.method](data, plan, rng=rng)


def augment(data: LabeledDataset, plan: ResamplePlan, rng=None) -> EmbeddedDataset:
    """Original rows followed by synthetic rows; the reduced set for NearMiss.

    ``NONE`` returns ``data.base`` itself.
    """
    if plan.target_id is not None and plan.target_id != data.target_id:
        raise ConfigError(f"plan targets {plan.target_id!r} but data is labeled for {data.target_id!r}")
    if plan.method == "NONE":
        return data.base
    if plan.method == "NEARMISS":
        return nearmiss(data, plan)
    synth = OVERSAMPLER_FUNCS[plan.method](data, plan, rng=rng)
    if not len(synth):
        return data.base
    return EmbeddedDataset.concat([data.base, synth], shift_parents=False)


def dump_resampled(rows: EmbeddedDataset, target_id: str, path: str | Path) -> Path:
    """Write rows as ``target_id,origin_time,synthetic,x_1..x_q,y_1..y_h``.

    Synthetic rows carry ``origin_time = -1``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["target_id", "origin_time", "synthetic"]
    header += [f"x_{i}" for i in range(1, rows.q + 1)] + [f"y_{i}" for i in range(1, rows.h + 1)]
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(rows)):
            t = -1 if rows.synthetic[i] else int(rows.origin_time[i])
            writer.writerow(
                [target_id, t, int(rows.synthetic[i])]
                + [repr(float(v)) for v in rows.X[i]]
                + [repr(float(v)) for v in rows.Y[i]]
            )
    return path
