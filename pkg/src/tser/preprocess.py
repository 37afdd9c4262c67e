"""Mean normalization and time-delay embedding of a series collection."""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

from .errors import ConfigError, NormalizationError, ShapeError, StateError
from .series import SeriesCollection, train_size

log = logging.getLogger(__name__)

MIN_ABS_SCALE = 1e-12


@dataclass(frozen=True)
class NormalizationState:
    """Per-series scale (mean of the fitted portion) used by ``normalize``."""

    scales: Mapping[str, float]
    scale_fit: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "scales", MappingProxyType(dict(self.scales)))

    def __reduce__(self):
        return (NormalizationState, (dict(self.scales), self.scale_fit))

    def __getitem__(self, sid: str) -> float:
        try:
            return self.scales[sid]
        except KeyError:
            raise StateError(f"series {sid!r} has no fitted scale") from None

    def __contains__(self, sid) -> bool:
        return sid in self.scales


def fit_scales(collection: SeriesCollection, train_fraction: float | None = 0.7, scale_fit: str = "train") -> NormalizationState:
    if scale_fit not in ("train", "full"):
        raise ConfigError(f"scale_fit must be 'train' or 'full', got {scale_fit!r}")
    scales = {}
    for s in collection:
        if scale_fit == "full" or train_fraction is None:
            part = s.values
        else:
            part = s.values[: max(1, train_size(len(s), train_fraction))]
        mean = float(np.mean(part))
        if not np.isfinite(mean) or abs(mean) <= MIN_ABS_SCALE:
            raise NormalizationError(f"series {s.id!r}: mean {mean!r} is too close to zero to normalize")
        if mean < 0:
            log.warning("series %r has a negative mean (%g); normalized values flip sign", s.id, mean)
        scales[s.id] = mean
    return NormalizationState(scales, scale_fit)


def normalize(
    collection: SeriesCollection, train_fraction: float | None = 0.7, scale_fit: str = "train"
) -> tuple[SeriesCollection, NormalizationState]:
    """Divide every series by the mean of its training portion.

    With ``scale_fit="full"`` (or ``train_fraction=None``) the mean is taken
    over the whole series instead.

    Examples
    --------
    >>> from tser.series import SeriesCollection, TimeSeries
    >>> c = SeriesCollection((TimeSeries("a", [2.0, 4.0, 6.0]),), horizon=1)
    >>> normalize(c, scale_fit="full")[0]["a"].values.tolist()
    [0.5, 1.0, 1.5]
    """
    state = fit_scales(collection, train_fraction, scale_fit)
    scaled = [s.with_values(s.values / state[s.id]) for s in collection]
    return collection.replace_series(scaled), state


def denormalize(forecasts: Mapping[str, Sequence[float]], state: NormalizationState) -> dict[str, np.ndarray]:
    """Multiply each series' vector by its stored scale."""
    return {sid: np.asarray(v, dtype=float) * state[sid] for sid, v in forecasts.items()}


@dataclass(frozen=True)
class EmbeddedSample:
    x: np.ndarray
    y: np.ndarray
    origin_id: str
    origin_time: int
    synthetic: bool = False


def _readonly(arr, dtype=None) -> np.ndarray:
    arr = np.array(arr, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EmbeddedDataset:
    """Supervised rows ``(x, y)`` stored column-wise.

    ``x`` holds lags oldest-first, so ``(x, y)`` of an original row is a
    contiguous window of the source series starting at ``origin_time - q``.
    ``parents`` holds, for synthetic rows, the two row indices (into this
    dataset) that were interpolated; ``-1`` for original rows.
    """

    X: np.ndarray
    Y: np.ndarray
    origin_id: np.ndarray
    origin_time: np.ndarray
    synthetic: np.ndarray
    parents: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
            raise ShapeError(f"X {X.shape} and Y {Y.shape} must be 2-D with equal row counts")
        n = X.shape[0]
        parents = self.parents
        if parents is None:
            parents = np.full((n, 2), -1, dtype=np.int64)
        fields = {
            "X": _readonly(X),
            "Y": _readonly(Y),
            "origin_id": _readonly(self.origin_id, dtype=object),
            "origin_time": _readonly(self.origin_time, dtype=np.int64),
            "synthetic": _readonly(self.synthetic, dtype=bool),
            "parents": _readonly(parents, dtype=np.int64).reshape(n, 2),
        }
        for name in ("origin_id", "origin_time", "synthetic"):
            if fields[name].shape != (n,):
                raise ShapeError(f"{name} must have one entry per row")
        if n and not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ShapeError("embedded rows must be finite")
        for name, value in fields.items():
            object.__setattr__(self, name, value)

    @classmethod
    def empty(cls, q: int, h: int) -> EmbeddedDataset:
        return cls(np.empty((0, q)), np.empty((0, h)), [], [], [])

    @property
    def q(self) -> int:
        return self.X.shape[1]

    @property
    def h(self) -> int:
        return self.Y.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def Z(self) -> np.ndarray:
        """Concatenated ``(x, y)`` rows, the space resamplers work in."""
        return np.hstack([self.X, self.Y])

    @property
    def samples(self) -> list[EmbeddedSample]:
        return [
            EmbeddedSample(self.X[i], self.Y[i], self.origin_id[i], int(self.origin_time[i]), bool(self.synthetic[i]))
            for i in range(len(self))
        ]

    def mask_of(self, sid: str) -> np.ndarray:
        return self.origin_id == sid

    def subset(self, index) -> EmbeddedDataset:
        """Rows selected by a boolean mask or an index array, parents remapped."""
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        remap = np.full(len(self) + 1, -1, dtype=np.int64)
        remap[index] = np.arange(index.size)
        parents = self.parents[index]
        parents = np.where(parents >= 0, remap[parents], -1)
        return EmbeddedDataset(
            self.X[index], self.Y[index], self.origin_id[index], self.origin_time[index],
            self.synthetic[index], parents,
        )

    def equals(self, other: EmbeddedDataset) -> bool:
        return (
            isinstance(other, EmbeddedDataset)
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.Y, other.Y)
            and np.array_equal(self.origin_id, other.origin_id)
            and np.array_equal(self.origin_time, other.origin_time)
            and np.array_equal(self.synthetic, other.synthetic)
            and np.array_equal(self.parents, other.parents)
        )

    @staticmethod
    def concat(parts: Iterable[EmbeddedDataset], shift_parents: bool = True) -> EmbeddedDataset:
        """Stack datasets.

        Parent indices are shifted by each part's offset unless
        ``shift_parents`` is false, which is what appending resampler output
        (whose parents already index the leading part) needs.
        """
        parts = list(parts)
        if not parts:
            raise ShapeError("nothing to concatenate")
        q, h = parts[0].q, parts[0].h
        if any(p.q != q or p.h != h for p in parts):
            raise ShapeError("all parts must share q and h")
        offsets = np.cumsum([0] + [len(p) for p in parts[:-1]])
        if not shift_parents:
            offsets = np.zeros(len(parts), dtype=np.int64)
        parents = [np.where(p.parents >= 0, p.parents + off, -1) for p, off in zip(parts, offsets)]
        return EmbeddedDataset(
            np.vstack([p.X for p in parts]),
            np.vstack([p.Y for p in parts]),
            np.concatenate([p.origin_id for p in parts]),
            np.concatenate([p.origin_time for p in parts]),
            np.concatenate([p.synthetic for p in parts]),
            np.vstack(parents),
        )


def embed_values(values: np.ndarray, q: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    """Sliding windows of a 1-D array: ``X`` is (n, q) oldest-first, ``Y`` is (n, h)."""
    values = np.asarray(values, dtype=float)
    n = values.size - q - h + 1
    if n <= 0:
        return np.empty((0, q)), np.empty((0, h))
    windows = np.lib.stride_tricks.sliding_window_view(values, q + h)
    return windows[:, :q].copy(), windows[:, q:].copy()


def embed(collection: SeriesCollection, q: int, h: int | None = None) -> EmbeddedDataset:
    """Time-delay embedding of every series, ordered by (series, time).

    Series shorter than ``q + h`` contribute no rows (a warning is logged).
    """
    if h is None:
        h = collection.horizon
    if q < 1 or h < 1:
        raise ConfigError(f"q and h must be >= 1, got q={q}, h={h}")
    Xs, Ys, ids, times = [], [], [], []
    for s in collection:
        X, Y = embed_values(s.values, q, h)
        if not len(X):
            log.warning("series %r (length %d) is shorter than q + h = %d; skipped", s.id, len(s), q + h)
            continue
        Xs.append(X)
        Ys.append(Y)
        ids.extend([s.id] * len(X))
        times.append(np.arange(q, q + len(X)))
    if not Xs:
        return EmbeddedDataset.empty(q, h)
    n = len(ids)
    return EmbeddedDataset(
        np.vstack(Xs), np.vstack(Ys), np.array(ids, dtype=object), np.concatenate(times), np.zeros(n, dtype=bool)
    )
