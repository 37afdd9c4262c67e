"""Series containers, long-format ingestion and the synthetic collection generator."""

from __future__ import annotations

import csv
import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, FormatError, IntegrityError, ParseError

log = logging.getLogger(__name__)

LONG_COLUMNS = ("unique_id", "ds", "y")


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """A univariate, time-ordered sequence of finite values.

    The position in ``values`` is the clock; timestamps are not kept.
    """

    id: str
    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.values)
        if arr.ndim != 1:
            raise ConfigError(f"series {self.id!r}: values must be one-dimensional")
        if arr.size < 1:
            raise ConfigError(f"series {self.id!r}: needs at least one observation")
        if not np.all(np.isfinite(arr)):
            raise ConfigError(f"series {self.id!r}: values must be finite")
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.id, self.values.tobytes()))

    def with_values(self, values) -> TimeSeries:
        return TimeSeries(self.id, values)


@dataclass(frozen=True, eq=False)
class SeriesCollection:
    """An ordered set of series sharing a horizon and a frequency label."""

    series: tuple[TimeSeries, ...]
    horizon: int
    frequency: str = "unknown"
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        series = tuple(self.series)
        if not series:
            raise ConfigError("a collection needs at least one series")
        ids = [s.id for s in series]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise IntegrityError(f"duplicate series ids: {dupes}")
        if int(self.horizon) < 1:
            raise ConfigError("horizon must be a positive integer")
        object.__setattr__(self, "series", series)
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def n(self) -> int:
        return len(self.series)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.series]

    def __len__(self) -> int:
        return len(self.series)

    def __iter__(self):
        return iter(self.series)

    def __getitem__(self, key) -> TimeSeries:
        if isinstance(key, str):
            for s in self.series:
                if s.id == key:
                    return s
            raise KeyError(key)
        return self.series[key]

    def __contains__(self, key) -> bool:
        return any(s.id == key for s in self.series)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SeriesCollection):
            return NotImplemented
        return (
            self.series == other.series
            and self.horizon == other.horizon
            and self.frequency == other.frequency
        )

    __hash__ = None

    def replace_series(self, series: Iterable[TimeSeries]) -> SeriesCollection:
        return SeriesCollection(tuple(series), self.horizon, self.frequency, self.metadata)


def _parse_position(raw: str, row: int):
    raw = raw.strip()
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(raw)
    except ValueError:
        raise ParseError(f"row {row}: cannot parse ds value {raw!r}", row=row) from None


def read_companion_config(path: str | Path) -> dict:
    """Read a run/companion config (YAML mapping)."""
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return data


def _companion_path(path: Path) -> Path | None:
    for suffix in (".yaml", ".yml"):
        candidate = path.with_suffix(suffix)
        if candidate.exists():
            return candidate
    return None


def load_collection(
    path: str | Path,
    horizon: int | None = None,
    frequency: str | None = None,
    config_path: str | Path | None = None,
) -> SeriesCollection:
    """Load a long-format ``unique_id,ds,y`` file into a collection.

    ``horizon`` and ``frequency`` fall back to the companion config, which is
    ``config_path`` or a sibling file with the same stem and a ``.yaml`` suffix.
    Row numbers in error messages are file line numbers (the header is row 1).
    """
    path = Path(path)
    if horizon is None or frequency is None:
        companion = Path(config_path) if config_path else _companion_path(path)
        extra = read_companion_config(companion) if companion else {}
        if horizon is None:
            horizon = extra.get("horizon", extra.get("h"))
        if frequency is None:
            frequency = extra.get("frequency", "unknown")
    if horizon is None:
        raise ConfigError(f"no horizon given for {path} and no companion config declares one")

    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError(f"{path}: empty file")
        header = [h.strip() for h in header]
        missing = [c for c in LONG_COLUMNS if c not in header]
        if missing:
            raise FormatError(f"{path}: missing columns {missing}")
        col = {c: header.index(c) for c in LONG_COLUMNS}

        records: dict[str, dict] = {}
        kinds: dict[str, type] = {}
        for row, fields in enumerate(reader, start=2):
            if not fields or all(not f.strip() for f in fields):
                continue
            if len(fields) < len(header):
                raise FormatError(f"row {row}: expected {len(header)} fields, got {len(fields)}")
            sid = fields[col["unique_id"]].strip()
            pos = _parse_position(fields[col["ds"]], row)
            raw = fields[col["y"]].strip()
            try:
                value = float(raw)
            except ValueError:
                raise ParseError(f"row {row}: non-numeric value {raw!r}", row=row) from None
            if not math.isfinite(value):
                raise ParseError(f"row {row}: non-finite value {raw!r}", row=row)
            kind = kinds.setdefault(sid, type(pos))
            if type(pos) is not kind:
                raise ParseError(f"row {row}: series {sid!r} mixes ordinal and timestamp ds", row=row)
            bucket = records.setdefault(sid, {})
            if pos in bucket:
                raise IntegrityError(f"row {row}: duplicate (unique_id, ds) = ({sid!r}, {pos})")
            bucket[pos] = value

    if not records:
        raise FormatError(f"{path}: no data rows")
    series = [
        TimeSeries(sid, [bucket[p] for p in sorted(bucket)]) for sid, bucket in records.items()
    ]
    return SeriesCollection(tuple(series), int(horizon), str(frequency))


def write_collection(collection: SeriesCollection, path: str | Path, write_companion: bool = True) -> Path:
    """Write a collection in the long format with integer ordinals.

    Values use ``repr`` so a reload is bitwise identical.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LONG_COLUMNS)
        for s in collection:
            for i, v in enumerate(s.values.tolist(), start=1):
                writer.writerow((s.id, i, repr(v)))
    if write_companion:
        meta = {"horizon": collection.horizon, "frequency": collection.frequency}
        with path.with_suffix(".yaml").open("w", encoding="utf-8") as fh:
            yaml.safe_dump(meta, fh, sort_keys=True)
    return path


def slice_train_test(series: TimeSeries, train_fraction: float) -> tuple[TimeSeries, TimeSeries]:
    """Split into the first ``floor(train_fraction * t)`` observations and the rest."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if len(series) < 2:
        raise ConfigError(f"series {series.id!r} needs at least two observations to split")
    cut = train_size(len(series), train_fraction)
    if cut < 1 or cut >= len(series):
        raise ConfigError(f"series {series.id!r}: split at {cut} leaves an empty part")
    return series.with_values(series.values[:cut]), series.with_values(series.values[cut:])


def train_size(length: int, train_fraction: float) -> int:
    # guard against 0.7 * 10 == 6.999...
    return int(math.floor(train_fraction * length + 1e-9))


@dataclass(frozen=True)
class GeneratorSpec:
    """Configuration of the synthetic heterogeneous collection.

    ``n_series - 1`` series share one AR(2) + seasonal regime; the last one,
    with id ``deviant_id``, is drawn from a regime shifted by ``heterogeneity``
    (0 puts it in the shared regime).
    """

    n_series: int = 20
    lengths: int | Sequence[int] = 300
    seed: int = 1
    heterogeneity: float = 1.0
    q: int = 10
    horizon: int = 6
    frequency: str = "synthetic"
    deviant_id: str = "deviant"
    level: float = 10.0
    period: int = 12
    ar: tuple[float, float] = (0.5, 0.2)
    ar_shift: tuple[float, float] = (0.6, -0.4)
    amplitude: float = 2.0
    amplitude_shift: float = 2.0
    noise: float = 1.0

    @classmethod
    def from_mapping(cls, data: Mapping) -> GeneratorSpec:
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown generator keys: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("ar", "ar_shift"):
            if key in kwargs:
                kwargs[key] = tuple(float(v) for v in kwargs[key])
        if isinstance(kwargs.get("lengths"), list):
            kwargs["lengths"] = tuple(kwargs["lengths"])
        return cls(**kwargs)


def _simulate(rng: np.random.Generator, length: int, ar, amplitude: float, spec: GeneratorSpec) -> np.ndarray:
    burn = 50
    total = length + burn
    eps = rng.normal(0.0, spec.noise, size=total)
    z = np.zeros(total)
    for t in range(2, total):
        z[t] = ar[0] * z[t - 1] + ar[1] * z[t - 2] + eps[t]
    phase = rng.uniform(0.0, 2 * np.pi)
    t = np.arange(length)
    season = amplitude * np.sin(2 * np.pi * t / spec.period + phase)
    return spec.level + season + z[burn:]


def generate_synthetic_collection(spec: GeneratorSpec | Mapping | None = None) -> SeriesCollection:
    """Generate a deterministic collection with one deviant series.

    Examples
    --------
    >>> c = generate_synthetic_collection(GeneratorSpec(n_series=3, lengths=40, seed=0))
    >>> c.ids
    ['s00', 's01', 'deviant']
    """
    if spec is None:
        spec = GeneratorSpec()
    elif isinstance(spec, Mapping):
        spec = GeneratorSpec.from_mapping(spec)
    if spec.n_series < 2:
        raise ConfigError("n_series must be at least 2")
    if isinstance(spec.lengths, (int, np.integer)):
        lengths = [int(spec.lengths)] * spec.n_series
    else:
        lengths = [int(v) for v in spec.lengths]
        if len(lengths) != spec.n_series:
            raise ConfigError("lengths must be an int or one value per series")
    minimum = spec.q + spec.horizon + 10
    short = [v for v in lengths if v < minimum]
    if short:
        raise ConfigError(f"all lengths must be >= q + h + 10 = {minimum}, got {short}")
    if spec.heterogeneity < 0:
        raise ConfigError("heterogeneity must be nonnegative")

    rng = np.random.default_rng(spec.seed)
    series = []
    for j in range(spec.n_series - 1):
        values = _simulate(rng, lengths[j], spec.ar, spec.amplitude, spec)
        series.append(TimeSeries(f"s{j:02d}", values))
    ar_dev = (
        spec.ar[0] + spec.heterogeneity * spec.ar_shift[0],
        spec.ar[1] + spec.heterogeneity * spec.ar_shift[1],
    )
    amp_dev = spec.amplitude + spec.heterogeneity * spec.amplitude_shift
    series.append(TimeSeries(spec.deviant_id, _simulate(rng, lengths[-1], ar_dev, amp_dev, spec)))
    return SeriesCollection(
        tuple(series), spec.horizon, spec.frequency, {"deviant_id": spec.deviant_id}
    )
