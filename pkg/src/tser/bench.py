"""Leave-one-series-out experiments and result tables."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import platform
import shutil
import tempfile
from collections.abc import Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import evaluate as ev
from . import resample as rs
from .errors import ConfigError, OutputError, RunError, TSERError
from .learn import DirectForecaster, Regime, assemble_training_set, fit_direct
from .preprocess import EmbeddedDataset, NormalizationState, embed, normalize
from .series import (
    GeneratorSpec,
    SeriesCollection,
    generate_synthetic_collection,
    load_collection,
    read_companion_config,
    train_size,
)

log = logging.getLogger(__name__)

INTEGRATION_REGIMES = ("GLOBAL", "LOCAL", "TSER", "TSER_LOCAL", "TSER_ALL")
SWEEP_POINTS = 20


def default_ratio_grid(points: int = SWEEP_POINTS) -> list[float]:
    """Balance positions of the sweep, excluding the no-resampling endpoint.

    Position ``p`` moves the target's share of rows a fraction ``p`` of the
    way from its natural share to one half.
    """
    return [j / (points - 1) for j in range(1, points)]


@dataclass
class ExperimentConfig:
    """Settings of one experiment; ``from_mapping`` rejects unknown keys."""

    data: str | None = None
    generator: dict | None = None
    name: str | None = None
    q: int = 10
    horizon: int | None = None
    train_fraction: float = 0.7
    frequency: str | None = None
    methods: list[str] = field(default_factory=lambda: ["GLOBAL", "LOCAL", "TSER(SMOTE)"])
    learner: dict = field(default_factory=lambda: {"name": "knn", "k": 10})
    k: int = 10
    ratio: float = 1.0
    ratio_grid: list[float] = field(default_factory=default_ratio_grid)
    resampler: str = "SMOTE"
    seed: int = 0
    season: int = 1
    scale_fit: str = "train"
    rope: list[float] = field(default_factory=lambda: list(ev.DEFAULT_ROPE))
    draws: int = ev.DEFAULT_DRAWS
    other_series: bool = False
    max_series: int | None = None
    jobs: int = 1
    out: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if (self.data is None) == (self.generator is None):
            raise ConfigError("set exactly one of 'data' (file path) and 'generator'")
        if not self.methods:
            raise ConfigError("methods list must not be empty")
        self.methods = [str(m) for m in self.methods]
        for m in self.methods:
            Regime.parse(m, self.k, self.ratio, 0)
        grid = [float(v) for v in self.ratio_grid]
        if not grid or any(not 0 < v <= 1 for v in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("ratio_grid values must lie in (0, 1] and increase strictly")
        self.ratio_grid = grid
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.q < 1:
            raise ConfigError("q must be >= 1")
        if self.horizon is not None and self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not 0 < self.ratio <= 1:
            raise ConfigError("ratio must lie in (0, 1]")
        if self.resampler.upper() not in rs.OVERSAMPLERS:
            raise ConfigError(f"resampler must be one of {rs.OVERSAMPLERS}")
        if len(self.rope) != 2 or not self.rope[0] < self.rope[1]:
            raise ConfigError("rope must be [lo, hi] with lo < hi")
        if self.scale_fit not in ("train", "full"):
            raise ConfigError("scale_fit must be 'train' or 'full'")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.max_series is not None and self.max_series < 1:
            raise ConfigError("max_series must be >= 1")
        if not isinstance(self.learner, Mapping) or "name" not in self.learner:
            raise ConfigError("learner must be a mapping with a 'name'")

    @classmethod
    def from_mapping(cls, data: Mapping, base_dir: Path | None = None) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        kwargs = dict(data)
        if kwargs.get("data") and base_dir is not None and not Path(kwargs["data"]).is_absolute():
            kwargs["data"] = str(base_dir / kwargs["data"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path: str | Path) -> ExperimentConfig:
        path = Path(path)
        return cls.from_mapping(read_companion_config(path), base_dir=path.parent)

    def result_dict(self) -> dict:
        """Settings that influence results (no output path or worker count)."""
        d = asdict(self)
        d.pop("out")
        d.pop("jobs")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.result_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def dataset_name(self) -> str:
        if self.name:
            return self.name
        if self.data:
            return Path(self.data).stem
        return "synthetic"


def load_dataset(config: ExperimentConfig) -> SeriesCollection:
    if config.data is not None:
        return load_collection(config.data, config.horizon, config.frequency)
    gen = dict(config.generator)
    gen.setdefault("q", config.q)
    if config.horizon is not None:
        gen["horizon"] = config.horizon
    return generate_synthetic_collection(GeneratorSpec.from_mapping(gen))


@dataclass
class Prepared:
    """Everything shared by the target iterations of one dataset."""

    name: str
    collection: SeriesCollection
    normalized: SeriesCollection
    state: NormalizationState
    train: EmbeddedDataset
    n_train: dict[str, int]
    q: int
    h: int


def prepare(config: ExperimentConfig, collection: SeriesCollection | None = None) -> Prepared:
    """Normalize once per dataset and embed the training segment of every series."""
    if collection is None:
        collection = load_dataset(config)
    h = collection.horizon
    normalized, state = normalize(collection, config.train_fraction, config.scale_fit)
    n_train = {s.id: train_size(len(s), config.train_fraction) for s in normalized}
    train = normalized.replace_series(s.with_values(s.values[: n_train[s.id]]) for s in normalized)
    return Prepared(config.dataset_name, collection, normalized, state, embed(train, config.q, h),
                    n_train, config.q, h)


def job_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def select_targets(prep: Prepared, config: ExperimentConfig) -> list[int]:
    ids = prep.normalized.ids
    present = set(prep.train.origin_id.tolist())
    idx = list(range(len(ids)))
    if config.max_series is not None and config.max_series < len(idx):
        rng = np.random.default_rng(config.seed)
        idx = sorted(rng.choice(len(ids), size=config.max_series, replace=False).tolist())
    skipped = [ids[i] for i in idx if ids[i] not in present]
    if skipped:
        log.warning("series without training rows are not evaluated: %s", skipped)
    return [i for i in idx if ids[i] in present]


def provenance(ds: EmbeddedDataset) -> set[tuple[str, int]]:
    """``(origin_id, origin_time)`` of every original row a training set draws on."""
    out = set()
    stack = list(range(len(ds)))
    seen = set()
    while stack:
        i = stack.pop()
        if i in seen:
            continue
        seen.add(i)
        if ds.synthetic[i]:
            stack.extend(int(p) for p in ds.parents[i] if p >= 0)
        else:
            out.add((ds.origin_id[i], int(ds.origin_time[i])))
    return out


@dataclass
class Cell:
    target_id: str
    method: str
    mase: float
    n_rows: int = 0
    error: str | None = None
    gap: float | None = None
    realized_ratio: float | None = None
    provenance: set | None = None


@dataclass
class _Task:
    index: int
    seed: int
    methods: list
    prep: Prepared
    config: ExperimentConfig
    shared: dict
    audit: bool


def _score(model: DirectForecaster, prep: Prepared, sid: str, season: int) -> float:
    values = prep.normalized[sid].values
    return ev.score_series(model, values, prep.n_train[sid], season, sid)[2]


def _gap(model, prep, sid, config):
    per = {
        s.id: _score(model, prep, s.id, config.season)
        for s in prep.normalized
        if s.id in prep.n_train and len(s) - prep.n_train[s.id] >= prep.h
    }
    others = [v for k, v in per.items() if k != sid]
    return float(np.mean(others) - per[sid]) if others else None


def _run_target(task: _Task) -> list[Cell]:
    prep, config = task.prep, task.config
    sid = prep.normalized.ids[task.index]
    cells = []
    for label, regime in task.methods:
        regime = _with_seed(regime, task.seed)
        try:
            if label in task.shared:
                model, n_rows, prov = task.shared[label]
            else:
                ds = assemble_training_set(prep.train, regime, sid)
                model = fit_direct(ds, config.learner, seed=task.seed)
                n_rows = len(ds)
                prov = provenance(ds) if task.audit else None
            score = _score(model, prep, sid, config.season)
            gap = _gap(model, prep, sid, config) if config.other_series else None
            ratio = regime.plan.ratio if regime.plan is not None else None
            cells.append(Cell(sid, label, score, n_rows, None, gap, ratio, prov))
        except TSERError as exc:
            log.warning("cell (%s, %s) failed: %s", sid, label, exc)
            cells.append(Cell(sid, label, float("nan"), 0, f"{type(exc).__name__}: {exc}"))
    return cells


def _with_seed(regime: Regime, seed: int) -> Regime:
    if regime.plan is None:
        return regime
    return Regime(regime.name, rs.ResamplePlan(regime.plan.method, regime.plan.k, regime.plan.ratio, seed,
                                               None, regime.plan.nearmiss_version))


def _shared_global(prep, config, audit):
    """GLOBAL does not depend on the target: fit it once per dataset."""
    if not len(prep.train):
        return {}
    model = fit_direct(prep.train, config.learner, seed=config.seed)
    return {"GLOBAL": (model, len(prep.train), provenance(prep.train) if audit else None)}


def _execute(tasks: list[_Task], jobs: int) -> list[Cell]:
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_target, tasks))
    else:
        results = [_run_target(t) for t in tasks]
    return [c for cells in results for c in cells]


@dataclass
class RunResult:
    """Cells of one experiment plus the aggregated report."""

    kind: str
    config: ExperimentConfig
    dataset: str
    methods: list[str]
    targets: list[str]
    cells: list[Cell]
    report: ev.ComparisonReport
    extra: dict = field(default_factory=dict)

    def table(self) -> dict[str, np.ndarray]:
        pos = {t: i for i, t in enumerate(self.targets)}
        out = {m: np.full(len(self.targets), np.nan) for m in self.methods}
        for c in self.cells:
            out[c.method][pos[c.target_id]] = c.mase
        return out

    def cell(self, target_id: str, method: str) -> Cell:
        for c in self.cells:
            if c.target_id == target_id and c.method == method:
                return c
        raise KeyError((target_id, method))


def _aggregate(kind, config, prep, methods, targets, cells, references=("GLOBAL", "LOCAL")) -> RunResult:
    ok = [c for c in cells if np.isfinite(c.mase)]
    if not ok:
        raise RunError("the run produced no successful (series, method) cells")
    result = RunResult(kind, config, prep.name, methods, targets, cells, None)
    table = result.table()
    try:
        report = ev.compare(table, targets, references, "GLOBAL", tuple(config.rope), config.draws, config.seed)
    except TSERError as exc:
        raise RunError(f"cannot aggregate results: {exc}") from None
    if config.other_series:
        report.gaps = {
            m: float(np.nanmean([c.gap for c in cells if c.method == m and c.gap is not None] or [np.nan]))
            for m in methods
        }
    result.report = report
    return result


def _regimes(config: ExperimentConfig, names: Sequence[str] | None = None):
    names = config.methods if names is None else names
    regimes = [Regime.parse(m, config.k, config.ratio, config.seed) for m in names]
    labels = [r.label for r in regimes]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate methods: {labels}")
    return list(zip(labels, regimes))


def run_loo(config: ExperimentConfig, collection: SeriesCollection | None = None, audit: bool = False,
            methods: Sequence[str] | None = None, kind: str = "run") -> RunResult:
    """Leave-one-series-out evaluation of every configured method.

    Each series in turn is the target: training rows come from the first
    ``train_fraction`` of every series, the score is the rolling-origin MASE
    on the rest of the target series. Failing cells become NaN.
    """
    prep = prepare(config, collection)
    pairs = _regimes(config, methods)
    shared = _shared_global(prep, config, audit) if any(r.name == "GLOBAL" for _, r in pairs) else {}
    targets = select_targets(prep, config)
    tasks = [_Task(i, job_seed(config.seed, i), pairs, prep, config, shared, audit) for i in targets]
    cells = _execute(tasks, config.jobs)
    ids = [prep.normalized.ids[i] for i in targets]
    return _aggregate(kind, config, prep, [lab for lab, _ in pairs], ids, cells)


def run_integration_study(config: ExperimentConfig, collection: SeriesCollection | None = None,
                          audit: bool = False) -> RunResult:
    """GLOBAL, LOCAL and the three ways of integrating synthetic rows."""
    m = config.resampler.upper()
    names = ["GLOBAL", "LOCAL", f"TSER({m})", f"TSER_LOCAL({m})", f"TSER_ALL({m})"]
    return run_loo(config, collection, audit, names, kind="integration")


def sweep_labels(grid: Sequence[float]) -> list[str]:
    labels = ["R00"]
    for j, _ in enumerate(grid, start=1):
        labels.append(f"R{j:02d}")
    return labels


def realized_ratio(n_min: int, n_maj: int, position: float) -> float | None:
    """Sampling ratio for a balance position; ``None`` means no resampling."""
    if position >= 1.0:
        return 1.0
    f0 = n_min / (n_min + n_maj)
    f = f0 + position * (0.5 - f0)
    ratio = f / (1.0 - f)
    if rs.required_synthetics(n_min, n_maj, ratio) == 0:
        return None
    return ratio


def _run_sweep_target(task: _Task) -> list[Cell]:
    prep, config = task.prep, task.config
    sid = prep.normalized.ids[task.index]
    n_min = int(np.sum(prep.train.origin_id == sid))
    n_maj = len(prep.train) - n_min
    cells = []
    for label, position in task.methods:
        try:
            ratio = realized_ratio(n_min, n_maj, position)
            if ratio is None:
                plan = rs.ResamplePlan("NONE", config.k, 1.0, task.seed)
            else:
                plan = rs.ResamplePlan(config.resampler, config.k, ratio, task.seed)
            ds = assemble_training_set(prep.train, Regime("TSER", plan), sid)
            model = fit_direct(ds, config.learner, seed=task.seed)
            score = _score(model, prep, sid, config.season)
            cells.append(Cell(sid, label, score, len(ds), None, None, ratio if ratio is not None else n_min / n_maj))
        except TSERError as exc:
            log.warning("cell (%s, %s) failed: %s", sid, label, exc)
            cells.append(Cell(sid, label, float("nan"), 0, f"{type(exc).__name__}: {exc}"))
    return cells


def _execute_sweep(tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_sweep_target, tasks))
    else:
        results = [_run_sweep_target(t) for t in tasks]
    return [c for cells in results for c in cells]


def run_ratio_sweep(config: ExperimentConfig, collection: SeriesCollection | None = None) -> RunResult:
    """TSER at every balance position of ``ratio_grid`` plus the no-resampling endpoint.

    ``R00`` is the unresampled dataset, ``R01``... follow the grid; the last
    default point is the balanced dataset. Ranks are computed across the
    grid points for each target.
    """
    prep = prepare(config, collection)
    positions = [0.0] + list(config.ratio_grid)
    labels = sweep_labels(config.ratio_grid)
    targets = select_targets(prep, config)
    tasks = [
        _Task(i, job_seed(config.seed, i), list(zip(labels, positions)), prep, config, {}, False) for i in targets
    ]
    cells = _execute_sweep(tasks, config.jobs)
    ids = [prep.normalized.ids[i] for i in targets]
    result = _aggregate("ratio-sweep", config, prep, labels, ids, cells, references=())
    result.extra["positions"] = dict(zip(labels, positions))
    result.extra["mean_ratio"] = {
        lab: float(np.mean([c.realized_ratio for c in cells if c.method == lab and c.realized_ratio is not None]))
        for lab in labels
    }
    return result


def _fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    return repr(v) if np.isfinite(v) else "nan"


def build_manifest(result: RunResult) -> dict:
    import scipy

    manifest = {
        "kind": result.kind,
        "dataset": result.dataset,
        "config": result.config.result_dict(),
        "config_hash": result.config.config_hash(),
        "seed": result.config.seed,
        "versions": {
            "tser": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "normalization": f"per-series mean fitted once per dataset on the {result.config.scale_fit} portion",
        "methods": result.methods,
        "targets": result.targets,
        "failures": [
            {"target_id": c.target_id, "method": c.method, "error": c.error} for c in result.cells if c.error
        ],
    }
    if result.kind == "ratio-sweep":
        manifest["sweep_positions"] = result.extra["positions"]
        manifest["sweep_mean_ratio"] = result.extra["mean_ratio"]
    blob = json.dumps(manifest, sort_keys=True, default=str)
    manifest["manifest_hash"] = hashlib.sha256(blob.encode()).hexdigest()
    return manifest


def report(result: RunResult, out_dir: str | Path) -> dict[str, Path]:
    """Write ``per_series_scores.csv``, ``summary.csv`` and ``manifest.json``.

    Files are written to a temporary directory first and moved into place
    only when all of them are complete.
    """
    if result is None or not any(np.isfinite(c.mase) for c in result.cells):
        raise RunError("nothing to report: no successful cells")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=".tser-", dir=out_dir))
    except OSError as exc:
        raise OutputError(f"cannot write to {out_dir}: {exc}") from None
    rep = result.report
    try:
        with (tmp / "per_series_scores.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["dataset", "target_id", "method", "mase"])
            for c in result.cells:
                w.writerow([result.dataset, c.target_id, c.method, _fmt(c.mase)])
        with (tmp / "summary.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            header = ["method", "avg_rank", "pct_diff_vs_global", "pct_diff_vs_local", "p_win", "p_rope", "p_lose"]
            if rep.gaps:
                header.append("other_series_gap")
            w.writerow(header)
            for m in result.methods:
                bayes = rep.bayes.get(m, (None, None, None))
                row = [m, _fmt(rep.avg_rank.get(m)),
                       _fmt(rep.pct_diff.get("GLOBAL", {}).get(m)), _fmt(rep.pct_diff.get("LOCAL", {}).get(m)),
                       *(_fmt(b) for b in bayes)]
                if rep.gaps:
                    row.append(_fmt(rep.gaps.get(m)))
                w.writerow(row)
        files = ["per_series_scores.csv", "summary.csv", "manifest.json"]
        if result.kind == "ratio-sweep":
            with (tmp / "sweep.csv").open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["grid_index", "point", "position", "mean_ratio", "avg_rank"])
                for j, m in enumerate(result.methods):
                    w.writerow([j, m, _fmt(result.extra["positions"][m]), _fmt(result.extra["mean_ratio"][m]),
                                _fmt(rep.avg_rank[m])])
            files.append("sweep.csv")
        with (tmp / "manifest.json").open("w", encoding="utf-8") as fh:
            json.dump(build_manifest(result), fh, sort_keys=True, indent=2, default=str)
            fh.write("\n")
        written = {}
        for name in files:
            dest = out_dir / name
            os.replace(tmp / name, dest)
            written[name] = dest
        return written
    except OSError as exc:
        raise OutputError(f"cannot write report to {out_dir}: {exc}") from None
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
