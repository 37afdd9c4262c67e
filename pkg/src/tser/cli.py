"""Command-line entry point: ``tser {run,integration,ratio-sweep,gen,resample}``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import bench
from . import resample as rs
from .errors import ConfigError, DataError, RunError, TSERError
from .series import GeneratorSpec, generate_synthetic_collection, read_companion_config, write_collection

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_EMPTY = 0, 1, 2, 3

log = logging.getLogger("tser")


def _load_config(args) -> bench.ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required")
    config = bench.ExperimentConfig.from_file(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "max_series", None) is not None:
        overrides["max_series"] = args.max_series
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    if args.out is not None:
        overrides["out"] = args.out
    return dataclasses.replace(config, **overrides)


def _out_dir(config) -> Path:
    if not config.out:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    return Path(config.out)


def cmd_experiment(args) -> int:
    config = _load_config(args)
    out = _out_dir(config)
    runner = {
        "run": bench.run_loo,
        "integration": bench.run_integration_study,
        "ratio-sweep": bench.run_ratio_sweep,
    }[args.command]
    try:
        collection = bench.load_dataset(config)
    except (OSError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise DataError(str(exc)) from exc
    result = runner(config, collection)
    files = bench.report(result, out)
    for name, path in files.items():
        print(path)
    return EXIT_OK


def cmd_gen(args) -> int:
    spec = {}
    if args.config:
        raw = read_companion_config(args.config)
        spec = raw.get("generator", raw) if isinstance(raw.get("generator"), dict) else raw
    if args.seed is not None:
        spec = {**spec, "seed": args.seed}
    if not args.out:
        raise ConfigError("gen needs --out <file.csv>")
    collection = generate_synthetic_collection(GeneratorSpec.from_mapping(spec))
    print(write_collection(collection, args.out))
    return EXIT_OK


def cmd_resample(args) -> int:
    config = _load_config(args)
    if not args.out:
        raise ConfigError("resample needs --out <file.csv>")
    prep = bench.prepare(config)
    target = args.target or prep.normalized.ids[0]
    if target not in prep.normalized:
        raise ConfigError(f"unknown target series {target!r}")
    method = (args.method or config.resampler).upper()
    plan = rs.ResamplePlan(method, config.k, config.ratio, config.seed, target)
    data = rs.label(prep.train, target)
    rows = rs.synthesize(data, plan)
    print(rs.dump_resampled(rows, target, args.out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tser", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, jobs=True):
        p.add_argument("--config", help="YAML experiment config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        if jobs:
            p.add_argument("--max-series", type=int, dest="max_series")
            p.add_argument("--jobs", type=int)

    for name, help_ in (
        ("run", "leave-one-series-out benchmark"),
        ("integration", "compare ways of integrating synthetic rows"),
        ("ratio-sweep", "TSER across sampling ratios"),
    ):
        common(sub.add_parser(name, help=help_))
    common(sub.add_parser("gen", help="write a synthetic collection"), jobs=False)
    p = sub.add_parser("resample", help="dump resampled rows for one target series")
    common(p, jobs=False)
    p.add_argument("--target")
    p.add_argument("--method", help="SMOTE, ADASYN, BSMOTE or NEARMISS (default: config resampler)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {"gen": cmd_gen, "resample": cmd_resample}
    try:
        return handlers.get(args.command, cmd_experiment)(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RunError as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (TSERError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
