"""``energy-fs`` command line: one subcommand per pipeline stage.

Shared settings may come from ``--config FILE`` (``key=value`` lines, ``#``
comments); explicit flags override the file. Exit codes: 0 success, 2
usage error, 1 runtime error with a stable error-code prefix on stderr.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from ._io import atomic_write_csv, provenance
from .errors import FeatureStoreError

log = logging.getLogger("energy_fs")

SUBCOMMANDS = ("synth", "ingest", "register", "get", "bench", "train", "predict", "ablate",
               "importance")
# settings recorded in provenance; paths and output names are left out
_CONFIG_KEYS = ("seed", "threads", "region", "tz", "households", "days", "start", "end",
                "entities", "features", "rounds", "depth", "lr", "min_leaf", "subsample", "k",
                "repeats", "kind", "repetitions", "horizon")


def read_config(path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _time_arg(text):
    """Epoch seconds or an ISO timestamp (naive means UTC)."""
    if text is None:
        return None
    s = str(text).strip()
    if s.lstrip("-").isdigit():
        return int(s)
    ts = pd.Timestamp(s)
    if ts.tzinfo is None:
        ts = ts.tz_localize("UTC")
    return int(ts.timestamp())


def _list_arg(text):
    if text is None or text == "":
        return None
    if isinstance(text, (list, tuple)):
        return list(text)
    return [t for t in str(text).replace(" ", ",").split(",") if t]


def _common(p: argparse.ArgumentParser, store=True, registry=True):
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")
    if store:
        p.add_argument("--store", help="offline store directory")
    if registry:
        p.add_argument("--registry", help="registry file (default <store>/registry.txt)")


def _gbrt_args(p):
    p.add_argument("--rounds", type=int, default=200)
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--min-leaf", type=int, default=20)
    p.add_argument("--subsample", type=float, default=1.0)


def _rows_args(p):
    p.add_argument("--entities", help="comma-separated ids (default: all households)")
    p.add_argument("--start", "--from", dest="start", help="first timestamp, epoch seconds or ISO")
    p.add_argument("--end", "--to", dest="end", help="last timestamp, epoch seconds or ISO")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="energy-fs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"energy-fs {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    sub.required = True

    p = sub.add_parser("synth", help="write a synthetic raw corpus")
    _common(p, store=False, registry=False)
    p.add_argument("--households", type=int, default=28)
    p.add_argument("--days", type=int, default=365)
    p.add_argument("--start", default="2018-01-01")
    p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("ingest", help="clean raw CSVs into the offline store")
    p.add_argument("--store", "--out", dest="store", help="offline store directory to write")
    _common(p, store=False, registry=False)
    p.add_argument("--raw", help="directory holding consumption*.csv, weather.csv, metadata.csv")
    p.add_argument("--consumption", nargs="+")
    p.add_argument("--weather")
    p.add_argument("--metadata")
    p.add_argument("--tz", default="America/Vancouver")
    p.add_argument("--region", default="bc", help="holiday calendar name or file")

    p = sub.add_parser("register", help="validate a registry and save it into the store")
    _common(p)
    p.add_argument("--out", help="where to write the registry (default <store>/registry.txt)")

    p = sub.add_parser("get", help="serve a training matrix slice as CSV")
    _common(p)
    _rows_args(p)
    p.add_argument("--features", help="comma-separated feature names (default: all)")
    p.add_argument("--out", required=False)

    p = sub.add_parser("bench", help="time eager, partitioned and lazy strategies")
    _common(p)
    _rows_args(p)
    p.add_argument("--threads", type=int, default=4)
    p.add_argument("--repetitions", "--reps", dest="repetitions", type=int, default=3)
    p.add_argument("--out", default="bench.csv")

    p = sub.add_parser("train", help="fit a boosted model on the 1-hour-ahead target")
    _common(p)
    _rows_args(p)
    _gbrt_args(p)
    p.add_argument("--features", help="comma-separated feature names (default: all)")
    p.add_argument("--out", default="model.txt")

    p = sub.add_parser("predict", help="predict next-hour energy with a saved model")
    _common(p)
    _rows_args(p)
    p.add_argument("--model", required=False)
    p.add_argument("--out", default="predictions.csv")

    p = sub.add_parser("ablate", help="cumulative feature-set ablation with repeated k-fold CV")
    _common(p)
    _gbrt_args(p)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--out", default="ablation.csv")

    p = sub.add_parser("importance", help="feature importance of a model fit on every feature")
    _common(p)
    _gbrt_args(p)
    p.add_argument("--kind", choices=("split_count", "total_gain"), default="split_count")
    p.add_argument("--out", default="importance.csv")
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            conf = read_config(args.config)
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config: {exc}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        unknown = [k for k in conf if k not in known]
        if unknown:
            log.warning("config keys ignored by %s: %s", args.command, ", ".join(unknown))
        sub.set_defaults(**{k: _coerce(known[k], v) for k, v in conf.items() if k in known})
        args = parser.parse_args(argv)  # flags win over the file
    return args


def _coerce(action, value):
    if action.nargs in ("+", "*"):
        return value.split()
    if action.type is not None:
        return action.type(value)
    return value


def _provenance(args):
    conf = {k: getattr(args, k) for k in _CONFIG_KEYS if getattr(args, k, None) is not None}
    conf["command"] = args.command
    return provenance(args.seed, conf)


def _require(args, *names):
    for n in names:
        if getattr(args, n, None) in (None, ""):
            raise UsageError(f"--{n.replace('_', '-')} is required for {args.command}")


class UsageError(Exception):
    pass


def _registry(args):
    from .registry import REGISTRY_FILE, Registry, default_registry_text
    from .store import OfflineStore
    _require(args, "store")
    store = OfflineStore(args.store)
    store.check()
    path = Path(args.registry) if args.registry else store.root / REGISTRY_FILE
    if path.exists():
        return Registry.load(path, store)
    if args.registry:
        raise FileNotFoundError(f"registry file {path} does not exist")
    return Registry.from_text(default_registry_text(), store)


def _gbrt_params(args):
    from .gbrt import GbrtParams
    return GbrtParams(n_rounds=args.rounds, max_depth=args.depth, learning_rate=args.lr,
                      min_samples_leaf=args.min_leaf, seed=args.seed, subsample=args.subsample)


def _matrix(args, registry, features=None):
    from .evaluation import load_matrix
    from .pipelines import ALL_FEATURES
    from .registry import get_subset
    features = _list_arg(features) or list(ALL_FEATURES)
    entities = _list_arg(args.entities)
    start, end = _time_arg(args.start), _time_arg(args.end)
    if entities is None and start is None and end is None:
        return load_matrix(registry, features)
    if entities is None:
        meta = registry.store.read("metadata", columns=["residential_id"])
        entities = meta["residential_id"].astype(str).tolist()
    lo, hi = registry.store.time_bounds()
    return get_subset(registry, entities, lo if start is None else start,
                      hi if end is None else end, features)


def cmd_synth(args):
    from .synth import generate_synthetic
    out = Path(args.out)
    generate_synthetic(args.households, args.days, args.seed, out, start=args.start)
    print(f"wrote synthetic corpus to {out}")


def cmd_ingest(args):
    from .ingest import ingest_all
    from .registry import REGISTRY_FILE, default_registry_text
    from ._io import atomic_write_text
    _require(args, "store")
    raw = Path(args.raw) if args.raw else None
    consumption = args.consumption or (sorted(raw.glob("consumption*.csv")) if raw else None)
    weather = args.weather or (raw / "weather.csv" if raw else None)
    metadata = args.metadata or (raw / "metadata.csv" if raw else None)
    if not consumption or weather is None or metadata is None:
        raise UsageError("ingest needs --raw or all of --consumption/--weather/--metadata")
    stats = ingest_all(consumption, weather, metadata, args.store, args.tz, args.region,
                       prov=_provenance(args))
    reg = Path(args.store) / REGISTRY_FILE
    if not reg.exists():
        atomic_write_text(reg, default_registry_text())
    for name, s in stats.items():
        print(f"{name}: {s.rows_in} in, {s.rows_out} out, {s.rows_dropped_duplicate} duplicate, "
              f"{s.rows_dropped_invalid} invalid")


def cmd_register(args):
    from .registry import REGISTRY_FILE
    registry = _registry(args)
    out = registry.save(args.out or registry.store.root / REGISTRY_FILE)
    print(f"registered {len(registry.views)} views -> {out}")


def cmd_get(args):
    registry = _registry(args)
    matrix = _matrix(args, registry, args.features)
    frame = matrix.to_frame(missing_columns=True)
    if matrix.entity_name not in frame.columns:
        frame = frame.rename(columns={"entity": matrix.entity_name})
    if args.out:
        atomic_write_csv(args.out, frame, _provenance(args), float_format="%.10g")
        print(f"{len(frame)} rows -> {args.out}")
    else:
        frame.to_csv(sys.stdout, index=False, float_format="%.10g")


def cmd_bench(args):
    from .pipelines import ALL_FEATURES, BenchConfig, SubsetQuery, run_benchmark, write_report
    from .registry import REGISTRY_FILE
    registry = _registry(args)
    store = registry.store
    entities = _list_arg(args.entities)
    if entities is None:
        meta = store.read("metadata", columns=["residential_id"])
        entities = meta["residential_id"].astype(str).tolist()[:3]
    lo, hi = store.time_bounds()
    start = _time_arg(args.start) if args.start else lo
    end = _time_arg(args.end) if args.end else min(hi, start + 30 * 86400)
    query = SubsetQuery(tuple(entities), start, end, ALL_FEATURES)
    reg_path = Path(args.registry) if args.registry else store.root / REGISTRY_FILE
    if not reg_path.exists():
        registry.save(reg_path)
    report = run_benchmark(BenchConfig(store.root, reg_path, query, args.repetitions, args.threads))
    write_report(report, args.out, _provenance(args))
    print(report.render(), end="")


def cmd_train(args):
    from .evaluation import build_supervised
    from .gbrt import fit
    registry = _registry(args)
    X, y = build_supervised(_matrix(args, registry, args.features))
    model = fit(X.data, y, _gbrt_params(args), X.columns)
    model.save(args.out, _provenance(args))
    print(f"trained {len(model.trees)} trees on {len(y)} rows -> {args.out}")


def cmd_predict(args):
    from .evaluation import build_supervised
    from .gbrt import GbrtModel
    _require(args, "model")
    model = GbrtModel.load(args.model)
    registry = _registry(args)
    X, y = build_supervised(_matrix(args, registry, model.feature_names))
    pred = model.predict(X.select(list(model.feature_names)).data)
    frame = pd.DataFrame({"residential_id": X.entities.astype(str), "timestamp": X.timestamps,
                          "target_time": X.timestamps + 3600, "energy_next": y,
                          "prediction": pred})
    atomic_write_csv(args.out, frame, _provenance(args), float_format="%.10g")
    mae = float(np.mean(np.abs(pred - y)))
    print(f"{len(frame)} predictions (MAE {mae:.4f} kWh) -> {args.out}")


def cmd_ablate(args):
    from .evaluation import CvPlan, ablation, ablation_frame, render_ablation, write_table
    registry = _registry(args)
    rows = ablation(registry, _gbrt_params(args), CvPlan(args.k, args.repeats, args.seed))
    text = render_ablation(rows)
    write_table(ablation_frame(rows), text, args.out, _provenance(args))
    print(text, end="")


def cmd_importance(args):
    from .evaluation import importance_frame, importance_report, render_importance, write_table
    registry = _registry(args)
    scores = importance_report(registry, _gbrt_params(args), args.kind)
    text = render_importance(scores)
    write_table(importance_frame(scores), text, args.out, _provenance(args))
    print(text, end="")


COMMANDS = {name: globals()[f"cmd_{name}"] for name in SUBCOMMANDS}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"energy-fs {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except FeatureStoreError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"E-RUNTIME: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
