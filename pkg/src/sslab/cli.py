"""Command-line entry point: ``sslab <command> [flags]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .checks import run_all
from .core import InputError, LinearModel
from .data import NAIVE_DEMO_BASE_RATES, PRESETS, split, write_dataset_csv
from .experiments import (
    AGGREGATE_COLUMNS,
    ORDERING_DEMO_CONFIG,
    RESULT_COLUMNS,
    SweepConfig,
    config_hash,
    evaluate,
    fit,
    manifest,
    method_config,
    naive_demo,
    ordering_demo,
    precision_curves,
    resolve_dataset,
    sweep,
    write_csv,
)
from .learning import VARIANTS, TrainConfig

log = logging.getLogger("sslab")

COMMANDS = ("gen", "train", "eval", "sweep", "curves", "demo-naive", "demo-ordering", "check")


class UsageError(Exception):
    pass


def parse_dataset(arg: str) -> dict:
    """Dataset spec from a flag value.

    Accepted forms: ``gaussian``, ``ordering``, ``naive-<condition>``,
    ``<preset>:<path>`` for a raw tabular file, a path to an exported
    ``.csv`` dataset, or a path to a ``.json`` dataset spec.
    """
    if arg == "gaussian":
        return {"kind": "gaussian"}
    if arg == "ordering":
        return {"kind": "ordering_demo"}
    if arg.startswith("naive-"):
        cond = arg[len("naive-"):]
        if cond not in NAIVE_DEMO_BASE_RATES:
            raise UsageError(f"unknown naive condition {cond!r}")
        return {"kind": "naive_demo", "condition": cond}
    head, sep, tail = arg.partition(":")
    if sep and head in PRESETS:
        return {"kind": "tabular", "schema": head, "path": tail}
    path = Path(arg)
    if not path.exists():
        raise UsageError(f"dataset {arg!r} is not a known generator and no such file exists")
    if path.suffix == ".json":
        return json.loads(path.read_text())
    return {"kind": "csv", "path": str(path)}


def _read_json(path: Optional[str]) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"no such config file: {path}")
    return json.loads(p.read_text())


def _out_dir(path: Optional[str]) -> Path:
    out = Path(path or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def _seeds(arg: Optional[str], default: Sequence[int]) -> tuple[int, ...]:
    """``N`` means seeds 0..N-1; ``a,b,c`` lists them."""
    if arg is None:
        return tuple(default)
    try:
        if "," in arg:
            return tuple(int(s) for s in arg.split(","))
        return tuple(range(int(arg)))
    except ValueError as e:
        raise UsageError(f"bad --seeds value {arg!r}") from e


def _train_config(args, config: dict) -> TrainConfig:
    try:
        return TrainConfig(**config.get("train", {}))
    except TypeError as e:
        raise UsageError(f"bad 'train' section: {e}") from e


def cmd_gen(args) -> int:
    if not args.dataset:
        raise UsageError("gen needs --dataset")
    spec = parse_dataset(args.dataset)
    seeds = _seeds(args.seeds, [args.seed])
    out = _out_dir(args.out)
    for seed in seeds:
        ds = resolve_dataset(spec, seed)
        target = out / f"dataset_seed{seed}.csv"
        digest = config_hash({"dataset": spec, "seed": seed})
        write_dataset_csv(ds, target, comment=f"config_hash={digest}")
        print(f"wrote {target} (m={ds.m}, d={ds.d}, K={ds.group_count})")
    _write_json(out / "manifest.json", manifest({"dataset": spec}, list(seeds)))
    return 0


def _dataset_and_method(args, config: dict) -> tuple[dict, str]:
    spec = parse_dataset(args.dataset) if args.dataset else config.get("dataset")
    if spec is None:
        raise UsageError("need --dataset or a config with a 'dataset' entry")
    method = args.method or config.get("method", "strat_x")
    if method not in VARIANTS:
        raise UsageError(f"unknown method {method!r}; expected one of {VARIANTS}")
    return spec, method


def cmd_train(args) -> int:
    config = _read_json(args.config)
    spec, method = _dataset_and_method(args, config)
    seed = args.seed
    cost = args.cost if args.cost is not None else config.get("cost", 0.7)
    data = resolve_dataset(spec, seed)
    train, test = split(data, config.get("train_frac", 0.7), seed)
    tc = method_config(_train_config(args, config).updated(seed=seed), method, cost, config.get("preset"), config.get("overrides"))
    model, train_log = fit(train, method, tc)
    row = evaluate(test, model, cost, name=config.get("name", ""), method=method, seed=seed)
    out = _out_dir(args.out)
    _write_json(out / "model.json", model.to_dict())
    _write_json(out / "result.json", asdict(row))
    if train_log is not None:
        _write_json(out / "train_log.json", train_log.to_dict())
    _write_json(out / "manifest.json", manifest({"dataset": spec, "method": method, "cost": cost, "train": tc.to_dict()}, [seed]))
    print(f"{method} c={cost}: induced test accuracy {row.induced_test_accuracy}, applying {row.applying_group_count}/{row.group_count}")
    return 0


def _trained_cost(model_path: Path, default: float = 0.7) -> float:
    """Cost recorded by ``train`` in the manifest beside the model, if any."""
    m = model_path.parent / "manifest.json"
    if m.exists():
        try:
            return float(json.loads(m.read_text())["config"]["cost"])
        except (KeyError, TypeError, ValueError):
            pass
    return default


def cmd_eval(args) -> int:
    if not args.model:
        raise UsageError("eval needs --model")
    config = _read_json(args.config)
    spec, _ = _dataset_and_method(args, config)
    p = Path(args.model)
    if not p.exists():
        raise UsageError(f"no such model file: {args.model}")
    model = LinearModel.from_dict(json.loads(p.read_text()))
    cost = args.cost if args.cost is not None else config.get("cost", _trained_cost(p))
    data = resolve_dataset(spec, args.seed)
    if args.split:
        _, data = split(data, config.get("train_frac", 0.7), args.seed)
    row = evaluate(data, model, cost, method="eval", seed=args.seed)
    out = _out_dir(args.out)
    _write_json(out / "eval.json", asdict(row))
    print(f"c={cost}: induced accuracy {row.induced_test_accuracy}, applying {row.applying_group_count}/{row.group_count}")
    return 0


def cmd_sweep(args) -> int:
    config = _read_json(args.config)
    if args.dataset:
        config["dataset"] = parse_dataset(args.dataset)
    if "dataset" not in config:
        raise UsageError("sweep needs --config with a 'dataset' entry or --dataset")
    config.setdefault("name", config["dataset"].get("schema", config["dataset"].get("kind", "dataset")))
    if args.method:
        config["methods"] = args.method.split(",")
    if args.cost is not None:
        config["costs"] = [args.cost]
    if args.seeds is not None:
        config["seeds"] = list(_seeds(args.seeds, ()))
    cfg = SweepConfig.from_dict(config)
    rows, aggs = sweep(cfg)
    out = _out_dir(args.out)
    digest = cfg.digest()
    write_csv(out / "results.csv", [r.to_record() for r in rows], RESULT_COLUMNS, digest)
    write_csv(out / "aggregates.csv", [asdict(a) for a in aggs], AGGREGATE_COLUMNS, digest)
    _write_json(out / "manifest.json", manifest(cfg.to_dict(), cfg.seeds))
    for a in aggs:
        m = "-" if a.induced_accuracy_mean is None else f"{100 * a.induced_accuracy_mean:.1f}"
        se = "" if a.induced_accuracy_stderr is None else f" ± {100 * a.induced_accuracy_stderr:.1f}"
        print(f"{a.method:>12} c={a.cost:.3f}: {m}{se}  apply {a.applying_group_count_mean:.1f}/{a.group_count}  empty {a.empty_splits}/{a.splits}")
    return 0


def cmd_curves(args) -> int:
    config = _read_json(args.config)
    spec, method = _dataset_and_method(args, config)
    if args.method is None and "method" not in config:
        method = "naive"
    cost = args.cost if args.cost is not None else config.get("cost", 0.8)
    data = resolve_dataset(spec, args.seed)
    if args.model:
        if not Path(args.model).exists():
            raise UsageError(f"no such model file: {args.model}")
        model = LinearModel.from_dict(json.loads(Path(args.model).read_text()))
    else:
        tc = method_config(_train_config(args, config).updated(seed=args.seed), method, cost, config.get("preset"), config.get("overrides"))
        model, _ = fit(data, method, tc)
    bundle = precision_curves(model, data, cost, points=args.grid_points)
    bundle["config_hash"] = config_hash({"dataset": spec, "method": method, "cost": cost, "seed": args.seed})
    out = _out_dir(args.out)
    _write_json(out / "curves.json", bundle)
    _write_json(out / "manifest.json", manifest({"dataset": spec, "method": method, "cost": cost}, [args.seed]))
    print(f"wrote {out / 'curves.json'} ({len(bundle['grid'])} thresholds, {len(bundle['groups'])} groups)")
    return 0


def cmd_demo_naive(args) -> int:
    seeds = _seeds(args.seeds, range(5)) if args.seeds else (args.seed,)
    results = [naive_demo(cond, s) for cond in NAIVE_DEMO_BASE_RATES for s in seeds]
    out = _out_dir(args.out)
    _write_json(out / "demo_naive.json", {"results": [{**asdict(r), "gap": r.gap} for r in results]})
    _write_json(out / "manifest.json", manifest({"demo": "naive"}, seeds))
    for r in results:
        gap = "-" if r.gap is None else f"{100 * r.gap:+.2f}pp"
        print(f"{r.condition:>6} seed {r.seed}: assumed {r.assumed_accuracy:.4f} induced {r.induced_accuracy} gap {gap} applies {r.applies}")
    return 0


def cmd_demo_ordering(args) -> int:
    seeds = _seeds(args.seeds, ()) if args.seeds else (args.seed,)
    config = _read_json(args.config)
    try:
        cfg = ORDERING_DEMO_CONFIG.updated(**config.get("train", {}))
    except TypeError as e:
        raise UsageError(f"bad 'train' section: {e}") from e
    if args.cost is not None:
        cfg = cfg.updated(cost=args.cost)
    report = []
    for s in seeds:
        rows = ordering_demo(s, cfg)
        report.append({m: asdict(r) for m, r in rows.items()})
        for m, r in rows.items():
            print(f"seed {s} {m:>8}: induced test accuracy {r.induced_test_accuracy}, applies {r.applies}")
    out = _out_dir(args.out)
    _write_json(out / "demo_ordering.json", {"config": cfg.to_dict(), "seeds": list(seeds), "results": report})
    _write_json(out / "manifest.json", manifest({"demo": "ordering", "train": cfg.to_dict()}, seeds))
    return 0


def cmd_check(args) -> int:
    results = run_all(args.seed)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


HANDLERS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "curves": cmd_curves,
    "demo-naive": cmd_demo_naive,
    "demo-ordering": cmd_demo_ordering,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sslab", description="Classification under strategic self-selection.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--dataset", help="generator name, <preset>:<path>, exported .csv or .json spec")
        p.add_argument("--method", help=f"one of {', '.join(VARIANTS)} (comma-separated for sweep)")
        p.add_argument("--cost", type=float, help="application cost c in (0, 1)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--seeds", help="N for seeds 0..N-1, or a comma-separated list")
        p.add_argument("--out", help="output directory")
        p.add_argument("--grid-points", type=int, default=201)
        p.add_argument("--model", help="model JSON written by train")
        p.add_argument("--split", action="store_true", help="eval: evaluate on the test split only")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return HANDLERS[args.command](args)
    except (UsageError, InputError) as e:
        print(f"sslab {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
