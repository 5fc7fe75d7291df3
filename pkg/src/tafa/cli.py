"""Command-line entry point.

One binary with subcommands covering the whole pipeline: dataset
generation/ingestion, template search, rollouts, distillation, theory
certification, benchmark sweeps, and the acquisition service. Every run
writes a manifest next to its artifacts recording the resolved
configuration and seeds; artifact files themselves carry no timestamps so
identical runs produce identical bytes.

Exit codes: 0 ok, 1 certification violations, 2 usage error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

import tafa
from tafa import dataset as ds_mod
from tafa import evalharness
from tafa.dataset import CostModel, DataFormatError
from tafa.distill import (
    PER_CARDINALITY,
    VARIANTS,
    dagger_train,
    export_tree_dot,
    feature_action_labels,
    template_action_labels,
)
from tafa.oracle import certify_submodularity, random_toy_distribution, value_functions, aco_value, _key
from tafa.policy import build_policy, rollout, tafa_criterion
from tafa.predictor import fit_gaussian_nb
from tafa.search import SearchConfig, SubsetLossEvaluator, TemplateLibrary, build_library

MANIFEST_SCHEMA = "tafa.manifest/1"

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
EXIT_DATA = 3


def _add_data_args(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--cube", type=int, metavar="N", help="generate a cube dataset with N rows")
    src.add_argument("--csv", type=Path, help="load a CSV dataset")
    p.add_argument("--label", default="label", help="label column for --csv")
    p.add_argument("--costs", type=Path, default=None, help="feature,cost file")
    p.add_argument("--sigma", type=float, default=0.1, help="cube noise std")
    p.add_argument("--data-seed", type=int, default=0, help="cube generator seed")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--split-seed", type=int, default=0)


def _load_data(args):
    if args.cube is not None:
        dataset = ds_mod.generate_cube(args.cube, args.sigma, args.data_seed)
        costs = (
            ds_mod.load_costs(args.costs, dataset.feature_names)
            if args.costs
            else CostModel.uniform(dataset.n_features)
        )
        name = f"cube-{args.cube}"
    else:
        dataset, costs = ds_mod.load_csv(args.csv, args.label, args.costs)
        name = args.csv.name
    split = ds_mod.split(dataset, args.test_fraction, args.split_seed)
    return dataset, costs, split, name


def _data_provenance(args) -> dict:
    if args.cube is not None:
        source = {"kind": "cube", "n": args.cube, "sigma": args.sigma, "seed": args.data_seed}
    else:
        source = {"kind": "csv", "path": str(args.csv), "label": args.label}
    return {
        "source": source,
        "costs": str(args.costs) if args.costs else None,
        "test_fraction": args.test_fraction,
        "split_seed": args.split_seed,
    }


def _write_manifest(out_path: Path, command: str, config: dict, seeds: dict, artifacts, started: float):
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "command": command,
        "argv": sys.argv[1:],
        "config": config,
        "seeds": seeds,
        "artifacts": [str(a) for a in artifacts],
        "version": tafa.__version__,
        "started_at": started,
        "finished_at": time.time(),
    }
    path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2))
    return path


def _emit(args, human: str, payload: dict):
    if getattr(args, "json", False):
        print(json.dumps(payload))
    else:
        print(human)


def cmd_generate(args) -> int:
    started = time.time()
    dataset = ds_mod.generate_cube(args.cube, args.sigma, args.data_seed)
    ds_mod.to_csv(dataset, args.out)
    _write_manifest(
        args.out, "generate",
        {"n": args.cube, "sigma": args.sigma},
        {"data_seed": args.data_seed},
        [args.out], started,
    )
    _emit(args, f"wrote {dataset.n_rows} rows to {args.out}",
          {"out": str(args.out), "rows": dataset.n_rows})
    return EXIT_OK


def cmd_search(args) -> int:
    started = time.time()
    dataset, costs, split, name = _load_data(args)
    model = fit_gaussian_nb(dataset, split.train_indices, args.variance_floor)
    evaluator = SubsetLossEvaluator(
        model, dataset.features[split.train_indices], dataset.labels[split.train_indices]
    )
    o_init = (
        evalharness.pick_o_init(evaluator, costs)
        if args.o_init is None
        else args.o_init
    )
    config = SearchConfig(
        n_templates=args.T,
        n_candidates=args.S,
        n_rounds=args.R,
        lam=args.lam,
        o_init=o_init,
        seed=args.seed,
    )
    library = build_library(
        evaluator, config, costs,
        extra_meta={"dataset": name, "data": _data_provenance(args),
                    "variance_floor": args.variance_floor},
    )
    library.save(args.out)
    _write_manifest(
        args.out, "search",
        {"T": args.T, "S": args.S, "R": args.R, "lambda": args.lam,
         "o_init": o_init, "data": _data_provenance(args)},
        {"seed": args.seed}, [args.out], started,
    )
    trace = library.search_meta["objective_trace"]
    _emit(
        args,
        "per-round objective: " + ", ".join(f"{v:.6f}" for v in trace)
        + f"\nwrote {len(library.templates)} templates to {args.out}",
        {"out": str(args.out), "objective_trace": trace,
         "n_templates": len(library.templates), "o_init": o_init},
    )
    return EXIT_OK


def cmd_rollout(args) -> int:
    started = time.time()
    dataset, costs, split, _ = _load_data(args)
    library = TemplateLibrary.load(args.library)
    if any(t[-1] >= dataset.n_features for t in library.templates):
        raise DataFormatError("library/dataset dimension mismatch")
    policy = build_policy(dataset, split, library, costs, k=args.k)
    if args.row is not None:
        if not 0 <= args.row < dataset.n_rows:
            raise DataFormatError(f"row {args.row} out of range")
        instance = dataset.features[args.row]
    else:
        values = [float(v) for v in args.values.split(",")]
        if len(values) != dataset.n_features:
            raise DataFormatError(
                f"expected {dataset.n_features} values, got {len(values)}"
            )
        raw = np.asarray(values)
        instance = dataset.scaler.transform(raw[None, :])[0] if dataset.scaler else raw
    trace = rollout(policy, instance)
    args.out.write_text(json.dumps(trace.to_dict(), indent=2))
    _write_manifest(
        args.out, "rollout",
        {"library": str(args.library), "k": args.k, "row": args.row,
         "data": _data_provenance(args)},
        {"split_seed": args.split_seed}, [args.out], started,
    )
    names = [dataset.feature_names[f] for f in trace.acquired]
    _emit(
        args,
        f"acquired {', '.join(names)} (cost {trace.total_cost:g})\n"
        f"prediction: {np.array2string(trace.final_prediction, precision=4)}",
        trace.to_dict(),
    )
    return EXIT_OK


def cmd_distill(args) -> int:
    started = time.time()
    dataset, costs, split, _ = _load_data(args)
    library = TemplateLibrary.load(args.library)
    policy = build_policy(dataset, split, library, costs, k=args.k)
    ensemble = dagger_train(
        policy,
        dataset.features[split.train_indices],
        variant=args.variant,
        leaf_limit=args.leaf_limit,
        iterations=args.iterations,
        seed=args.seed,
        sample_limit=args.sample_limit,
    )
    args.out.write_text(json.dumps(ensemble.to_dict(), indent=2))
    artifacts = [args.out]
    if args.dot_dir is not None:
        args.dot_dir.mkdir(parents=True, exist_ok=True)
        if args.variant == "feature-act":
            labels = feature_action_labels(dataset.feature_names)
        else:
            labels = template_action_labels(library, dataset.feature_names)
        for m, tree in sorted(ensemble.trees.items()):
            path = args.dot_dir / f"tree_{m:02d}.dot"
            path.write_text(export_tree_dot(tree, dataset.feature_names, labels))
            artifacts.append(path)
    _write_manifest(
        args.out, "distill",
        {"library": str(args.library), "variant": args.variant,
         "leaf_limit": args.leaf_limit, "iterations": args.iterations,
         "k": args.k, "data": _data_provenance(args)},
        {"seed": args.seed}, artifacts, started,
    )
    _emit(
        args,
        f"distilled {args.variant} ensemble: {len(ensemble.trees)} trees, "
        f"{ensemble.total_leaves} leaves -> {args.out}",
        {"out": str(args.out), "trees": len(ensemble.trees),
         "total_leaves": ensemble.total_leaves},
    )
    return EXIT_OK


def cmd_certify(args) -> int:
    started = time.time()
    rng = np.random.default_rng(args.seed)
    checks = {}

    matrix = rng.normal(size=(60, 25))
    checks["diminishing_returns_random"] = certify_submodularity(
        matrix, trials=args.trials, seed=args.seed
    )

    cube = ds_mod.generate_cube(400, 0.1, seed=args.seed)
    sp = ds_mod.split(cube, 0.2, seed=args.seed)
    model = fit_gaussian_nb(cube, sp.train_indices)
    ev = SubsetLossEvaluator(
        model, cube.features[sp.train_indices][:100], cube.labels[sp.train_indices][:100]
    )
    from tafa.search import sample_candidates

    cands = sample_candidates(20, 7, 40, seed=args.seed)
    e = ev.e_matrix(cands, CostModel.uniform(20), 0.1)
    checks["diminishing_returns_cube"] = certify_submodularity(
        e, trials=args.trials, seed=args.seed + 1
    )

    violations = []
    costs3 = CostModel.uniform(3)
    for seed in range(3):
        dist = random_toy_distribution(3, 2, seed=seed)
        lam = 0.1
        table = value_functions(dist, costs3, lam, t_max=2)
        for st in dist.states():
            for t in range(3):
                v = table[(_key(st), t)]
                aco = aco_value(dist, st, costs3, lam, t_max=t)
                if v < aco - 1e-9:
                    violations.append({"check": "value_vs_aco", "state": str(st), "t": t})
                if t >= 1:
                    for u in (d for d in range(3) if d not in st):
                        crit = tafa_criterion(dist, st, [(u,)], lam, costs3)
                        if aco < crit - 1e-9:
                            violations.append(
                                {"check": "aco_vs_criterion", "state": str(st), "t": t}
                            )
    checks["value_bound_chain"] = {
        "violations": len(violations),
        "passed": not violations,
        "detail": violations[:10],
    }

    passed = all(c["passed"] for c in checks.values())
    report = {
        "schema": "tafa.certification/1",
        "passed": passed,
        "trials": args.trials,
        "checks": checks,
    }
    args.out.write_text(json.dumps(report, indent=2))
    _write_manifest(
        args.out, "certify", {"trials": args.trials}, {"seed": args.seed},
        [args.out], started,
    )
    _emit(
        args,
        "\n".join(
            f"{name}: {'ok' if c['passed'] else 'VIOLATIONS'}" for name, c in checks.items()
        ),
        report,
    )
    return EXIT_OK if passed else EXIT_VIOLATION


def cmd_sweep(args) -> int:
    started = time.time()
    dataset, costs, split, _ = _load_data(args)
    low, high, step = (float(x) for x in args.lambda_grid.split(","))
    config = evalharness.SweepConfig(
        lambda_low=low,
        lambda_high=high,
        lambda_step=step,
        k=args.k,
        seeds=tuple(int(s) for s in args.seeds.split(",")),
        methods=tuple(args.methods.split(",")),
        n_templates=args.T,
        n_candidates=args.S,
        n_rounds=args.R,
    )
    records = evalharness.run_sweep(dataset, split, config, costs, jobs=args.jobs)
    paths = evalharness.emit_curves(records, args.out)
    _write_manifest(
        paths[0], "sweep",
        {"lambda_grid": [low, high, step], "k": args.k,
         "methods": list(config.methods), "T": args.T, "S": args.S, "R": args.R,
         "data": _data_provenance(args)},
        {"seeds": list(config.seeds)}, paths, started,
    )
    _emit(
        args,
        f"{len(records)} records -> {paths[0]}",
        {"records": len(records), "out": [str(p) for p in paths]},
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from tafa.service import build_deployment, create_app

    dataset, costs, split, name = _load_data(args)
    deployments = {}
    for lib_path in args.library:
        library = TemplateLibrary.load(lib_path)
        lib_id = Path(lib_path).stem
        deployments[lib_id] = build_deployment(
            lib_id, name, dataset, split, library, costs, k=args.k
        )
    app = create_app(
        deployments,
        snapshot_dir=str(args.snapshot_dir) if args.snapshot_dir else None,
    )
    print(f"serving {len(deployments)} libraries on {args.bind}:{args.port}")
    uvicorn.run(app, host=args.bind, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tafa",
        description="Template-guided active feature acquisition toolkit",
    )
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON file of default values (flags still win)")
    sub = parser.add_subparsers(dest="command", required=True)
    subcommands: dict[str, argparse.ArgumentParser] = {}
    parser.subcommands = subcommands  # type: ignore[attr-defined]

    _orig_add_parser = sub.add_parser

    def add_parser(name, **kwargs):
        p = _orig_add_parser(name, **kwargs)
        subcommands[name] = p
        return p

    sub.add_parser = add_parser  # type: ignore[method-assign]

    p = sub.add_parser("generate", help="write a synthetic cube dataset as CSV")
    p.add_argument("--cube", type=int, required=True, metavar="N")
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("search", help="search a template library")
    _add_data_args(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--T", type=int, default=16, help="library size")
    p.add_argument("--S", type=int, default=2500, help="candidates per round")
    p.add_argument("--R", type=int, default=3, help="mutation rounds")
    p.add_argument("--seed", type=int, default=0)
    init = p.add_mutually_exclusive_group(required=True)
    init.add_argument("--o-init", type=int, default=None)
    init.add_argument("--auto-init", action="store_true")
    p.add_argument("--variance-floor", type=float, default=1e-6)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("rollout", help="run the policy on one instance")
    _add_data_args(p)
    p.add_argument("--library", type=Path, required=True)
    p.add_argument("--k", type=int, default=10)
    sel = p.add_mutually_exclusive_group(required=True)
    sel.add_argument("--row", type=int, default=None, help="dataset row index")
    sel.add_argument("--values", type=str, default=None, help="comma-separated raw values")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=cmd_rollout)

    p = sub.add_parser("distill", help="clone the policy into decision trees")
    _add_data_args(p)
    p.add_argument("--library", type=Path, required=True)
    p.add_argument("--variant", choices=VARIANTS, default=PER_CARDINALITY)
    p.add_argument("--leaf-limit", type=int, default=4)
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-limit", type=int, default=None)
    p.add_argument("--dot-dir", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=cmd_distill)

    p = sub.add_parser("certify", help="run the theory certification suite")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=cmd_certify)

    p = sub.add_parser("sweep", help="run the benchmark sweep")
    _add_data_args(p)
    p.add_argument("--lambda-grid", required=True, metavar="LOW,HIGH,STEP")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--methods", default="tafa-mutate,static")
    p.add_argument("--seeds", default="0")
    p.add_argument("--T", type=int, default=16)
    p.add_argument("--S", type=int, default=2500)
    p.add_argument("--R", type=int, default=3)
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes; keep 1 for timing comparisons")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("serve", help="serve the acquisition HTTP API")
    _add_data_args(p)
    p.add_argument("--library", type=Path, action="append", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--bind", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--snapshot-dir", type=Path, default=None,
                   help="dump session trace JSON here on shutdown")
    p.set_defaults(fn=cmd_serve)

    return parser


def _apply_config(parser: argparse.ArgumentParser, overrides: dict) -> None:
    dests = {a.dest for a in parser._actions}
    usable = {k: v for k, v in overrides.items() if k in dests}
    if usable:
        parser.set_defaults(**usable)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    # config file values sit between flags and built-in defaults
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path, default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config is not None:
        try:
            overrides = {
                k.replace("-", "_"): v
                for k, v in json.loads(known.config.read_text()).items()
            }
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config {known.config}: {exc}", file=sys.stderr)
            return EXIT_DATA
        _apply_config(parser, overrides)
        for sub in parser.subcommands.values():  # type: ignore[attr-defined]
            _apply_config(sub, overrides)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
