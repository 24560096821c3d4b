"""Command-line interface: train / eval / generate / scaling.

Every flag can also come from a JSON config file (--config); explicit flags
win over the file, which wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import sys

from .pipeline import RunConfig, cmd_eval, cmd_generate, cmd_scaling, cmd_train

TRAIN_DEFAULTS = {
    "labels": None,
    "partition": None,
    "pairs": None,
    "dims": "256,128,64",
    "epochs": 300,
    "lr": 0.001,
    "lam": 0.0,
    "alpha": 0.0,
    "aux_mode": "none",
    "label_fraction": 1.0,
    "birch_threshold": 0.5,
    "branching": 50,
    "seeds": ",".join(str(s) for s in range(10)),
    "out": "runs/latest",
    "run_id": "run",
    "f1_sample": 1000,
}


def _parse_int_list(text: str) -> list[int]:
    return [int(p) for p in str(text).split(",") if p != ""]


def _resolve(args: argparse.Namespace, key: str, defaults: dict):
    """Flag value if given, else JSON config value, else the built-in default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if getattr(args, "_config_data", None) and key in args._config_data:
        return args._config_data[key]
    return defaults[key]


def _load_config_file(args: argparse.Namespace) -> None:
    args._config_data = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            args._config_data = json.load(fh)


def _add_train_parser(sub) -> None:
    p = sub.add_parser("train", help="train models and cluster the embeddings")
    p.add_argument("--config", help="JSON file with any of the train options")
    p.add_argument("--edges", help="edge list TSV (required)")
    p.add_argument("--features", help="feature matrix TSV (required)")
    p.add_argument("--labels", help="optional node label TSV (enables NMI/F1)")
    p.add_argument("--partition", help="external partition TSV for aux_mode=external-partition")
    p.add_argument("--pairs", help="same-cluster pair TSV for aux_mode=pairs")
    p.add_argument("--lambda", dest="lam", type=float, help="auxiliary loss weight")
    p.add_argument("--alpha", type=float, help="collapse regularizer weight")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--dims", help="hidden layer sizes after the input dim, e.g. 256,128,64")
    p.add_argument(
        "--aux-mode",
        dest="aux_mode",
        choices=["none", "labels", "pairs", "external-partition"],
    )
    p.add_argument(
        "--label-fraction",
        dest="label_fraction",
        type=float,
        help="fraction of labeled nodes used as the auxiliary subset",
    )
    p.add_argument("--birch-threshold", dest="birch_threshold", type=float)
    p.add_argument("--branching", type=int, help="BIRCH branching factor")
    p.add_argument("--seeds", help="comma-separated run seeds")
    p.add_argument("--out", help="output directory")
    p.add_argument("--run-id", dest="run_id")
    p.add_argument("--f1-sample", dest="f1_sample", type=int, help="F1 node sample size")


def _run_train(args: argparse.Namespace) -> int:
    _load_config_file(args)
    get = lambda key: _resolve(args, key, TRAIN_DEFAULTS)
    edges = _resolve(args, "edges", {"edges": None})
    features = _resolve(args, "features", {"features": None})
    if not edges or not features:
        print("train: --edges and --features are required", file=sys.stderr)
        return 2
    seeds = get("seeds")
    config = RunConfig(
        edges=edges,
        features=features,
        labels=get("labels"),
        partition=get("partition"),
        pairs=get("pairs"),
        hidden_dims=_parse_int_list(get("dims")),
        epochs=int(get("epochs")),
        learning_rate=float(get("lr")),
        lam=float(get("lam")),
        alpha=float(get("alpha")),
        aux_mode=get("aux_mode"),
        label_fraction=float(get("label_fraction")),
        birch_threshold=float(get("birch_threshold")),
        branching_factor=int(get("branching")),
        seeds=seeds if isinstance(seeds, list) else _parse_int_list(seeds),
        out_dir=get("out"),
        run_id=get("run_id"),
        f1_sample_size=int(get("f1_sample")),
    )
    artifacts = cmd_train(config)
    ok = [r for r in artifacts.results if r.report is not None]
    print(f"run {config.run_id}: {len(ok)}/{len(config.seeds)} seeds finished")
    for name, label in (("q", "Q"), ("conductance", "C"), ("nmi", "NMI"), ("f1", "F1")):
        if artifacts.mean.get(name) is not None:
            print(
                f"  {label}: {100 * artifacts.mean[name]:.1f}"
                f" +/- {100 * artifacts.std[name]:.1f}"
            )
    if artifacts.mean.get("k_found") is not None:
        print(f"  clusters found (mean): {artifacts.mean['k_found']:.1f}")
    print(f"  artifacts in {artifacts.out_dir}")
    return 0 if len(ok) == len(config.seeds) else 1


def _run_eval(args: argparse.Namespace) -> int:
    report = cmd_eval(
        args.checkpoint,
        args.edges,
        args.features,
        labels_path=args.labels,
        birch_threshold=args.birch_threshold,
        branching_factor=args.branching,
        f1_sample_size=args.f1_sample,
        seed=args.seed,
    )
    print(f"k_found: {report.k_found}")
    print(f"Q: {100 * report.q:.1f}")
    print(f"C: {100 * report.conductance:.1f}")
    if report.nmi is not None:
        print(f"NMI: {100 * report.nmi:.1f}")
        print(f"F1: {100 * report.f1:.1f}")
    return 0


def _run_generate(args: argparse.Namespace) -> int:
    result = cmd_generate(
        _parse_int_list(args.blocks),
        args.p_in,
        args.p_out,
        args.seed,
        args.out,
        noise_std=args.noise,
    )
    g = result["graph"]
    print(f"generated SBM: n={g.n}, m={g.m}, blocks={result['partition'].k}")
    print(f"  files in {args.out}")
    return 0


def _run_scaling(args: argparse.Namespace) -> int:
    rows = cmd_scaling(
        _parse_int_list(args.sizes),
        args.out,
        seed=args.seed,
        hidden_dims=_parse_int_list(args.dims),
        epochs_timed=args.epochs,
    )
    for n, _, sec in rows:
        print(f"n={n}: {sec:.4f} s/epoch")
    base = rows[0][2]
    for n, _, sec in rows[1:]:
        print(f"  t({n})/t({rows[0][0]}) = {sec / base:.2f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modcluster",
        description="Modularity-maximizing GCN clustering with BIRCH extraction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_train_parser(sub)

    p = sub.add_parser("eval", help="cluster and score a dataset with a saved model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels")
    p.add_argument("--birch-threshold", dest="birch_threshold", type=float, default=0.5)
    p.add_argument("--branching", type=int, default=50)
    p.add_argument("--f1-sample", dest="f1_sample", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0, help="seed for F1 sampling")

    p = sub.add_parser("generate", help="write a synthetic SBM dataset")
    p.add_argument("--blocks", required=True, help="comma-separated block sizes")
    p.add_argument("--p-in", dest="p_in", type=float, required=True)
    p.add_argument("--p-out", dest="p_out", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=1.0, help="feature noise stddev")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("scaling", help="time per-epoch cost at increasing graph sizes")
    p.add_argument("--sizes", required=True, help="comma-separated ascending node counts")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", default="256,128,64")
    p.add_argument("--epochs", type=int, default=3, help="timed epochs per size")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "train": _run_train,
        "eval": _run_eval,
        "generate": _run_generate,
        "scaling": _run_scaling,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
