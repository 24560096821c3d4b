"""End-to-end orchestration: configuration, training, multi-seed runs, artifacts.

A run trains one model per seed with full-batch epochs of
forward -> transform -> loss -> backward -> adam, clusters the final
embeddings with BIRCH, scores the partition, and writes everything under the
output directory:

* ``loss_seed<S>.csv``       -- epoch,l1,l2,reg,total,soft_modularity
* ``partition_seed<S>.tsv``  -- node_id<TAB>cluster_id
* ``checkpoint_seed<S>.tsv`` -- model weights (see gcn.save_checkpoint)
* ``metrics.csv``            -- run_id,seed,lambda,alpha,k_found,Q,C,NMI,F1
                                per seed plus mean/std rows (scores x100)
* ``failures.log``           -- only when a seed diverges (non-finite loss)

Sub-seeds for model init, graph sampling, the auxiliary subset, and F1
sampling are derived from each run seed through a fixed SeedSequence
splitting rule so every random draw is auditable.
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gcn
from .birch import BirchParams, birch_fit
from .graph import (
    UNLABELED,
    Graph,
    Partition,
    generate_sbm,
    load_features,
    load_graph,
    load_labels,
    load_pairs,
    normalized_adjacency,
    write_edges,
    write_features,
    write_labels,
    write_partition,
)
from .losses import AuxiliaryInfo, onehot_from_labels, total_loss
from .metrics import MetricsReport, evaluate

_ROLES = {"init": 0, "sbm": 1, "f1": 2, "aux": 3, "features": 4}


def derive_seed(seed: int, role: str) -> int:
    """Fixed splitting rule: sub-seed = SeedSequence([seed, role_code])."""
    return int(np.random.SeedSequence([int(seed), _ROLES[role]]).generate_state(1)[0])


@dataclass
class RunConfig:
    edges: str = ""
    features: str = ""
    labels: str | None = None
    partition: str | None = None  # external partition used as auxiliary labels
    pairs: str | None = None  # same-cluster pair file for aux_mode="pairs"
    hidden_dims: list[int] = field(default_factory=lambda: [256, 128, 64])
    epochs: int = 300
    learning_rate: float = 0.001
    lam: float = 0.0
    alpha: float = 0.0
    aux_mode: str = "none"  # none | labels | pairs | external-partition
    label_fraction: float = 1.0
    birch_threshold: float = 0.5
    branching_factor: int = 50
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    out_dir: str = "runs/latest"
    run_id: str = "run"
    f1_sample_size: int = 1000

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lam < 0 or self.alpha < 0:
            raise ValueError("lambda and alpha must be nonnegative")
        if not 0.0 <= self.label_fraction <= 1.0:
            raise ValueError("label_fraction must lie in [0, 1]")
        if self.aux_mode not in ("none", "labels", "pairs", "external-partition"):
            raise ValueError(f"unknown aux_mode {self.aux_mode!r}")
        if not self.seeds:
            raise ValueError("at least one seed is required")


@dataclass
class SeedResult:
    seed: int
    model: gcn.GcnModel
    loss_rows: list
    partition: Partition | None
    report: MetricsReport | None
    failure: str | None = None


@dataclass
class RunArtifacts:
    out_dir: Path
    metrics_path: Path
    results: list[SeedResult]
    mean: dict
    std: dict


class DivergenceError(RuntimeError):
    pass


def build_aux(
    config: RunConfig, n: int, labels: np.ndarray | None, seed: int
) -> AuxiliaryInfo | None:
    """Per-seed auxiliary supervision according to the configured mode."""
    if config.aux_mode == "none":
        if config.alpha == 0.0:
            return None
        return AuxiliaryInfo(variant="none", lam=config.lam, alpha=config.alpha)

    if config.aux_mode == "pairs":
        aux = AuxiliaryInfo(
            variant="pairs",
            pairs=load_pairs(config.pairs, n),
            lam=config.lam,
            alpha=config.alpha,
        )
        aux.validate(n)
        return aux

    if config.aux_mode == "labels":
        if labels is None:
            raise ValueError("aux_mode=labels requires a labels file")
        source = labels
    else:  # external-partition: same file shape as labels.tsv
        source = load_labels(config.partition, n)

    available = np.flatnonzero(source != UNLABELED)
    if len(available) == 0:
        raise ValueError("auxiliary source has no labeled nodes")
    take = int(round(config.label_fraction * len(available)))
    if take == 0:
        raise ValueError("label_fraction selects an empty auxiliary subset")
    if take < len(available):
        rng = np.random.default_rng(derive_seed(seed, "aux"))
        subset = np.sort(rng.choice(available, size=take, replace=False))
    else:
        subset = available
    aux = AuxiliaryInfo(
        variant="labels",
        subset=subset,
        onehot=onehot_from_labels(source, subset),
        lam=config.lam,
        alpha=config.alpha,
    )
    aux.validate(n)
    return aux


def train_single_seed(
    g: Graph,
    a_norm,
    features: np.ndarray,
    config: RunConfig,
    seed: int,
    labels: np.ndarray | None = None,
) -> SeedResult:
    """Full training for one seed; raises DivergenceError on non-finite loss."""
    aux = build_aux(config, g.n, labels, seed)
    dims = [features.shape[1]] + list(config.hidden_dims)
    model = gcn.init_model(dims, derive_seed(seed, "init"))
    adam = gcn.init_adam(model, config.learning_rate)
    loss_rows = []
    for epoch in range(1, config.epochs + 1):
        tape = gcn.GradientTape()
        raw = gcn.gcn_forward(model, a_norm, features, tape)
        x = gcn.transform_embeddings(raw, tape)
        report, dldx = total_loss(x, g, aux)
        if not np.isfinite(report.total):
            raise DivergenceError(f"non-finite loss at epoch {epoch}")
        loss_rows.append(
            (epoch, report.l1, report.l2, report.reg, report.total, report.soft_modularity)
        )
        grads = gcn.backward(tape, dldx)
        gcn.adam_step(model, grads, adam)

    x_final = transform_forward(model, a_norm, features)
    partition = birch_fit(
        x_final,
        BirchParams(config.birch_threshold, config.branching_factor),
    )
    report = evaluate(
        g,
        partition,
        labels=labels,
        sample_size=config.f1_sample_size,
        f1_seed=derive_seed(seed, "f1"),
    )
    return SeedResult(seed, model, loss_rows, partition, report)


def transform_forward(model: gcn.GcnModel, a_norm, features: np.ndarray) -> np.ndarray:
    """Inference pass: raw GCN output mapped onto the unit sphere."""
    return gcn.transform_embeddings(gcn.gcn_forward(model, a_norm, features))


def _write_loss_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "l1", "l2", "reg", "total", "soft_modularity"])
        for row in rows:
            writer.writerow([row[0]] + [f"{v:.12g}" for v in row[1:]])


def _metric_cells(report: MetricsReport) -> list[str]:
    def scaled(v):
        return "" if v is None else f"{100.0 * v:.1f}"

    return [
        str(report.k_found),
        scaled(report.q),
        scaled(report.conductance),
        scaled(report.nmi),
        scaled(report.f1),
    ]


def write_metrics_csv(
    path: Path, run_id: str, config: RunConfig, results: list[SeedResult]
) -> tuple[dict, dict]:
    """Per-seed rows plus mean/std summary rows; returns raw-scale summaries."""
    names = ("q", "conductance", "nmi", "f1", "k_found")
    ok = [r for r in results if r.report is not None]
    stacks = {
        name: np.array(
            [getattr(r.report, name) for r in ok if getattr(r.report, name) is not None],
            dtype=np.float64,
        )
        for name in names
    }
    mean = {k: float(v.mean()) if len(v) else None for k, v in stacks.items()}
    std = {k: float(v.std(ddof=0)) if len(v) else None for k, v in stacks.items()}

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["run_id", "seed", "lambda", "alpha", "k_found", "Q", "C", "NMI", "F1"]
        )
        for r in ok:
            writer.writerow(
                [run_id, r.seed, config.lam, config.alpha] + _metric_cells(r.report)
            )
        for label, summary in (("mean", mean), ("std", std)):
            cells = [
                "" if summary["k_found"] is None else f"{summary['k_found']:.1f}"
            ] + [
                ""
                if summary[m] is None
                else f"{100.0 * summary[m]:.1f}"
                for m in ("q", "conductance", "nmi", "f1")
            ]
            writer.writerow([run_id, label, config.lam, config.alpha] + cells)
    return mean, std


def cmd_train(config: RunConfig) -> RunArtifacts:
    """Train over all configured seeds and write the artifact set."""
    config.validate()
    g = load_graph(config.edges)
    features = load_features(config.features, g.n)
    labels = load_labels(config.labels, g.n) if config.labels else None
    a_norm = normalized_adjacency(g)

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results: list[SeedResult] = []
    failures: list[str] = []
    for seed in config.seeds:
        try:
            res = train_single_seed(g, a_norm, features, config, seed, labels)
        except DivergenceError as exc:
            failures.append(f"seed {seed}: {exc}")
            results.append(SeedResult(seed, None, [], None, None, failure=str(exc)))
            continue
        _write_loss_csv(out / f"loss_seed{seed}.csv", res.loss_rows)
        write_partition(out / f"partition_seed{seed}.tsv", res.partition)
        gcn.save_checkpoint(out / f"checkpoint_seed{seed}.tsv", res.model)
        results.append(res)
    if failures:
        (out / "failures.log").write_text("\n".join(failures) + "\n")
        warnings.warn(f"{len(failures)} seed(s) diverged; see failures.log")

    metrics_path = out / "metrics.csv"
    mean, std = write_metrics_csv(metrics_path, config.run_id, config, results)
    return RunArtifacts(out, metrics_path, results, mean, std)


def cmd_eval(
    checkpoint_path,
    edges_path,
    features_path,
    labels_path=None,
    birch_threshold: float = 0.5,
    branching_factor: int = 50,
    f1_sample_size: int = 1000,
    seed: int = 0,
) -> MetricsReport:
    """Cluster and score a dataset with a saved model; no training."""
    model = gcn.load_checkpoint(checkpoint_path)
    g = load_graph(edges_path)
    features = load_features(features_path, g.n)
    labels = load_labels(labels_path, g.n) if labels_path else None
    a_norm = normalized_adjacency(g)
    x = transform_forward(model, a_norm, features)
    partition = birch_fit(x, BirchParams(birch_threshold, branching_factor))
    return evaluate(
        g,
        partition,
        labels=labels,
        sample_size=f1_sample_size,
        f1_seed=derive_seed(seed, "f1"),
    )


def cmd_generate(
    block_sizes: list[int],
    p_in: float,
    p_out: float,
    seed: int,
    out_dir,
    noise_std: float = 1.0,
) -> dict:
    """Write an SBM dataset: edges.tsv, labels.tsv (planted blocks), and
    features.tsv (one-hot block membership plus Gaussian noise)."""
    g, planted = generate_sbm(block_sizes, p_in, p_out, derive_seed(seed, "sbm"))
    rng = np.random.default_rng(derive_seed(seed, "features"))
    onehot = np.zeros((g.n, planted.k))
    onehot[np.arange(g.n), planted.assignment] = 1.0
    features = onehot + rng.normal(0.0, noise_std, size=onehot.shape)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "edges": out / "edges.tsv",
        "features": out / "features.tsv",
        "labels": out / "labels.tsv",
    }
    write_edges(paths["edges"], g)
    write_features(paths["features"], features)
    write_labels(paths["labels"], planted.assignment)
    return {"graph": g, "partition": planted, "paths": paths}


def scaling_sbm_params(n: int, blocks: int = 4, within_degree: float = 10.0, cross_degree: float = 2.0):
    """Equal blocks with edge probabilities tuned for a fixed average degree."""
    size = n // blocks
    sizes = [size] * blocks
    sizes[-1] += n - size * blocks
    p_in = min(1.0, within_degree / max(size - 1, 1))
    p_out = min(1.0, cross_degree / max(n - size, 1)) if blocks > 1 else 0.0
    return sizes, p_in, p_out


def cmd_scaling(
    sizes: list[int],
    out_csv,
    seed: int = 0,
    hidden_dims: list[int] | None = None,
    epochs_timed: int = 3,
    learning_rate: float = 0.001,
) -> list[tuple[int, int, float]]:
    """Per-epoch wall time of loss+gradient evaluation at increasing n.

    Each size gets an SBM with proportional blocks at fixed average degree;
    one warmup epoch runs before timing. Writes (n, epochs, seconds_per_epoch).
    """
    if sorted(sizes) != list(sizes):
        raise ValueError("sizes must be ascending")
    hidden_dims = hidden_dims or [256, 128, 64]
    rows = []
    for n in sizes:
        block_sizes, p_in, p_out = scaling_sbm_params(n)
        g, planted = generate_sbm(block_sizes, p_in, p_out, derive_seed(seed, "sbm"))
        rng = np.random.default_rng(derive_seed(seed, "features"))
        onehot = np.zeros((g.n, planted.k))
        onehot[np.arange(g.n), planted.assignment] = 1.0
        features = onehot + rng.normal(0.0, 1.0, size=onehot.shape)
        a_norm = normalized_adjacency(g)
        model = gcn.init_model([features.shape[1]] + hidden_dims, derive_seed(seed, "init"))
        adam = gcn.init_adam(model, learning_rate)

        def epoch_step():
            tape = gcn.GradientTape()
            raw = gcn.gcn_forward(model, a_norm, features, tape)
            x = gcn.transform_embeddings(raw, tape)
            _, dldx = total_loss(x, g, None)
            grads = gcn.backward(tape, dldx)
            gcn.adam_step(model, grads, adam)

        epoch_step()  # warmup
        start = time.perf_counter()
        for _ in range(epochs_timed):
            epoch_step()
        per_epoch = (time.perf_counter() - start) / epochs_timed
        rows.append((n, epochs_timed, per_epoch))

    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "epochs", "seconds_per_epoch"])
        for n, ep, sec in rows:
            writer.writerow([n, ep, f"{sec:.6g}"])
    return rows
