"""Clustering objectives over unit-sphere embeddings, with closed-form gradients.

Everything here is linear in graph size: the soft-modularity term is
evaluated through sparse trace identities (never materializing the n-by-n
modularity or similarity matrices), and the auxiliary label term goes through
the small k-by-k / p-by-p Gram matrices instead of the |S|-by-|S| pairwise
membership matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph


@dataclass
class AuxiliaryInfo:
    """Optional node-level supervision plus the loss weights.

    variant "labels": ``subset`` indexes the supervised nodes and ``onehot``
    holds one label indicator per subset row. variant "pairs": ``pairs`` lists
    same-cluster node pairs. variant "none": carries only the weights (lam is
    then irrelevant; alpha still controls the collapse regularizer).
    """

    variant: str = "none"
    subset: np.ndarray | None = None
    onehot: np.ndarray | None = None
    pairs: np.ndarray | None = None
    lam: float = 0.0
    alpha: float = 0.0

    def validate(self, n: int) -> None:
        if self.lam < 0 or self.alpha < 0:
            raise ValueError("lam and alpha must be nonnegative")
        if self.variant == "labels":
            if self.subset is None or len(self.subset) == 0:
                raise ValueError("label auxiliary requires a nonempty node subset")
            if self.subset.min() < 0 or self.subset.max() >= n:
                raise ValueError("subset indices out of range")
            if self.onehot is None or self.onehot.shape[0] != len(self.subset):
                raise ValueError("one-hot matrix must have one row per subset node")
            row_sums = self.onehot.sum(axis=1)
            if not np.all(row_sums == 1) or not np.all(
                (self.onehot == 0) | (self.onehot == 1)
            ):
                raise ValueError("each one-hot row must contain exactly one 1")
        elif self.variant == "pairs":
            if self.pairs is None or len(self.pairs) == 0:
                raise ValueError("pair auxiliary requires a nonempty pair list")
            if self.pairs.min() < 0 or self.pairs.max() >= n:
                raise ValueError("pair indices out of range")
            if np.any(self.pairs[:, 0] == self.pairs[:, 1]):
                raise ValueError("pairs must reference distinct nodes")
        elif self.variant != "none":
            raise ValueError(f"unknown auxiliary variant {self.variant!r}")


def onehot_from_labels(labels: np.ndarray, subset: np.ndarray) -> np.ndarray:
    """One-hot matrix over the distinct labels of the full labeled set."""
    labeled_values = np.unique(labels[labels >= 0])
    col = np.searchsorted(labeled_values, labels[subset])
    onehot = np.zeros((len(subset), len(labeled_values)), dtype=np.float64)
    onehot[np.arange(len(subset)), col] = 1.0
    return onehot


@dataclass
class LossReport:
    l1: float
    l2: float
    reg: float
    total: float
    soft_modularity: float


def modularity_loss(x: np.ndarray, g: Graph) -> tuple[float, np.ndarray]:
    """Negative soft modularity -(1/2m)(Tr(X'AX) - Tr(X'dd'X)/2m) and its gradient.

    Cost O(k(m+n)); the n-by-n modularity matrix is never formed.
    """
    if x.shape[0] != g.n:
        raise ValueError("embedding row count != graph size")
    if g.m == 0:
        raise ValueError("modularity is undefined for an edgeless graph (m=0)")
    two_m = 2.0 * g.m
    adj = g.adjacency()
    ax = adj @ x
    d = g.degrees.astype(np.float64)
    dtx = x.T @ d
    value = -(float(np.sum(x * ax)) - float(dtx @ dtx) / two_m) / two_m
    grad = -(2.0 * ax - np.outer(d, dtx) / g.m) / two_m
    return value, grad


def aux_loss_labels(
    x: np.ndarray, subset: np.ndarray, onehot: np.ndarray
) -> tuple[float, np.ndarray]:
    """Squared Frobenius mismatch between pairwise label co-membership and
    embedding similarity on the supervised subset, via Gram-matrix traces:

        (Tr((C'C)^2) + Tr((Xs'Xs)^2) - 2 Tr(Xs'C C'Xs)) / |S|^2

    which equals ||CC' - XsXs'||_F^2 / |S|^2 without forming the |S|-by-|S|
    matrices. The gradient is nonzero only on subset rows.
    """
    if len(subset) == 0:
        raise ValueError("empty auxiliary subset")
    s = float(len(subset))
    xs = x[subset]
    ctc = onehot.T @ onehot
    xtx = xs.T @ xs
    ctx = onehot.T @ xs
    value = (
        float(np.sum(ctc * ctc)) + float(np.sum(xtx * xtx)) - 2.0 * float(np.sum(ctx * ctx))
    ) / (s * s)
    grad = np.zeros_like(x)
    grad[subset] = 4.0 / (s * s) * (xs @ xtx - onehot @ ctx)
    return value, grad


def aux_loss_pairs(x: np.ndarray, pairs: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared cosine gap (1 - Xi.Xj)^2 over known same-cluster pairs."""
    if len(pairs) == 0:
        raise ValueError("empty pair list")
    i, j = pairs[:, 0], pairs[:, 1]
    cos = np.einsum("ij,ij->i", x[i], x[j])
    gaps = 1.0 - cos
    value = float(np.mean(gaps * gaps))
    coeff = -2.0 * gaps / len(pairs)
    grad = np.zeros_like(x)
    np.add.at(grad, i, coeff[:, None] * x[j])
    np.add.at(grad, j, coeff[:, None] * x[i])
    return value, grad


def collapse_regularizer(x: np.ndarray, alpha: float) -> tuple[float, np.ndarray]:
    """alpha * ||mean embedding||^4; penalizes the all-one-cluster solution."""
    if alpha == 0.0:
        return 0.0, np.zeros_like(x)
    xbar = x.mean(axis=0)
    sq = float(xbar @ xbar)
    value = alpha * sq * sq
    grad = np.broadcast_to(
        alpha * 4.0 * sq / x.shape[0] * xbar, x.shape
    ).copy()
    return value, grad


def total_loss(
    x: np.ndarray, g: Graph, aux: AuxiliaryInfo | None = None
) -> tuple[LossReport, np.ndarray]:
    """Combined objective l1 + lam*l2 + reg and its gradient with respect to X."""
    l1, grad = modularity_loss(x, g)
    lam = aux.lam if aux is not None else 0.0
    alpha = aux.alpha if aux is not None else 0.0
    l2 = 0.0
    if aux is not None and aux.variant == "labels":
        l2, g2 = aux_loss_labels(x, aux.subset, aux.onehot)
        grad = grad + lam * g2
    elif aux is not None and aux.variant == "pairs":
        l2, g2 = aux_loss_pairs(x, aux.pairs)
        grad = grad + lam * g2
    reg, g3 = collapse_regularizer(x, alpha)
    if alpha != 0.0:
        grad = grad + g3
    report = LossReport(
        l1=l1,
        l2=l2,
        reg=reg,
        total=l1 + lam * l2 + reg,
        soft_modularity=-l1,
    )
    return report, grad
