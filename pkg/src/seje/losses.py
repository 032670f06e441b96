"""Training objective: mined soft-margin triplet loss, category alignment,
and discriminator losses with a gradient penalty.

The total objective is L = L_TRI + lambda1 * L_CA + lambda2 * L_DA. The
discriminator itself trains on L_D (binary confidence: high on image
embeddings, low on recipe embeddings) plus lambda_D times a unit-gradient
penalty evaluated at random interpolates of matched pairs. Reference
weights: lambda1 = lambda2 = 0.005, lambda_D = 10.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import BatchTooSmall, NonFiniteValue, ShapeMismatch
from .model import ModelParams, discriminate_batch

MINING_MODES = ("instance", "double")


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.005
    lambda2: float = 0.005
    lambda_d: float = 10.0
    gamma: float = 1.0
    margin: float = 0.3

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda_d, self.gamma, self.margin) < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass
class BatchEmbeddings:
    """Matched recipe/image embedding rows plus category indices."""

    er: Tensor
    ev: Tensor
    categories: np.ndarray

    def __post_init__(self):
        self.er = ad.as_tensor(self.er)
        self.ev = ad.as_tensor(self.ev)
        self.categories = np.asarray(self.categories, dtype=np.intp)
        if self.er.ndim != 2 or self.er.shape != self.ev.shape:
            raise ShapeMismatch(f"embedding shapes {self.er.shape} vs {self.ev.shape}")
        if self.categories.shape != (self.er.shape[0],):
            raise ShapeMismatch(
                f"{self.categories.shape[0] if self.categories.ndim else 0} categories "
                f"for {self.er.shape[0]} rows"
            )

    @property
    def n(self) -> int:
        return self.er.shape[0]


def mine_hard_negative(
    anchor: int, dist_row: np.ndarray, categories, mode: str = "double"
) -> int:
    """Index of the hardest (closest) admissible negative for one anchor.

    instance mode: argmin over all candidates except the anchor itself.
    double mode: restrict to candidates of a different category, falling
    back to instance mode when none exists. Ties break to the lowest index.
    """
    dist_row = np.asarray(dist_row, dtype=np.float64)
    categories = np.asarray(categories)
    n = dist_row.shape[0]
    if n < 2:
        raise BatchTooSmall("negative mining needs at least 2 candidates")
    if mode not in MINING_MODES:
        raise ValueError(f"unknown mining mode {mode!r}")
    admissible = np.ones(n, dtype=bool)
    admissible[anchor] = False
    if mode == "double":
        cross = admissible & (categories != categories[anchor])
        if cross.any():
            admissible = cross
    candidates = np.flatnonzero(admissible)
    return int(candidates[np.argmin(dist_row[candidates])])


def _pairwise_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sq_a = np.sum(a * a, axis=1)
    sq_b = np.sum(b * b, axis=1)
    d = sq_a[:, None] + sq_b[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d, 0.0)


def _soft_margin(diff: Tensor, w: LossWeights) -> Tensor:
    return ad.softplus(ad.scalar_mul(w.gamma, ad.add(diff, w.margin)))


def triplet_loss_batch(b: BatchEmbeddings, w: LossWeights, mode: str = "double") -> Tensor:
    """Batch-hard soft-margin triplet loss, both retrieval directions.

    Negatives are mined per anchor on detached distances; only the mined
    pairs contribute to the differentiable loss.
    """
    if b.n < 2:
        raise BatchTooSmall("triplet loss needs at least 2 pairs")
    dist = _pairwise_sq(b.er.data, b.ev.data)  # dist[i, j] = d(er_i, ev_j)
    neg_for_recipe = np.array(
        [mine_hard_negative(i, dist[i], b.categories, mode) for i in range(b.n)]
    )
    neg_for_image = np.array(
        [mine_hard_negative(i, dist[:, i], b.categories, mode) for i in range(b.n)]
    )
    d_pos = ad.squared_euclidean(b.er, b.ev)
    d_neg_r = ad.squared_euclidean(b.er, ad.gather_rows(b.ev, neg_for_recipe))
    d_neg_v = ad.squared_euclidean(b.ev, ad.gather_rows(b.er, neg_for_image))
    fwd = ad.reduce_sum(_soft_margin(ad.sub(d_pos, d_neg_r), w))
    bwd = ad.reduce_sum(_soft_margin(ad.sub(d_pos, d_neg_v), w))
    return ad.add(fwd, bwd)


def triplet_loss_batch_all(b: BatchEmbeddings, w: LossWeights) -> Tensor:
    """Ablation baseline: every cross pair is a negative (no mining)."""
    if b.n < 2:
        raise BatchTooSmall("triplet loss needs at least 2 pairs")
    n = b.n
    dist = ad.pairwise_squared_euclidean(b.er, b.ev)
    d_pos = ad.squared_euclidean(b.er, b.ev)
    pos_col = ad.transpose(ad.tile_rows(d_pos, n))  # pos_col[i, j] = d_pos[i]
    off_diag = Tensor(1.0 - np.eye(n))
    fwd = ad.elementwise_mul(off_diag, _soft_margin(ad.sub(pos_col, dist), w))
    bwd = ad.elementwise_mul(off_diag, _soft_margin(ad.sub(pos_col, ad.transpose(dist)), w))
    return ad.add(ad.reduce_sum(fwd), ad.reduce_sum(bwd))


def category_alignment_loss(logits_r, logits_v, labels) -> tuple[Tensor, Tensor, Tensor]:
    """Per-modality softmax cross-entropy summed over the batch.

    Returns (recipe loss, image loss, their sum).
    """
    l_r = ad.softmax_cross_entropy(logits_r, labels)
    l_v = ad.softmax_cross_entropy(logits_v, labels)
    return l_r, l_v, ad.add(l_r, l_v)


def discriminator_losses(
    b: BatchEmbeddings, params: ModelParams, w: LossWeights, eps_samples: np.ndarray
) -> tuple[Tensor, Tensor, Tensor]:
    """(L_D, L_DA, penalty) for one batch.

    L_D trains the discriminator toward high confidence on image embeddings
    and low on recipe embeddings, plus lambda_d times the unit-gradient
    penalty at interpolates x_i = eps_i * er_i + (1 - eps_i) * ev_i.
    L_DA = sum log(1 - F_D(er_i)) is the encoders' alignment term. Log
    arguments are clamped at 1e-12.
    """
    eps = np.asarray(eps_samples, dtype=np.float64)
    if eps.shape != (b.n,):
        raise ShapeMismatch(f"need {b.n} interpolation samples, got shape {eps.shape}")
    if np.any(eps <= 0) or np.any(eps >= 1):
        raise ValueError("eps_samples must lie strictly inside (0, 1)")

    eps_col = Tensor(eps[:, None])
    interp = ad.add(
        ad.elementwise_mul(eps_col, b.er),
        ad.elementwise_mul(Tensor(1.0 - eps[:, None]), b.ev),
    )
    _, _, grads = discriminate_batch(params, interp)
    shortfall = ad.sub(ad.l2_norm(grads), 1.0)
    penalty = ad.reduce_sum(ad.elementwise_mul(shortfall, shortfall))

    _, conf_v, _ = discriminate_batch(params, b.ev)
    _, conf_r, _ = discriminate_batch(params, b.er)
    log_not_recipe = ad.reduce_sum(ad.safe_log(ad.sub(1.0, conf_r)))
    l_d = ad.add(
        ad.sub(ad.scalar_mul(-1.0, ad.reduce_sum(ad.safe_log(conf_v))), log_not_recipe),
        ad.scalar_mul(w.lambda_d, penalty),
    )
    l_da = log_not_recipe
    return l_d, l_da, penalty


def alignment_loss(b: BatchEmbeddings, params: ModelParams) -> Tensor:
    """L_DA alone (no penalty), for the encoder phase where only the recipe
    confidences matter and the discriminator is frozen."""
    _, conf_r, _ = discriminate_batch(params, b.er)
    return ad.reduce_sum(ad.safe_log(ad.sub(1.0, conf_r)))


def total_loss(l_tri, l_ca, l_da, w: LossWeights) -> Tensor:
    """L = L_TRI + lambda1 * L_CA + lambda2 * L_DA."""
    total = ad.add(
        ad.add(ad.as_tensor(l_tri), ad.scalar_mul(w.lambda1, ad.as_tensor(l_ca))),
        ad.scalar_mul(w.lambda2, ad.as_tensor(l_da)),
    )
    if not np.all(np.isfinite(total.data)):
        raise NonFiniteValue("total loss is not finite")
    return total
