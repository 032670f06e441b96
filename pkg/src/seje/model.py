"""Joint-embedding networks over engineered features.

Two single-hidden-layer encoders (recipe: term feature + mean sentence
vector; image: pixel feature + category vector) project into a shared
d-dimensional space and l2-normalize. A shared linear head classifies
embeddings into the category space. A three-layer leaky-rectifier
discriminator scores embeddings; its input gradient is produced in closed
form from first-order ops so the gradient-penalty term stays inside a
single reverse-mode pass.

Weight matrices are stored (in_dim, out_dim) and applied as x @ W.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionMismatch

LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class EmbedConfig:
    """Network shape configuration.

    The reference configuration uses a 1024-wide joint space over 300-wide
    word vectors; desk-scale defaults are 32 and 64.
    """

    d: int = 32
    h: int = 64
    h_d: int = 64
    term_dim: int = 64
    pixel_dim: int = 32
    n_categories: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("joint dimension d must be >= 2")
        if min(self.h, self.h_d, self.term_dim, self.pixel_dim, self.n_categories) < 1:
            raise ValueError("all widths must be >= 1")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class ModelParams:
    """All trainable tensors; see `named()` for the canonical ordering."""

    w_t: Tensor
    b_t: Tensor
    w_s: Tensor
    b_s: Tensor
    w_r: Tensor
    b_r: Tensor
    w_p: Tensor
    b_p: Tensor
    w_c: Tensor
    b_c: Tensor
    w_v: Tensor
    b_v: Tensor
    w_cls: Tensor
    b_cls: Tensor
    d_w1: Tensor
    d_b1: Tensor
    d_w2: Tensor
    d_b2: Tensor
    d_w3: Tensor
    d_b3: Tensor

    @classmethod
    def initialize(cls, cfg: EmbedConfig, rng: np.random.Generator | None = None) -> "ModelParams":
        """Glorot-uniform weights (drawn in field order), zero biases."""
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        d, h, h_d = cfg.d, cfg.h, cfg.h_d

        def weight(fan_in: int, fan_out: int) -> Tensor:
            return Tensor(_glorot(rng, fan_in, fan_out, (fan_in, fan_out)), requires_grad=True)

        def bias(n: int) -> Tensor:
            return Tensor(np.zeros(n), requires_grad=True)

        return cls(
            w_t=weight(cfg.term_dim, h),
            b_t=bias(h),
            w_s=weight(cfg.term_dim, h),
            b_s=bias(h),
            w_r=weight(2 * h, d),
            b_r=bias(d),
            w_p=weight(cfg.pixel_dim, h),
            b_p=bias(h),
            w_c=weight(cfg.term_dim, h),
            b_c=bias(h),
            w_v=weight(2 * h, d),
            b_v=bias(d),
            w_cls=weight(d, cfg.n_categories),
            b_cls=bias(cfg.n_categories),
            d_w1=weight(d, h_d),
            d_b1=bias(h_d),
            d_w2=weight(h_d, h_d),
            d_b2=bias(h_d),
            d_w3=Tensor(_glorot(rng, h_d, 1, (h_d,)), requires_grad=True),
            d_b3=Tensor(np.zeros(()), requires_grad=True),
        )

    def named(self) -> dict[str, Tensor]:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    def encoder_tensors(self) -> dict[str, Tensor]:
        """Encoder + classifier partition (everything but the discriminator)."""
        return {k: v for k, v in self.named().items() if not k.startswith("d_")}

    def discriminator_tensors(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.named().items() if k.startswith("d_")}


def _branch(x, w: Tensor, b: Tensor) -> Tensor:
    return ad.tanh(ad.add(ad.matmul(x, w), b))


def encode_recipe(p: ModelParams, f_term, sentence_vectors) -> Tensor:
    """Unit-norm recipe embedding from a term feature and sentence vectors.

    The sentence list is mean-pooled (order independent); an empty list
    contributes a zero vector.
    """
    f_term = ad.as_tensor(f_term)
    if sentence_vectors is not None and len(sentence_vectors) > 0:
        smean = np.mean([np.asarray(v, dtype=np.float64) for v in sentence_vectors], axis=0)
    else:
        smean = np.zeros(f_term.shape[0])
    ht = _branch(f_term, p.w_t, p.b_t)
    hs = _branch(Tensor(smean), p.w_s, p.b_s)
    pre = ad.add(ad.matmul(ad.concat([ht, hs]), p.w_r), p.b_r)
    return ad.l2_normalize(pre)


def encode_recipe_batch(p: ModelParams, term_mat, sent_mat) -> Tensor:
    """Batched encode_recipe over stacked term / mean-sentence matrices."""
    term_mat, sent_mat = ad.as_tensor(term_mat), ad.as_tensor(sent_mat)
    if term_mat.shape[0] != sent_mat.shape[0]:
        raise DimensionMismatch(f"{term_mat.shape[0]} term rows vs {sent_mat.shape[0]} sentence rows")
    ht = _branch(term_mat, p.w_t, p.b_t)
    hs = _branch(sent_mat, p.w_s, p.b_s)
    pre = ad.add(ad.matmul(ad.concat([ht, hs], axis=1), p.w_r), p.b_r)
    return ad.l2_normalize(pre)


def encode_image(p: ModelParams, f_pixel, f_cat) -> Tensor:
    """Unit-norm image embedding from pixel and category-embedding features."""
    hp = _branch(ad.as_tensor(f_pixel), p.w_p, p.b_p)
    hc = _branch(ad.as_tensor(f_cat), p.w_c, p.b_c)
    pre = ad.add(ad.matmul(ad.concat([hp, hc]), p.w_v), p.b_v)
    return ad.l2_normalize(pre)


def encode_image_batch(p: ModelParams, pixel_mat, cat_mat) -> Tensor:
    pixel_mat, cat_mat = ad.as_tensor(pixel_mat), ad.as_tensor(cat_mat)
    if pixel_mat.shape[0] != cat_mat.shape[0]:
        raise DimensionMismatch(f"{pixel_mat.shape[0]} pixel rows vs {cat_mat.shape[0]} category rows")
    hp = _branch(pixel_mat, p.w_p, p.b_p)
    hc = _branch(cat_mat, p.w_c, p.b_c)
    pre = ad.add(ad.matmul(ad.concat([hp, hc], axis=1), p.w_v), p.b_v)
    return ad.l2_normalize(pre)


def classify(p: ModelParams, e) -> Tensor:
    """Category logits for one embedding (1-D) or a batch (2-D)."""
    return ad.add(ad.matmul(ad.as_tensor(e), p.w_cls), p.b_cls)


def discriminate(p: ModelParams, e) -> tuple[Tensor, Tensor, Tensor]:
    """Score one embedding: (pre-sigmoid score, confidence, input gradient).

    The input gradient d score / d e is assembled from the rectifier slope
    masks and the weight tensors themselves, so it is exact and remains
    differentiable with respect to the discriminator parameters.
    """
    e = ad.as_tensor(e)
    z1 = ad.add(ad.matmul(e, p.d_w1), p.d_b1)
    a1 = ad.leaky_relu(z1, LEAKY_SLOPE)
    z2 = ad.add(ad.matmul(a1, p.d_w2), p.d_b2)
    a2 = ad.leaky_relu(z2, LEAKY_SLOPE)
    score = ad.add(ad.matmul(a2, p.d_w3), p.d_b3)
    confidence = ad.sigmoid(score)

    m1 = ad.leaky_slopes(z1, LEAKY_SLOPE)
    m2 = ad.leaky_slopes(z2, LEAKY_SLOPE)
    g2 = ad.elementwise_mul(m2, p.d_w3)
    g1 = ad.elementwise_mul(m1, ad.matmul(g2, ad.transpose(p.d_w2)))
    input_gradient = ad.matmul(g1, ad.transpose(p.d_w1))
    return score, confidence, input_gradient


def discriminate_batch(p: ModelParams, embs) -> tuple[Tensor, Tensor, Tensor]:
    """Batched discriminate: (scores (n,), confidences (n,), input grads (n, d))."""
    embs = ad.as_tensor(embs)
    n = embs.shape[0]
    z1 = ad.add(ad.matmul(embs, p.d_w1), p.d_b1)
    a1 = ad.leaky_relu(z1, LEAKY_SLOPE)
    z2 = ad.add(ad.matmul(a1, p.d_w2), p.d_b2)
    a2 = ad.leaky_relu(z2, LEAKY_SLOPE)
    scores = ad.add(ad.matmul(a2, p.d_w3), p.d_b3)
    confidences = ad.sigmoid(scores)

    m1 = ad.leaky_slopes(z1, LEAKY_SLOPE)
    m2 = ad.leaky_slopes(z2, LEAKY_SLOPE)
    g2 = ad.elementwise_mul(m2, ad.tile_rows(p.d_w3, n))
    g1 = ad.elementwise_mul(m1, ad.matmul(g2, ad.transpose(p.d_w2)))
    input_gradients = ad.matmul(g1, ad.transpose(p.d_w1))
    return scores, confidences, input_gradients
