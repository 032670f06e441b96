"""Phase-II training: batching, Adam, alternating adversarial updates,
and bit-exact checkpointing.

Randomness is split two ways so resumption is trivially exact: batch
shuffles are pure functions of (seed, epoch), while one master generator
(seeded with the config seed) drives parameter initialization and the
per-batch interpolation draws, in that documented order. A checkpoint
stores parameters, Adam moments, step counters, the epoch index, and the
master generator state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import matio
from .autodiff import Tensor
from .errors import (
    DatasetTooSmall,
    DimensionMismatch,
    InvalidSpec,
    LabelOutOfRange,
    MalformedRecord,
    NonFiniteValue,
    ShapeMismatch,
)
from .losses import (
    BatchEmbeddings,
    LossWeights,
    alignment_loss,
    category_alignment_loss,
    discriminator_losses,
    total_loss,
    triplet_loss_batch,
    triplet_loss_batch_all,
)
from .model import EmbedConfig, ModelParams, classify, encode_image_batch, encode_recipe_batch

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

TRIPLET_VARIANTS = ("hard", "batch_all")
CHECKPOINT_VERSION = 1


@dataclass
class PairExample:
    """Engineered features for one recipe-image pair (Phase-I output)."""

    pair_id: str
    f_term: np.ndarray
    sentence_vectors: list[np.ndarray]
    f_pixel: np.ndarray
    f_cat: np.ndarray
    category_index: int


@dataclass(frozen=True)
class TrainConfig:
    """Reference values: batch 100, lr 1e-4; desk defaults batch 32."""

    batch_size: int = 32
    lr: float = 1e-4
    epochs: int = 50
    seed: int = 0
    disc_steps_per_encoder_step: int = 1
    weights: LossWeights = field(default_factory=LossWeights)
    embed: EmbedConfig = field(default_factory=EmbedConfig)
    triplet_variant: str = "hard"
    mining: str = "double"

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.disc_steps_per_encoder_step < 0:
            raise ValueError("disc_steps_per_encoder_step must be >= 0")
        if self.triplet_variant not in TRIPLET_VARIANTS:
            raise ValueError(f"unknown triplet variant {self.triplet_variant!r}")
        if self.mining not in ("instance", "double"):
            raise ValueError(f"unknown mining mode {self.mining!r}")


def config_to_dict(cfg: TrainConfig) -> dict:
    d = {
        "batch_size": cfg.batch_size,
        "lr": cfg.lr,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "disc_steps_per_encoder_step": cfg.disc_steps_per_encoder_step,
        "triplet_variant": cfg.triplet_variant,
        "mining": cfg.mining,
        "weights": vars(cfg.weights).copy(),
        "embed": {k: getattr(cfg.embed, k) for k in cfg.embed.__dataclass_fields__},
    }
    return d


def config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    weights = LossWeights(**d.pop("weights", {}))
    embed = EmbedConfig(**d.pop("embed", {}))
    return TrainConfig(weights=weights, embed=embed, **d)


@dataclass
class AdamMoments:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamMoments":
        return cls(
            m={k: np.zeros_like(a) for k, a in params.items()},
            v={k: np.zeros_like(a) for k, a in params.items()},
        )


@dataclass
class EpochStats:
    epoch: int
    l_tri: float
    l_ca_r: float
    l_ca_v: float
    l_da: float
    l_d: float
    penalty: float

    CSV_HEADER = "epoch,l_tri,l_ca_r,l_ca_v,l_da,l_d,penalty"

    def csv_row(self) -> str:
        return (
            f"{self.epoch},{self.l_tri!r},{self.l_ca_r!r},{self.l_ca_v!r},"
            f"{self.l_da!r},{self.l_d!r},{self.penalty!r}"
        )


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    epoch: int
    t_enc: int
    t_disc: int
    rng_state: dict
    config: TrainConfig


# --- batching ------------------------------------------------------------------


def _batch_indices(
    categories: list[int], batch_size: int, seed: int, epoch: int
) -> list[list[int]]:
    n = len(categories)
    if n < batch_size:
        raise DatasetTooSmall(f"{n} examples for batch size {batch_size}")
    rng = np.random.default_rng([seed, epoch])
    perm = rng.permutation(n)
    n_batches = n // batch_size
    batches = [list(perm[b * batch_size : (b + 1) * batch_size]) for b in range(n_batches)]

    if len(set(categories)) < 2:
        return [[int(i) for i in b] for b in batches]

    # Best-effort repair: give every single-category batch one foreign item,
    # swapping with the first donor position that keeps the donor diverse.
    def distinct(batch: list[int]) -> set[int]:
        return {categories[i] for i in batch}

    for bi, batch in enumerate(batches):
        cats = distinct(batch)
        if len(cats) >= 2:
            continue
        lone = next(iter(cats))
        fixed = False
        for bj, donor in enumerate(batches):
            if bj == bi or fixed:
                continue
            for pos, j in enumerate(donor):
                if categories[j] == lone:
                    continue
                trial = donor.copy()
                trial[pos] = batch[0]
                if len(distinct(trial)) >= 2:
                    donor[pos], batch[0] = batch[0], j
                    fixed = True
                    break
    return [[int(i) for i in b] for b in batches]


def make_batches(
    dataset: list[PairExample], batch_size: int, seed: int, epoch: int
) -> list[list[PairExample]]:
    """Seeded per-epoch shuffle into full batches (short tail dropped).

    When the dataset has at least two categories, a deterministic swap pass
    ensures every batch contains at least two distinct categories, so double
    mining is non-degenerate.
    """
    cats = [ex.category_index for ex in dataset]
    return [[dataset[i] for i in b] for b in _batch_indices(cats, batch_size, seed, epoch)]


# --- optimizer -------------------------------------------------------------------


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    moments: AdamMoments,
    lr: float,
    t: int,
) -> None:
    """One bias-corrected Adam update (beta1=0.9, beta2=0.999, eps=1e-8), in place."""
    if t < 1:
        raise ValueError("Adam step counter t starts at 1")
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: grad {g.shape} vs param {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteValue(f"gradient for {name} is not finite")
        m = moments.m[name]
        v = moments.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        if not np.all(np.isfinite(p)):
            raise NonFiniteValue(f"parameter {name} became non-finite")


# --- training ---------------------------------------------------------------------


def _stack_features(
    examples: list[PairExample], cfg: EmbedConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    term = np.stack([np.asarray(ex.f_term, dtype=np.float64) for ex in examples])
    sent = np.stack(
        [
            np.mean([np.asarray(v, dtype=np.float64) for v in ex.sentence_vectors], axis=0)
            if ex.sentence_vectors
            else np.zeros(cfg.term_dim)
            for ex in examples
        ]
    )
    pixel = np.stack([np.asarray(ex.f_pixel, dtype=np.float64) for ex in examples])
    cat = np.stack([np.asarray(ex.f_cat, dtype=np.float64) for ex in examples])
    labels = np.array([ex.category_index for ex in examples], dtype=np.intp)
    if term.shape[1] != cfg.term_dim or sent.shape[1] != cfg.term_dim:
        raise DimensionMismatch(
            f"term/sentence width {term.shape[1]}/{sent.shape[1]} vs configured {cfg.term_dim}"
        )
    if pixel.shape[1] != cfg.pixel_dim:
        raise DimensionMismatch(f"pixel width {pixel.shape[1]} vs configured {cfg.pixel_dim}")
    if cat.shape[1] != cfg.term_dim:
        raise DimensionMismatch(f"category width {cat.shape[1]} vs configured {cfg.term_dim}")
    if labels.min() < 0 or labels.max() >= cfg.n_categories:
        raise LabelOutOfRange(
            f"labels span [{labels.min()}, {labels.max()}] outside [0, {cfg.n_categories})"
        )
    return term, sent, pixel, cat, labels


def _resume_compatible(a: TrainConfig, b: TrainConfig) -> bool:
    return replace(a, epochs=0) == replace(b, epochs=0)


def train(
    examples: list[PairExample],
    config: TrainConfig,
    resume: Checkpoint | None = None,
) -> tuple[Checkpoint, list[EpochStats]]:
    """Run the alternating discriminator/encoder schedule over all epochs.

    Per batch: (a) disc_steps_per_encoder_step discriminator updates on L_D
    with detached (frozen-encoder) embeddings, then (b) one encoder +
    classifier update on L_TRI + lambda1*L_CA + lambda2*L_DA with the
    discriminator frozen. Returns the final checkpoint and per-epoch mean
    losses (for the epochs run in this call).
    """
    cfg = config.embed
    term, sent, pixel, cat, labels = _stack_features(examples, cfg)
    categories = [ex.category_index for ex in examples]

    master = np.random.default_rng(config.seed)
    params = ModelParams.initialize(cfg, master)
    named = params.named()
    enc_named = params.encoder_tensors()
    disc_named = params.discriminator_tensors()
    moments = AdamMoments.zeros_like({k: t.data for k, t in named.items()})
    t_enc = 0
    t_disc = 0
    start_epoch = 0

    if resume is not None:
        if not _resume_compatible(resume.config, config):
            raise InvalidSpec("resume checkpoint was produced by an incompatible config")
        for name, tensor in named.items():
            if resume.params[name].shape != tensor.data.shape:
                raise DimensionMismatch(f"checkpoint tensor {name} has wrong shape")
            tensor.data[...] = resume.params[name]
            moments.m[name][...] = resume.m[name]
            moments.v[name][...] = resume.v[name]
        t_enc, t_disc = resume.t_enc, resume.t_disc
        start_epoch = resume.epoch
        master = np.random.default_rng(config.seed)
        master.bit_generator.state = resume.rng_state

    def partition_step(tensors: dict[str, Tensor], t: int) -> None:
        adam_step(
            {k: tensors[k].data for k in tensors},
            {k: tensors[k].grad if tensors[k].grad is not None else np.zeros_like(tensors[k].data) for k in tensors},
            moments_view(tensors),
            config.lr,
            t,
        )

    def moments_view(tensors: dict[str, Tensor]) -> AdamMoments:
        return AdamMoments(
            m={k: moments.m[k] for k in tensors}, v={k: moments.v[k] for k in tensors}
        )

    trace: list[EpochStats] = []
    for epoch in range(start_epoch, config.epochs):
        batches = _batch_indices(categories, config.batch_size, config.seed, epoch)
        sums = {"l_tri": 0.0, "l_ca_r": 0.0, "l_ca_v": 0.0, "l_da": 0.0}
        d_sums = {"l_d": 0.0, "penalty": 0.0}
        n_disc = 0
        for idx_list in batches:
            idx = np.asarray(idx_list, dtype=np.intp)
            term_b = Tensor(term[idx])
            sent_b = Tensor(sent[idx])
            pixel_b = Tensor(pixel[idx])
            cat_b = Tensor(cat[idx])
            labels_b = labels[idx]

            if config.disc_steps_per_encoder_step > 0:
                er_const = encode_recipe_batch(params, term_b, sent_b).detach()
                ev_const = encode_image_batch(params, pixel_b, cat_b).detach()
                frozen = BatchEmbeddings(er_const, ev_const, labels_b)
                for _ in range(config.disc_steps_per_encoder_step):
                    eps = master.uniform(1e-6, 1.0 - 1e-6, size=len(idx))
                    for tensor in named.values():
                        tensor.zero_grad()
                    l_d, _, pen = discriminator_losses(frozen, params, config.weights, eps)
                    l_d.backward()
                    t_disc += 1
                    partition_step(disc_named, t_disc)
                    d_sums["l_d"] += l_d.item()
                    d_sums["penalty"] += pen.item()
                    n_disc += 1

            er = encode_recipe_batch(params, term_b, sent_b)
            ev = encode_image_batch(params, pixel_b, cat_b)
            batch = BatchEmbeddings(er, ev, labels_b)
            if config.triplet_variant == "hard":
                l_tri = triplet_loss_batch(batch, config.weights, config.mining)
            else:
                l_tri = triplet_loss_batch_all(batch, config.weights)
            l_ca_r, l_ca_v, l_ca = category_alignment_loss(
                classify(params, er), classify(params, ev), labels_b
            )
            l_da = alignment_loss(batch, params)
            loss = total_loss(l_tri, l_ca, l_da, config.weights)
            for tensor in named.values():
                tensor.zero_grad()
            loss.backward()
            t_enc += 1
            partition_step(enc_named, t_enc)
            sums["l_tri"] += l_tri.item()
            sums["l_ca_r"] += l_ca_r.item()
            sums["l_ca_v"] += l_ca_v.item()
            sums["l_da"] += l_da.item()

        nb = len(batches)
        trace.append(
            EpochStats(
                epoch=epoch,
                l_tri=sums["l_tri"] / nb,
                l_ca_r=sums["l_ca_r"] / nb,
                l_ca_v=sums["l_ca_v"] / nb,
                l_da=sums["l_da"] / nb,
                l_d=d_sums["l_d"] / n_disc if n_disc else float("nan"),
                penalty=d_sums["penalty"] / n_disc if n_disc else float("nan"),
            )
        )

    checkpoint = Checkpoint(
        params={k: t.data.copy() for k, t in named.items()},
        m={k: a.copy() for k, a in moments.m.items()},
        v={k: a.copy() for k, a in moments.v.items()},
        epoch=config.epochs,
        t_enc=t_enc,
        t_disc=t_disc,
        rng_state=master.bit_generator.state,
        config=config,
    )
    return checkpoint, trace


def params_from_checkpoint(ckpt: Checkpoint) -> ModelParams:
    """Materialize ModelParams tensors from checkpoint arrays."""
    params = ModelParams.initialize(ckpt.config.embed, np.random.default_rng(0))
    for name, tensor in params.named().items():
        if ckpt.params[name].shape != tensor.data.shape:
            raise DimensionMismatch(f"checkpoint tensor {name} has wrong shape")
        tensor.data[...] = ckpt.params[name]
    return params


# --- checkpoint file format ---------------------------------------------------


def write_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    """One JSON header line, then float64 matrix blocks (params, then Adam
    moments m and v) in the header's name order."""
    names = list(ckpt.params)
    header = {
        "version": CHECKPOINT_VERSION,
        "epoch": ckpt.epoch,
        "t_enc": ckpt.t_enc,
        "t_disc": ckpt.t_disc,
        "rng_state": ckpt.rng_state,
        "config": config_to_dict(ckpt.config),
        "names": names,
        "shapes": {k: list(ckpt.params[k].shape) for k in names},
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for group in (ckpt.params, ckpt.m, ckpt.v):
            for name in names:
                arr = group[name]
                matio.write_block(fh, arr.reshape(1, arr.size), float64=True)


def read_checkpoint(path: str | Path) -> Checkpoint:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedRecord(f"{path}: invalid checkpoint header") from exc
        if header.get("version") != CHECKPOINT_VERSION:
            raise MalformedRecord(f"{path}: unsupported checkpoint version")
        names = header["names"]
        shapes = {k: tuple(v) for k, v in header["shapes"].items()}
        groups = []
        for _ in range(3):
            group = {}
            for name in names:
                arr = matio.read_block(fh)
                group[name] = arr.reshape(shapes[name])
            groups.append(group)
    rng_state = header["rng_state"]
    return Checkpoint(
        params=groups[0],
        m=groups[1],
        v=groups[2],
        epoch=header["epoch"],
        t_enc=header["t_enc"],
        t_disc=header["t_disc"],
        rng_state=rng_state,
        config=config_from_dict(header["config"]),
    )
