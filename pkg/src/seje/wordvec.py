"""CBOW word vectors with negative sampling, plus word2vec-text-format I/O.

The trainer predicts a center word from the mean of its in-window context
vectors, updating via negative sampling (unigram distribution raised to
0.75). Multiword entities are expected to be underscore-joined upstream.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import EmptyCorpus, NonNumericField, RaggedRow, VocabularyTooSmall
from .numerics import stable_sigmoid

_NS_TABLE_POWER = 0.75
_LR_FLOOR_FRACTION = 0.01  # linear decay ends at lr_start/100


@dataclass(frozen=True)
class CbowConfig:
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    lr_start: float = 0.025
    min_count: int = 1
    seed: int = 0
    dim: int = 64

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.lr_start <= 0:
            raise ValueError("lr_start must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")


@dataclass
class WordVectors:
    """Token -> row mapping over a dense |vocab| x D_w float64 matrix."""

    vocab: dict[str, int]
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.vocab):
            raise RaggedRow(
                f"matrix shape {self.matrix.shape} inconsistent with vocab of {len(self.vocab)}"
            )
        if not np.all(np.isfinite(self.matrix)):
            raise NonNumericField("word vector matrix contains non-finite values")

    @property
    def d_w(self) -> int:
        return self.matrix.shape[1]

    def __contains__(self, token: str) -> bool:
        return token in self.vocab

    def lookup(self, token: str) -> np.ndarray:
        """The stored row for a token, bit-for-bit (a read-only view)."""
        row = self.matrix[self.vocab[token]]
        row.flags.writeable = False
        return row

    def save_word2vec_text(self, path) -> None:
        """Write "count dim" header then one "token v1 ... vD" line per row.

        Values are written with repr(), which round-trips float64 exactly.
        """
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self.vocab)} {self.d_w}\n")
            for token, idx in self.vocab.items():
                fh.write(token + " " + " ".join(repr(v) for v in self.matrix[idx]) + "\n")


def _build_vocab(token_streams: list[list[str]], min_count: int) -> tuple[dict[str, int], np.ndarray]:
    counts: dict[str, int] = {}
    total = 0
    for stream in token_streams:
        for tok in stream:
            counts[tok] = counts.get(tok, 0) + 1
            total += 1
    if total == 0:
        raise EmptyCorpus("no tokens in any stream")
    kept = [(tok, c) for tok, c in counts.items() if c >= min_count]
    if len(kept) < 2:
        raise VocabularyTooSmall(
            f"{len(kept)} tokens with count >= {min_count}; need at least 2"
        )
    kept.sort(key=lambda tc: (-tc[1], tc[0]))
    vocab = {tok: i for i, (tok, _) in enumerate(kept)}
    freqs = np.array([c for _, c in kept], dtype=np.float64)
    return vocab, freqs


def train_cbow(token_streams: list[list[str]], cfg: CbowConfig) -> WordVectors:
    """Train CBOW vectors; deterministic for a fixed config."""
    wv, _ = train_cbow_with_loss(token_streams, cfg)
    return wv


def train_cbow_with_loss(
    token_streams: list[list[str]], cfg: CbowConfig
) -> tuple[WordVectors, list[float]]:
    """As train_cbow, but also return the negative-sampling log loss per epoch."""
    vocab, freqs = _build_vocab(token_streams, cfg.min_count)
    n_vocab = len(vocab)
    rng = np.random.default_rng(cfg.seed)

    # word2vec-style init: input vectors uniform in +-0.5/dim, outputs zero.
    w_in = (rng.random((n_vocab, cfg.dim)) - 0.5) / cfg.dim
    w_out = np.zeros((n_vocab, cfg.dim))

    noise = freqs**_NS_TABLE_POWER
    noise_cum = np.cumsum(noise)
    noise_total = noise_cum[-1]

    # Streams reduced to in-vocab indices; window positions refer to the
    # reduced stream, as in the reference word2vec implementation.
    reduced = [
        np.array([vocab[t] for t in stream if t in vocab], dtype=np.intp)
        for stream in token_streams
    ]
    n_centers = sum(len(s) for s in reduced if len(s) >= 2)
    total_steps = max(1, n_centers * cfg.epochs)

    def draw_negative(center: int) -> int:
        for _ in range(100):
            j = int(np.searchsorted(noise_cum, rng.random() * noise_total, side="right"))
            if j != center:
                return j
        return (center + 1) % n_vocab

    epoch_losses: list[float] = []
    step = 0
    for _ in range(cfg.epochs):
        loss = 0.0
        n_terms = 0
        for stream in reduced:
            n = len(stream)
            if n < 2:
                continue
            for pos in range(n):
                lr = cfg.lr_start * (1.0 - (1.0 - _LR_FLOOR_FRACTION) * step / total_steps)
                step += 1
                lo = max(0, pos - cfg.window)
                hi = min(n, pos + cfg.window + 1)
                context = np.concatenate([stream[lo:pos], stream[pos + 1 : hi]])
                if len(context) == 0:
                    continue
                center = int(stream[pos])
                h = w_in[context].mean(axis=0)

                targets = np.empty(1 + cfg.negatives, dtype=np.intp)
                targets[0] = center
                for k in range(cfg.negatives):
                    targets[1 + k] = draw_negative(center)
                labels = np.zeros(1 + cfg.negatives)
                labels[0] = 1.0

                u = w_out[targets]
                scores = u @ h
                p = stable_sigmoid(scores)
                # NS log loss: -log sigma(s_pos) - sum log sigma(-s_neg)
                loss -= float(np.log(max(p[0], 1e-12)))
                loss -= float(np.log(np.maximum(1.0 - p[1:], 1e-12)).sum())
                n_terms += 1

                g = (labels - p) * lr
                grad_h = g @ u  # uses pre-update output vectors
                w_out[targets] += np.outer(g, h)
                w_in[context] += grad_h / len(context)
        epoch_losses.append(loss / max(1, n_terms))
    return WordVectors(vocab=vocab, matrix=w_in), epoch_losses


def load_word2vec_text(path) -> tuple[WordVectors, int]:
    """Parse word2vec text format; returns (vectors, duplicate_token_count).

    An optional first line "count dim" (two nonnegative ints) is honored and
    validated. Duplicate tokens keep the last occurrence.
    """
    rows: dict[str, list[float]] = {}
    duplicates = 0
    width: int | None = None
    header: tuple[int, int] | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if lineno == 1 and len(fields) == 2:
                try:
                    count, dim = int(fields[0]), int(fields[1])
                except ValueError:
                    count, dim = -1, -1
                if count >= 0 and dim >= 0:
                    header = (count, dim)
                    width = dim
                    continue
            token, *values = fields
            if width is None:
                width = len(values)
            if len(values) != width:
                raise RaggedRow(
                    f"row has {len(values)} values, expected {width}", line=lineno
                )
            try:
                vec = [float(v) for v in values]
            except ValueError as exc:
                raise NonNumericField(f"line {lineno}: {exc}") from exc
            if token in rows:
                duplicates += 1
            rows[token] = vec
    if not rows:
        raise EmptyCorpus(f"{path}: no vector rows")
    if header is not None and header[0] != len(rows) + duplicates:
        raise RaggedRow(
            f"header declares {header[0]} rows but file has {len(rows) + duplicates}"
        )
    if duplicates:
        warnings.warn(f"{duplicates} duplicate tokens; last occurrence kept", stacklevel=2)
    vocab = {tok: i for i, tok in enumerate(rows)}
    matrix = np.array(list(rows.values()), dtype=np.float64)
    return WordVectors(vocab=vocab, matrix=matrix), duplicates


def sentence_vector(sentence_tokens: list[str], wv: WordVectors) -> tuple[np.ndarray, bool]:
    """Mean of in-vocabulary token vectors; (zero vector, False) if none.

    Rows are summed in sorted-row order, so the result is exactly invariant
    under token permutation.
    """
    idxs = sorted(wv.vocab[t] for t in sentence_tokens if t in wv.vocab)
    if not idxs:
        return np.zeros(wv.d_w), False
    total = np.zeros(wv.d_w)
    for i in idxs:
        total += wv.matrix[i]
    return total / len(idxs), True
