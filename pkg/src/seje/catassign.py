"""Four-step category assignment for recipe-image pairs.

Step 1 matches curated labels in the title; step 2 matches frequent title
bigrams; step 3 repeats both over ingredient and instruction text; step 4
falls back to the image classifier's top-1 label. Every pair ends up with
exactly one (label, step) record.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import PairManifest, Recipe
from .errors import MissingImageCategory
from .textfeat import tokenize
from .wordvec import WordVectors

LABEL_SOURCES = ("curated", "bigram")


@dataclass
class CategorySpace:
    """Ordered label universe with per-label provenance."""

    labels: list[str]
    source: dict[str, str]

    def __post_init__(self):
        if not self.labels:
            raise ValueError("CategorySpace must contain at least one label")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("CategorySpace labels must be unique")
        for label in self.labels:
            if self.source.get(label) not in LABEL_SOURCES:
                raise ValueError(f"label {label!r} has invalid source")
        self._index = {label: i for i, label in enumerate(self.labels)}

    def index(self, label: str) -> int:
        return self._index[label]

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class CategoryAssignment:
    """pair_id -> (label, step in 1..4)."""

    by_pair: dict[str, tuple[str, int]]

    def label_of(self, pair_id: str) -> str:
        return self.by_pair[pair_id][0]

    def step_of(self, pair_id: str) -> int:
        return self.by_pair[pair_id][1]

    def __len__(self) -> int:
        return len(self.by_pair)


def _contains_seq(tokens: list[str], seq: tuple[str, ...]) -> bool:
    n = len(seq)
    return any(tuple(tokens[i : i + n]) == seq for i in range(len(tokens) - n + 1))


def assign_categories(
    recipes: list[Recipe],
    manifest: PairManifest,
    curated_labels: list[str],
    bigram_min_freq: int = 2,
    image_topcats: dict[str, str] | None = None,
) -> tuple[CategorySpace, CategoryAssignment]:
    """Assign one category label per pair; pair ids are recipe ids.

    Curated candidates are tried longest first (ties lexicographic); retained
    bigrams highest-frequency first (ties lexicographic). Raises
    MissingImageCategory when step 4 is reached without a top-1 label.
    """
    image_topcats = image_topcats or {}
    by_recipe = {r.id: r for r in recipes}
    pair_ids: list[str] = []
    seen_pairs: set[str] = set()
    for entry in manifest:
        if entry.recipe_id not in seen_pairs:
            seen_pairs.add(entry.recipe_id)
            pair_ids.append(entry.recipe_id)

    curated = sorted(set(curated_labels), key=lambda lb: (-len(lb.split("_")), lb))
    curated_seqs = [(lb, tuple(lb.split("_"))) for lb in curated]

    counts: dict[tuple[str, str], int] = {}
    for pid in pair_ids:
        toks = tokenize(by_recipe[pid].title)
        for a, b in zip(toks, toks[1:]):
            counts[(a, b)] = counts.get((a, b), 0) + 1
    bigrams = sorted(
        (bg for bg, c in counts.items() if c >= bigram_min_freq),
        key=lambda bg: (-counts[bg], bg),
    )

    assignment: dict[str, tuple[str, int]] = {}
    assigned_bigrams: list[str] = []

    def match_curated(token_lists: list[list[str]]) -> str | None:
        for label, seq in curated_seqs:
            if any(_contains_seq(toks, seq) for toks in token_lists):
                return label
        return None

    def match_bigram(token_lists: list[list[str]]) -> str | None:
        for bg in bigrams:
            if any(_contains_seq(toks, bg) for toks in token_lists):
                return "_".join(bg)
        return None

    for pid in pair_ids:
        title_tokens = [tokenize(by_recipe[pid].title)]
        label = match_curated(title_tokens)
        if label is not None:
            assignment[pid] = (label, 1)
            continue
        label = match_bigram(title_tokens)
        if label is not None:
            assignment[pid] = (label, 2)
            if label not in assigned_bigrams:
                assigned_bigrams.append(label)
            continue
        recipe = by_recipe[pid]
        body = [tokenize(ln) for ln in recipe.ingredient_lines] + [
            tokenize(s) for s in recipe.instruction_sentences
        ]
        label = match_curated(body)
        if label is not None:
            assignment[pid] = (label, 3)
            continue
        label = match_bigram(body)
        if label is not None:
            assignment[pid] = (label, 3)
            if label not in assigned_bigrams:
                assigned_bigrams.append(label)
            continue
        if pid not in image_topcats:
            raise MissingImageCategory(pid)
        assignment[pid] = (image_topcats[pid], 4)

    labels: list[str] = []
    source: dict[str, str] = {}
    for lb in curated_labels:
        if lb not in source:
            labels.append(lb)
            source[lb] = "curated"
    for lb in assigned_bigrams:
        if lb not in source:
            labels.append(lb)
            source[lb] = "bigram"
    for pid in pair_ids:
        lb, step = assignment[pid]
        if step == 4 and lb not in source:
            labels.append(lb)
            source[lb] = "curated"
    return CategorySpace(labels, source), CategoryAssignment(assignment)


def category_embedding(label: str, wv: WordVectors) -> tuple[np.ndarray, bool]:
    """Vector for a category label.

    The joined token has precedence when present in the vocabulary;
    otherwise the mean of in-vocab underscore-split tokens; otherwise
    (zero vector, False).
    """
    if label in wv:
        return np.array(wv.lookup(label)), True
    parts = [p for p in label.split("_") if p in wv]
    if not parts:
        return np.zeros(wv.d_w), False
    total = np.zeros(wv.d_w)
    for p in parts:
        total += wv.lookup(p)
    return total / len(parts), True
