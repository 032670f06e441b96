"""Recipe key-term extraction and term-significance rating.

Extraction is lexicon-driven: ingredient lines are scanned with greedy
longest-match against an entity lexicon, a pluggable verifier can reject
spans, and rejected spans are rescanned against a corpus-level entity set
(recovery). Utensils and actions are matched token-wise in the title and
instructions after ingredient tokens are removed.

Rating offers TF-IDF, TextRank over a global co-occurrence graph, and an
external score file; all three produce per-recipe normalized TermWeights.
"""

from __future__ import annotations

import re
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Recipe
from .errors import (
    EmptyRecipeTerms,
    MalformedRecord,
    NonNumericScore,
    NoTerms,
    UnknownRecipe,
)

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")

TERM_KINDS = ("ingredient", "utensil", "action")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumerics; drops empty tokens."""
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def _entry_tokens(entry: str) -> tuple[str, ...]:
    return tuple(tokenize(entry.replace("_", " ")))


@dataclass
class Lexicons:
    """Entity/utensil/action wordlists driving extraction."""

    ingredient_entities: set[tuple[str, ...]]
    utensil_nouns: set[str]
    action_verbs: set[str]

    @classmethod
    def from_files(cls, ingredients_path, utensils_path, actions_path) -> "Lexicons":
        def lines(path) -> list[str]:
            return [ln.strip().lower() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]

        return cls(
            ingredient_entities={_entry_tokens(e) for e in lines(ingredients_path)},
            utensil_nouns={e for e in lines(utensils_path)},
            action_verbs={e for e in lines(actions_path)},
        )


@dataclass(frozen=True)
class KeyTerm:
    surface: str  # underscore-joined
    kind: str
    recovered: bool = False

    def __post_init__(self):
        if not self.surface:
            raise ValueError("KeyTerm surface must be non-empty")
        if self.kind not in TERM_KINDS:
            raise ValueError(f"unknown term kind {self.kind!r}")
        if self.recovered and self.kind != "ingredient":
            raise ValueError("recovered=True is only valid for ingredient terms")


@dataclass
class TermWeights:
    """Nonnegative per-surface significance weights for one recipe."""

    weights: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for surface, w in self.weights.items():
            if w < 0:
                raise ValueError(f"negative weight for {surface!r}")


def _normalized(raw: dict[str, float]) -> TermWeights:
    """Normalize to sum 1; all-zero maps fall back to uniform weights."""
    if not raw:
        return TermWeights({})
    total = sum(raw.values())
    if total <= 0:
        u = 1.0 / len(raw)
        return TermWeights({t: u for t in raw})
    return TermWeights({t: w / total for t, w in raw.items()})


# --- extraction ---------------------------------------------------------------


def extract_key_terms(
    recipe: Recipe,
    lex: Lexicons,
    verifier: Callable[[tuple[str, ...]], bool] | None = None,
    global_entities: set[tuple[str, ...]] | None = None,
) -> list[KeyTerm]:
    """Extract ingredient/utensil/action key terms from one recipe.

    Ingredient lines are scanned left-to-right with greedy longest-match
    against lex.ingredient_entities. A span rejected by the verifier is
    rescanned for its longest contiguous sub-span present in
    global_entities (the whole span included, leftmost on ties) and, if
    found, emitted with recovered=True. Duplicate (surface, kind) emissions
    keep the first occurrence.
    """
    if verifier is None:
        verifier = lambda span: True  # noqa: E731 - default accepts everything
    if global_entities is None:
        global_entities = set()

    max_len = max((len(e) for e in lex.ingredient_entities), default=1)
    out: list[KeyTerm] = []
    seen: set[tuple[str, str]] = set()

    def emit(surface: str, kind: str, recovered: bool = False) -> None:
        key = (surface, kind)
        if key not in seen:
            seen.add(key)
            out.append(KeyTerm(surface, kind, recovered))

    for line in recipe.ingredient_lines:
        tokens = tokenize(line)
        i = 0
        while i < len(tokens):
            span = None
            for length in range(min(max_len, len(tokens) - i), 0, -1):
                cand = tuple(tokens[i : i + length])
                if cand in lex.ingredient_entities:
                    span = cand
                    break
            if span is None:
                i += 1
                continue
            if verifier(span):
                emit("_".join(span), "ingredient")
            else:
                rec = _recover(span, global_entities)
                if rec is not None:
                    emit("_".join(rec), "ingredient", recovered=True)
            i += len(span)

    ingredient_tokens = {tok for s, kind in seen if kind == "ingredient" for tok in s.split("_")}
    free_tokens = tokenize(recipe.title)
    for sentence in recipe.instruction_sentences:
        free_tokens.extend(tokenize(sentence))
    for tok in free_tokens:
        if tok in ingredient_tokens:
            continue
        if tok in lex.utensil_nouns:
            emit(tok, "utensil")
        if tok in lex.action_verbs:
            emit(tok, "action")
    return out


def _recover(
    span: tuple[str, ...], global_entities: set[tuple[str, ...]]
) -> tuple[str, ...] | None:
    for length in range(len(span), 0, -1):
        for start in range(0, len(span) - length + 1):
            sub = span[start : start + length]
            if sub in global_entities:
                return sub
    return None


# --- rating -------------------------------------------------------------------


def tfidf_weights(all_recipe_terms: list[list[str]]) -> list[TermWeights]:
    """Per-recipe TF-IDF weights: tf = count/len, idf = ln(N/df), normalized."""
    n = len(all_recipe_terms)
    df: dict[str, int] = {}
    for idx, terms in enumerate(all_recipe_terms):
        if not terms:
            raise EmptyRecipeTerms(f"recipe index {idx} has no terms")
        for t in set(terms):
            df[t] = df.get(t, 0) + 1
    out = []
    for terms in all_recipe_terms:
        counts: dict[str, int] = {}
        for t in terms:
            counts[t] = counts.get(t, 0) + 1
        size = len(terms)
        raw = {t: (c / size) * np.log(n / df[t]) for t, c in counts.items()}
        out.append(_normalized(raw))
    return out


def _textrank_iterate(
    weights: np.ndarray, damping: float, tol: float, max_iters: int
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Weighted PageRank iteration from all-ones; returns scores and history."""
    n = weights.shape[0]
    out_strength = weights.sum(axis=1)
    norm = np.where(out_strength > 0, out_strength, 1.0)
    m = weights / norm[np.newaxis, :]  # m[i, j] = w_ij / out_strength_j
    scores = np.ones(n)
    history = [scores.copy()]
    for _ in range(max_iters):
        new = (1.0 - damping) + damping * (m @ scores)
        history.append(new.copy())
        if np.abs(new - scores).sum() < tol:
            scores = new
            break
        scores = new
    return scores, history


def _cooccurrence(
    all_recipe_terms: list[list[str]], window: int
) -> tuple[list[str], np.ndarray]:
    nodes = sorted({t for terms in all_recipe_terms for t in terms})
    if not nodes:
        raise NoTerms("no terms in any recipe")
    index = {t: i for i, t in enumerate(nodes)}
    w = np.zeros((len(nodes), len(nodes)))
    for terms in all_recipe_terms:
        for i in range(len(terms)):
            for j in range(i + 1, min(i + window, len(terms))):
                a, b = index[terms[i]], index[terms[j]]
                if a == b:
                    continue
                w[a, b] += 1.0
                w[b, a] += 1.0
    return nodes, w


def textrank_scores(
    all_recipe_terms: list[list[str]],
    window: int = 4,
    damping: float = 0.85,
    tol: float = 1e-6,
    max_iters: int = 100,
) -> dict[str, float]:
    """Global TextRank scores over the corpus co-occurrence graph.

    Edges connect terms within `window` positions inside one recipe (never
    across recipes), weighted by co-occurrence count.
    """
    if window < 2:
        raise ValueError("window must be >= 2")
    if not (0.0 < damping < 1.0):
        raise ValueError("damping must be in (0, 1)")
    nodes, w = _cooccurrence(all_recipe_terms, window)
    scores, _ = _textrank_iterate(w, damping, tol, max_iters)
    return {t: float(s) for t, s in zip(nodes, scores)}

def textrank_weights(
    all_recipe_terms: list[list[str]],
    window: int = 4,
    damping: float = 0.85,
    tol: float = 1e-6,
    max_iters: int = 100,
) -> list[TermWeights]:
    """Global scores restricted to each recipe's terms and normalized."""
    scores = textrank_scores(all_recipe_terms, window, damping, tol, max_iters)
    out = []
    for idx, terms in enumerate(all_recipe_terms):
        if not terms:
            raise EmptyRecipeTerms(f"recipe index {idx} has no terms")
        out.append(_normalized({t: scores[t] for t in set(terms)}))
    return out


def external_term_scores(path, recipe_ids: Iterable[str]) -> list[TermWeights]:
    """Ingest "recipe_id term score" lines into per-recipe weights.

    Negative scores are clamped to 0 before normalization. Recipes without
    any scored line get empty TermWeights. Lines naming a recipe outside
    recipe_ids raise UnknownRecipe.
    """
    recipe_ids = list(recipe_ids)
    known = set(recipe_ids)
    raw: dict[str, dict[str, float]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 3:
                raise MalformedRecord(
                    f"expected 'recipe_id term score', got {len(fields)} fields", line=lineno
                )
            rid, term, score_text = fields
            if rid not in known:
                raise UnknownRecipe(rid)
            try:
                score = float(score_text)
            except ValueError as exc:
                raise NonNumericScore(f"line {lineno}: {score_text!r}") from exc
            raw.setdefault(rid, {})[term] = max(score, 0.0)
    return [_normalized(raw.get(rid, {})) for rid in recipe_ids]


def filter_terms(tw: TermWeights, threshold: float) -> TermWeights:
    """Drop terms below threshold and renormalize; keep original if all drop."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    kept = {t: w for t, w in tw.weights.items() if w >= threshold}
    if not kept:
        return TermWeights(dict(tw.weights))
    return _normalized(kept)


def weighted_term_feature(
    terms: list[KeyTerm], tw: TermWeights, wv
) -> tuple[np.ndarray, bool]:
    """Significance-weighted sum of in-vocabulary term vectors.

    Out-of-vocabulary terms are skipped and the remaining weights
    renormalized; returns (zero vector, False) when nothing is in vocab.
    """
    surfaces: list[str] = []
    seen: set[str] = set()
    for term in terms:
        if term.surface not in seen:
            seen.add(term.surface)
            surfaces.append(term.surface)
    kept = [s for s in surfaces if s in wv]
    if not kept:
        return np.zeros(wv.d_w), False
    weights = np.array([tw.weights.get(s, 0.0) for s in kept])
    total = weights.sum()
    if total <= 0:
        weights = np.full(len(kept), 1.0 / len(kept))
    else:
        weights = weights / total
    feature = np.zeros(wv.d_w)
    for s, w in zip(kept, weights):
        feature += w * wv.lookup(s)
    return feature, True
