"""Data model, corpus file I/O, and synthetic dataset generation.

A corpus is three files:

* ``recipes.jsonl`` — one JSON object per line with keys
  ``id, title, ingredients[], instructions[]``.
* a pixel-feature matrix in the binary layout of :mod:`seje.matio`
  (float32 payload), with two sibling files derived from its path:
  ``<stem>.ids.txt`` (one image id per matrix row) and ``<stem>.cats.bin``
  (per-image category-probability matrix, same row order).
* ``manifest.jsonl`` — one JSON object per line with keys
  ``recipe_id, image_id, split``.

Pixel features are stored as float32 and widened to float64 at load, so a
corpus that has been saved once round-trips exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import matio
from .errors import DanglingReference, DimensionMismatch, InvalidSpec, MalformedRecord

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class Recipe:
    """One raw text record: title, ingredient lines, instruction sentences."""

    id: str
    title: str
    ingredient_lines: tuple[str, ...]
    instruction_sentences: tuple[str, ...]

    def __post_init__(self):
        if not self.id:
            raise MalformedRecord("recipe id must be non-empty")
        if not self.title:
            raise MalformedRecord(f"recipe {self.id!r}: title must be non-empty")
        if len(self.ingredient_lines) == 0:
            raise MalformedRecord(f"recipe {self.id!r}: at least one ingredient line required")


@dataclass
class ImageFeatures:
    """Precomputed pixel features and category probabilities for one image."""

    id: str
    pixel_feature: np.ndarray
    category_probs: np.ndarray

    def __post_init__(self):
        self.pixel_feature = np.asarray(self.pixel_feature, dtype=np.float64)
        self.category_probs = np.asarray(self.category_probs, dtype=np.float64)
        if not self.id:
            raise MalformedRecord("image id must be non-empty")
        if self.pixel_feature.ndim != 1 or self.category_probs.ndim != 1:
            raise DimensionMismatch(f"image {self.id!r}: features must be 1-D vectors")
        if not np.all(np.isfinite(self.pixel_feature)):
            raise MalformedRecord(f"image {self.id!r}: non-finite pixel feature")
        if np.any(self.category_probs < 0) or abs(self.category_probs.sum() - 1.0) > 1e-6:
            raise MalformedRecord(
                f"image {self.id!r}: category_probs must be nonnegative and sum to 1"
            )

    def __eq__(self, other):
        if not isinstance(other, ImageFeatures):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.pixel_feature, other.pixel_feature)
            and np.array_equal(self.category_probs, other.category_probs)
        )


@dataclass(frozen=True)
class PairEntry:
    recipe_id: str
    image_id: str
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise MalformedRecord(
                f"pair ({self.recipe_id!r}, {self.image_id!r}): invalid split {self.split!r}"
            )


@dataclass
class PairManifest:
    """Recipe-image pairings with their split membership.

    Each (recipe_id, image_id) pair appears in exactly one split; the pair id
    used downstream is the recipe id (one image per pair).
    """

    entries: list[PairEntry] = field(default_factory=list)

    def __post_init__(self):
        seen: dict[tuple[str, str], str] = {}
        for e in self.entries:
            key = (e.recipe_id, e.image_id)
            if key in seen:
                word = "split" if seen[key] == e.split else "multiple splits"
                raise MalformedRecord(f"pair {key!r} appears twice ({word})")
            seen[key] = e.split

    def for_split(self, split: str) -> list[PairEntry]:
        return [e for e in self.entries if e.split == split]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for the synthetic desk-scale dataset generator."""

    n_pairs: int
    n_categories: int
    latent_dim: int = 32
    noise_sigma: float = 0.1
    seed: int = 0
    train_fraction: float = 2.0 / 3.0
    val_fraction: float = 0.0

    def __post_init__(self):
        if self.n_categories < 2:
            raise InvalidSpec("n_categories must be >= 2")
        if self.n_pairs < self.n_categories:
            raise InvalidSpec("n_pairs must be >= n_categories")
        if self.latent_dim < 2:
            raise InvalidSpec("latent_dim must be >= 2")
        if self.noise_sigma < 0:
            raise InvalidSpec("noise_sigma must be >= 0")
        if not (0.0 < self.train_fraction <= 1.0) or not (0.0 <= self.val_fraction < 1.0):
            raise InvalidSpec("fractions must satisfy 0 < train <= 1, 0 <= val < 1")
        if self.train_fraction + self.val_fraction > 1.0:
            raise InvalidSpec("train_fraction + val_fraction must be <= 1")


# --- loading -----------------------------------------------------------------


def _sidecar_paths(images_path: Path) -> tuple[Path, Path]:
    base = images_path.with_suffix("")
    return Path(f"{base}.ids.txt"), Path(f"{base}.cats.bin")


def load_corpus(
    recipes_path: str | Path,
    images_path: str | Path,
    manifest_path: str | Path,
) -> tuple[list[Recipe], list[ImageFeatures], PairManifest]:
    """Load and cross-validate a corpus from disk.

    Raises MalformedRecord (with a line number where applicable) on bad
    content, DanglingReference when the manifest cites an unknown id, and
    DimensionMismatch when feature matrices disagree on row counts.
    """
    recipes_path = Path(recipes_path)
    images_path = Path(images_path)
    manifest_path = Path(manifest_path)

    recipes: list[Recipe] = []
    recipe_ids: set[str] = set()
    with open(recipes_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"invalid JSON: {exc.msg}", line=lineno) from exc
            try:
                recipe = Recipe(
                    id=str(obj["id"]),
                    title=str(obj["title"]),
                    ingredient_lines=tuple(str(s) for s in obj["ingredients"]),
                    instruction_sentences=tuple(str(s) for s in obj["instructions"]),
                )
            except KeyError as exc:
                raise MalformedRecord(f"missing key {exc.args[0]!r}", line=lineno) from exc
            except MalformedRecord as exc:
                raise MalformedRecord(str(exc), line=lineno) from exc
            if recipe.id in recipe_ids:
                raise MalformedRecord(f"duplicate recipe id {recipe.id!r}", line=lineno)
            recipe_ids.add(recipe.id)
            recipes.append(recipe)

    ids_path, cats_path = _sidecar_paths(images_path)
    pixel = matio.read_matrix(images_path)
    cats = matio.read_matrix(cats_path)
    image_ids = [ln.strip() for ln in ids_path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if len(image_ids) != pixel.shape[0]:
        raise DimensionMismatch(
            f"{ids_path.name} lists {len(image_ids)} ids but matrix has {pixel.shape[0]} rows"
        )
    if cats.shape[0] != pixel.shape[0]:
        raise DimensionMismatch(
            f"category matrix has {cats.shape[0]} rows, pixel matrix {pixel.shape[0]}"
        )
    images: list[ImageFeatures] = []
    seen_img: set[str] = set()
    for row, img_id in enumerate(image_ids):
        if img_id in seen_img:
            raise MalformedRecord(f"duplicate image id {img_id!r}", line=row + 1)
        seen_img.add(img_id)
        try:
            images.append(ImageFeatures(id=img_id, pixel_feature=pixel[row], category_probs=cats[row]))
        except MalformedRecord as exc:
            raise MalformedRecord(str(exc), line=row + 1) from exc

    entries: list[PairEntry] = []
    with open(manifest_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                entry = PairEntry(
                    recipe_id=str(obj["recipe_id"]),
                    image_id=str(obj["image_id"]),
                    split=str(obj["split"]),
                )
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"invalid JSON: {exc.msg}", line=lineno) from exc
            except KeyError as exc:
                raise MalformedRecord(f"missing key {exc.args[0]!r}", line=lineno) from exc
            except MalformedRecord as exc:
                raise MalformedRecord(str(exc), line=lineno) from exc
            if entry.recipe_id not in recipe_ids:
                raise DanglingReference(entry.recipe_id)
            if entry.image_id not in seen_img:
                raise DanglingReference(entry.image_id)
            entries.append(entry)

    return recipes, images, PairManifest(entries)


def save_corpus(
    recipes: list[Recipe],
    images: list[ImageFeatures],
    manifest: PairManifest,
    out_dir: str | Path,
) -> tuple[Path, Path, Path]:
    """Write the three corpus files into out_dir; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    recipes_path = out_dir / "recipes.jsonl"
    with open(recipes_path, "w", encoding="utf-8") as fh:
        for r in recipes:
            fh.write(
                json.dumps(
                    {
                        "id": r.id,
                        "title": r.title,
                        "ingredients": list(r.ingredient_lines),
                        "instructions": list(r.instruction_sentences),
                    }
                )
                + "\n"
            )

    if images:
        widths = {img.pixel_feature.shape[0] for img in images}
        if len(widths) > 1:
            raise DimensionMismatch(f"pixel features have mixed widths {sorted(widths)}")
        cat_widths = {img.category_probs.shape[0] for img in images}
        if len(cat_widths) > 1:
            raise DimensionMismatch(f"category probs have mixed widths {sorted(cat_widths)}")
    images_path = out_dir / "features.bin"
    pixel = np.stack([img.pixel_feature for img in images]) if images else np.zeros((0, 0))
    cats = np.stack([img.category_probs for img in images]) if images else np.zeros((0, 0))
    matio.write_matrix(images_path, pixel)
    ids_path, cats_path = _sidecar_paths(images_path)
    ids_path.write_text("".join(img.id + "\n" for img in images), encoding="utf-8")
    matio.write_matrix(cats_path, cats)

    manifest_path = out_dir / "manifest.jsonl"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        for e in manifest:
            fh.write(
                json.dumps({"recipe_id": e.recipe_id, "image_id": e.image_id, "split": e.split})
                + "\n"
            )
    return recipes_path, images_path, manifest_path


# --- synthetic generation ----------------------------------------------------

_QUANTITIES = ("1 cup", "2 cups", "1 tsp", "2 tbsp", "half cup", "a pinch of")
_UTENSILS = ("oven", "pan", "bowl", "skillet", "pot", "griddle")
_ACTIONS = ("blend", "stir", "bake", "mix", "chop", "simmer", "fold", "roast")
_COMMON = ("salt", "water", "oil", "sugar", "flour", "butter", "pepper", "cream")
_TITLE_NOUNS = ("platter", "feast", "supper", "delight")

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"

_N_DETAILS = 32
_DETAILS_PER_PAIR = 3
_N_TITLE_FILLERS = 40
#: Pixel-space magnitude of one detail direction, as a multiple of noise_sigma.
#: Zero noise therefore yields exactly the category prototype.
_DETAIL_SCALE = 3.0


def _pseudoword(rng: np.random.Generator, used: set[str]) -> str:
    while True:
        word = "".join(
            _CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(3)
        )
        if word not in used:
            used.add(word)
            return word


@dataclass(frozen=True)
class SyntheticWorld:
    """Derived vocabulary and latent structure shared by generated pairs."""

    category_names: tuple[str, ...]
    signature_terms: tuple[tuple[str, ...], ...]  # per category; first entry is "a b" phrase
    detail_terms: tuple[str, ...]
    title_fillers: tuple[str, ...]
    utensil_nouns: tuple[str, ...]
    action_verbs: tuple[str, ...]
    common_terms: tuple[str, ...]
    prototypes: np.ndarray  # n_categories x latent_dim
    detail_directions: np.ndarray  # n_details x latent_dim, unit rows

    def ingredient_entities(self) -> set[tuple[str, ...]]:
        """All token sequences the extraction lexicon should recognize."""
        entities: set[tuple[str, ...]] = set()
        for name in self.category_names:
            entities.add((name,))
        for sig in self.signature_terms:
            entities.add(tuple(sig[0].split(" ")))
            for term in sig[1:]:
                entities.add((term,))
        for term in self.detail_terms + self.common_terms:
            entities.add((term,))
        return entities


def synthetic_world(spec: SyntheticSpec) -> SyntheticWorld:
    """Deterministic vocabulary/prototype construction for a spec."""
    rng = np.random.default_rng([spec.seed, 0])
    used: set[str] = set(_UTENSILS + _ACTIONS + _COMMON + _TITLE_NOUNS + _QUANTITIES)

    names = tuple(_pseudoword(rng, used) for _ in range(spec.n_categories))
    signatures = []
    for _ in range(spec.n_categories):
        phrase = f"{_pseudoword(rng, used)} {_pseudoword(rng, used)}"
        singles = tuple(_pseudoword(rng, used) for _ in range(4))
        signatures.append((phrase,) + singles)
    details = tuple(_pseudoword(rng, used) for _ in range(_N_DETAILS))
    fillers = tuple(_pseudoword(rng, used) for _ in range(_N_TITLE_FILLERS))

    prototypes = rng.standard_normal((spec.n_categories, spec.latent_dim))
    dirs = rng.standard_normal((_N_DETAILS, spec.latent_dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return SyntheticWorld(
        category_names=names,
        signature_terms=tuple(signatures),
        detail_terms=details,
        title_fillers=fillers,
        utensil_nouns=_UTENSILS,
        action_verbs=_ACTIONS,
        common_terms=_COMMON,
        prototypes=prototypes,
        detail_directions=dirs,
    )


def generate_synthetic(
    spec: SyntheticSpec,
) -> tuple[list[Recipe], list[ImageFeatures], PairManifest]:
    """Generate a corpus whose text and pixels share category and per-pair structure.

    Pairs are assigned categories round-robin. Each pair's pixel feature is
    its category prototype plus Gaussian noise plus a small sum of per-pair
    "detail" directions; the matching detail terms appear in the recipe's
    ingredient lines, so instance-level retrieval is learnable. Detail
    magnitude scales with noise_sigma, so noise_sigma=0 collapses every
    category onto its prototype exactly.
    """
    world = synthetic_world(spec)
    rng = np.random.default_rng([spec.seed, 1])
    detail_scale = _DETAIL_SCALE * spec.noise_sigma

    recipes: list[Recipe] = []
    images: list[ImageFeatures] = []
    categories: list[int] = []

    for i in range(spec.n_pairs):
        c = i % spec.n_categories
        categories.append(c)
        rid = f"s{i:05d}"
        name = world.category_names[c]
        sig = world.signature_terms[c]

        band = rng.random()  # <0.75 title, <0.90 ingredients-only, else image-only
        detail_idx = rng.choice(_N_DETAILS, size=_DETAILS_PER_PAIR, replace=False)
        filler_a, filler_b = (world.title_fillers[j] for j in rng.choice(_N_TITLE_FILLERS, size=2, replace=False))
        noun = _TITLE_NOUNS[rng.integers(len(_TITLE_NOUNS))]
        if band < 0.75:
            title = f"{filler_a} {name} {noun}"
        else:
            title = f"{filler_a} {filler_b} {noun}"

        def qty() -> str:
            return _QUANTITIES[rng.integers(len(_QUANTITIES))]

        lines = [f"{qty()} {sig[0]}"]
        for j in rng.choice(4, size=2, replace=False):
            lines.append(f"{qty()} {sig[1 + j]}")
        for j in detail_idx:
            lines.append(f"{qty()} {world.detail_terms[j]}")
        lines.append(f"{qty()} {_COMMON[rng.integers(len(_COMMON))]}")
        if band < 0.90:
            lines.append(f"2 cups {name}")

        act = _ACTIONS[rng.integers(len(_ACTIONS))]
        act2 = _ACTIONS[rng.integers(len(_ACTIONS))]
        utensil = _UTENSILS[rng.integers(len(_UTENSILS))]
        sentences = [
            f"{act} the {sig[1 + rng.integers(4)]} in the {utensil}",
            f"then {act2} until done",
        ]
        if band < 0.90:
            sentences.append(f"serve the {name} {noun} warm")

        pixel = world.prototypes[c] + spec.noise_sigma * rng.standard_normal(spec.latent_dim)
        pixel = pixel + detail_scale * world.detail_directions[detail_idx].sum(axis=0)
        probs = np.zeros(spec.n_categories)
        probs[c] = 1.0
        probs = probs + spec.noise_sigma * np.abs(rng.standard_normal(spec.n_categories))
        probs = probs / probs.sum()

        # Store at float32 precision so save/load round-trips are exact. The
        # probabilities additionally need their float64 sum within 1e-6 of 1
        # *after* the float32 cast, so nudge the largest entry.
        pixel32 = pixel.astype(np.float32).astype(np.float64)
        p32 = probs.astype(np.float32)
        for _ in range(4):
            resid = 1.0 - float(p32.astype(np.float64).sum())
            if abs(resid) <= 1e-9:
                break
            j = int(np.argmax(p32))
            p32[j] = np.float32(float(p32[j]) + resid)
        probs32 = p32.astype(np.float64)

        recipes.append(
            Recipe(
                id=rid,
                title=title,
                ingredient_lines=tuple(lines),
                instruction_sentences=tuple(sentences),
            )
        )
        images.append(ImageFeatures(id=rid, pixel_feature=pixel32, category_probs=probs32))

    per_cat: dict[int, list[int]] = {c: [] for c in range(spec.n_categories)}
    for i, c in enumerate(categories):
        per_cat[c].append(i)
    split_of = {}
    for c, idxs in per_cat.items():
        n = len(idxs)
        n_train = int(round(spec.train_fraction * n))
        n_val = int(round(spec.val_fraction * n))
        n_train = min(n_train, n)
        n_val = min(n_val, n - n_train)
        for pos, i in enumerate(idxs):
            if pos < n_train:
                split_of[i] = "train"
            elif pos < n_train + n_val:
                split_of[i] = "val"
            else:
                split_of[i] = "test"
    entries = [PairEntry(recipes[i].id, images[i].id, split_of[i]) for i in range(spec.n_pairs)]
    return recipes, images, PairManifest(entries)
