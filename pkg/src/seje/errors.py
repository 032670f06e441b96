"""Exception taxonomy shared across the package.

Every error raised on a contract violation derives from :class:`SejeError`,
so callers (and the CLI) can catch one base class and map it to a clean
nonzero exit instead of a traceback.
"""

from __future__ import annotations


class SejeError(Exception):
    """Base class for all contract violations raised by this package."""


# --- corpus / file formats ---------------------------------------------------


class MalformedRecord(SejeError):
    """A serialized record (JSONL line, binary block, score line) is invalid."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DanglingReference(SejeError):
    """A manifest entry references a recipe or image id that does not exist."""


class DimensionMismatch(SejeError):
    """Feature rows disagree in width, or a matrix payload has the wrong size."""


class InvalidSpec(SejeError):
    """A generation/config spec has out-of-range or inconsistent fields."""


# --- word vectors ------------------------------------------------------------


class EmptyCorpus(SejeError):
    """No tokens survived to train on."""


class VocabularyTooSmall(SejeError):
    """Fewer than two vocabulary entries after min-count filtering."""


class RaggedRow(SejeError):
    """A text-format vector row has the wrong number of columns."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NonNumericField(SejeError):
    """A field that must parse as a number does not."""


# --- term features -----------------------------------------------------------


class EmptyRecipeTerms(SejeError):
    """A recipe contributed an empty term list where terms are required."""


class NoTerms(SejeError):
    """The whole collection has no terms at all."""


class UnknownRecipe(SejeError):
    """An external score line references a recipe id outside the corpus."""


class NonNumericScore(SejeError):
    """An external score value does not parse as a float."""


# --- category assignment -----------------------------------------------------


class MissingImageCategory(SejeError):
    """Step-4 fallback needs an image top-1 category that was not provided."""


# --- autodiff / numerics -----------------------------------------------------


class ShapeMismatch(SejeError):
    """Operands have incompatible shapes for the requested op."""


class NonFiniteValue(SejeError):
    """A NaN or infinity appeared in data, gradients, or parameters."""


class NormalizationDegenerate(SejeError):
    """Attempted to l2-normalize a vector with norm below tolerance."""


# --- batching / training -----------------------------------------------------


class BatchTooSmall(SejeError):
    """An operation needs at least two batch elements."""


class LabelOutOfRange(SejeError):
    """A class label falls outside [0, n_classes)."""


class DatasetTooSmall(SejeError):
    """Not enough examples to form a single full batch."""


# --- evaluation --------------------------------------------------------------


class SubsetTooLarge(SejeError):
    """Requested evaluation subset exceeds the candidate pool."""


class KeywordNotFound(SejeError):
    """No title matches a keyword in a vector-arithmetic expression."""
