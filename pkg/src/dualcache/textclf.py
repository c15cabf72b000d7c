"""Zero-shot classifier matrices assembled from prompt-template embeddings.

The engine never encodes text itself; it averages per-template C x N
embedding matrices produced by the exporter, restricts them to a channel
subset, and re-normalizes. Template choice is data, not code: two
negative-template flavors are in circulation and both are supported.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TemplateCountMismatch
from .store import EmbeddingMatrix, l2_normalize
from .channels import restrict_channels

DEFAULT_POSITIVE_TEMPLATES = ("a class of {class}",)
DEFAULT_NEGATIVE_TEMPLATES = ("a photo of {class}", "background of {class}")
ALT_NEGATIVE_TEMPLATES = ("a class of no {class}",)


@dataclass(frozen=True)
class TextClassifier:
    """C x dim matrix of unit-norm per-class text embeddings."""

    matrix: EmbeddingMatrix
    polarity: str = "positive"
    templates: tuple[str, ...] = ()

    @property
    def class_count(self) -> int:
        return self.matrix.rows

    @property
    def dim(self) -> int:
        return self.matrix.dim


def build_classifier(per_template, idx, polarity: str = "positive",
                     templates: tuple[str, ...] = ()) -> TextClassifier:
    """Average template embeddings per class, restrict to idx, re-normalize.

    All template matrices must share shape C x N; averaging happens in
    the full space so the channel subset sees the ensembled direction.
    """
    mats = list(per_template)
    if not mats:
        raise TemplateCountMismatch("need at least one template embedding matrix")
    c, n = mats[0].rows, mats[0].dim
    for m in mats[1:]:
        if m.rows != c or m.dim != n:
            raise TemplateCountMismatch(
                f"template matrices disagree: {m.rows}x{m.dim} vs {c}x{n}"
            )
    mean = np.mean([m.data.astype(np.float64) for m in mats], axis=0)
    averaged = EmbeddingMatrix(data=mean.astype(np.float32), normalized=False)
    restricted = l2_normalize(restrict_channels(averaged, idx))
    return TextClassifier(matrix=restricted, polarity=polarity,
                          templates=tuple(templates))
