"""Gloss-attention translation toolkit.

Thin python surface over the C++ core: the attention kernels, the
evaluation metrics, synthetic corpus generation, the single-head benchmark
and the translator checkpoint round trip.
"""

from ._gaslt import (
    Translator,
    Vocabulary,
    asd,
    bleu,
    cad,
    embedding_similarity,
    generate_corpus,
    gloss_attention,
    rouge_l,
    rouge_l_corpus,
    run_bench,
    self_attention,
)

__version__ = "0.1.0"

__all__ = [
    "Translator",
    "Vocabulary",
    "asd",
    "bleu",
    "cad",
    "embedding_similarity",
    "generate_corpus",
    "gloss_attention",
    "rouge_l",
    "rouge_l_corpus",
    "run_bench",
    "self_attention",
    "__version__",
]
