"""Candidate ranking: cosine similarity between caption and query embeddings.

The winning pair is the argmax over candidates; ties break to the lowest
index so selection is deterministic and follows generation order.
"""

import math
from typing import Sequence

from .errors import DimMismatch, EmptyKeywords, MugcatError, ZeroVector
from .model import CandidatePair, Embedding, KeywordSequence, SelectionResult


def build_query(keywords: KeywordSequence | Sequence[str]) -> str:
    """Query sentence: accepted keywords, lowercase, space-joined."""
    words = keywords.keywords if isinstance(keywords, KeywordSequence) else tuple(keywords)
    if not words:
        raise EmptyKeywords("no accepted keywords to build a query from")
    return " ".join(w.lower() for w in words)


def cosine(u: Embedding, v: Embedding) -> float:
    if u.dim != v.dim:
        raise DimMismatch(f"embedding dims differ: {u.dim} vs {v.dim}")
    dot = math.fsum(a * b for a, b in zip(u.vector, v.vector))
    nu = math.sqrt(math.fsum(a * a for a in u.vector))
    nv = math.sqrt(math.fsum(b * b for b in v.vector))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine undefined for zero vector")
    # dot products can exceed the unit interval by ulps
    return max(-1.0, min(1.0, dot / (nu * nv)))


def select(candidates: Sequence[CandidatePair], query_embedding: Embedding) -> SelectionResult:
    """Scores every candidate against the query and picks the argmax pair."""
    if not candidates:
        raise EmptyKeywords("select requires at least one candidate")
    scores = []
    for i, cand in enumerate(candidates):
        if cand.caption_embedding is None:
            raise MugcatError(f"candidate {i} has no caption embedding")
        try:
            scores.append(cosine(cand.caption_embedding, query_embedding))
        except (DimMismatch, ZeroVector) as e:
            raise type(e)(f"candidate {i}: {e}")
    best = max(scores)
    idx = min(i for i, s in enumerate(scores) if s == best)
    return SelectionResult(
        selected_index=idx,
        selected_image=candidates[idx].image.image_id,
        selected_caption=candidates[idx].caption.text,
        scores=scores,
    )
