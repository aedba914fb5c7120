"""Optional keyword-extraction capability for the bridge.

A deterministic frequency/length ranker: stand-in for heavier extractor
models when the primary toolkit asks the bridge for keywords instead of
using its built-in centroid ranker.
"""

from __future__ import annotations

import re
from collections import Counter

_WORD_RE = re.compile(r"[a-z0-9']+")

_STOP = frozenset(
    "a an and are as at be but by for from had has have he her his i if in is it its "
    "me my no nor not of on or our she so that the their them they this to was we were "
    "what when who will with you your".split()
)


def extract_keywords(text: str, max_k: int = 5) -> list[tuple[str, float]]:
    """Rank content words by frequency, then length, then alphabetically.

    Relevance is the word's share of content-word occurrences; the
    ranking is fully deterministic for a fixed text.
    """
    words = [w for w in _WORD_RE.findall(text.lower()) if w not in _STOP and len(w) > 2]
    if not words:
        return []
    counts = Counter(words)
    total = sum(counts.values())
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], -len(kv[0]), kv[0]))
    return [(w, c / total) for w, c in ranked[:max_k]]
