"""Topic inference: keyword extraction and mapping onto a predefined topic set.

The extractor is a deterministic centroid-similarity ranker: content words
are scored by cosine against the document centroid. Mapping onto the topic
inventory is hierarchical: an exact (case-insensitive) name match wins,
otherwise either the mean keyword embedding or k-means centroids are
compared against the topic embeddings.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources as importlib_resources
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingTable, _ascii_lower, cosine
from .errors import TopicUndeterminableError
from .partition import TopicSet

METHOD_DIRECT = "direct-match"
METHOD_EMBED_AVG = "embedding-average"
METHOD_KMEANS = "kmeans"

_WORD_RE = re.compile(r"[a-z0-9']+")

_default_stopwords: set[str] | None = None


def default_stopwords() -> set[str]:
    """Stop words shipped with the package (one per line, ``#`` comments)."""
    global _default_stopwords
    if _default_stopwords is None:
        text = importlib_resources.files("topicmark.data").joinpath("stopwords.txt").read_text("utf-8")
        _default_stopwords = _parse_stopword_text(text)
    return _default_stopwords


def _parse_stopword_text(text: str) -> set[str]:
    words = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            words.add(line.lower())
    return words


def load_stopwords(path: str | Path) -> set[str]:
    with open(path, "r", encoding="utf-8") as f:
        return _parse_stopword_text(f.read())


@dataclass
class DetectedTopics:
    """Ranked keywords with their embeddings; relevance is non-increasing."""

    keywords: list[tuple[str, float]]
    embeddings: np.ndarray  # shape (m, dim); empty -> shape (0, 0)

    def __post_init__(self):
        scores = [rel for _, rel in self.keywords]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("keyword relevance must be non-increasing")
        if len(self.keywords) != len(self.embeddings):
            raise ValueError("keywords and embeddings are misaligned")

    def __len__(self) -> int:
        return len(self.keywords)

    def terms(self) -> list[str]:
        return [term for term, _ in self.keywords]

    @classmethod
    def empty(cls) -> "DetectedTopics":
        return cls([], np.zeros((0, 0)))


@dataclass
class TopicChoice:
    """Outcome of mapping detected keywords onto the topic inventory."""

    topic_index: int
    method: str
    score: float
    fallback_used: bool = False


def extract_keywords(
    text: str,
    table: EmbeddingTable,
    max_k: int = 5,
    stop_words: set[str] | None = None,
) -> DetectedTopics:
    """Rank content words of ``text`` by similarity to the document centroid.

    Words are lowercased and stop-listed; each remaining embeddable
    occurrence contributes to the centroid. Unique candidates are returned
    in descending score order (ties broken lexicographically), truncated
    to ``max_k``. Returns an empty result when nothing is embeddable.
    """
    if max_k <= 0:
        raise ValueError(f"max_k must be positive, got {max_k}")
    if not text.strip():
        raise ValueError("text is empty after normalization")
    stops = default_stopwords() if stop_words is None else stop_words

    occurrences: list[np.ndarray] = []
    candidates: dict[str, np.ndarray] = {}
    for word in _WORD_RE.findall(_ascii_lower(text)):
        if word in stops:
            continue
        vec = table.lookup(word)
        if vec is None:
            continue
        occurrences.append(vec)
        candidates.setdefault(word, vec)

    if not occurrences:
        return DetectedTopics.empty()

    centroid = np.mean(np.vstack(occurrences), axis=0)
    if not np.any(centroid):
        # Degenerate cancellation; fall back to uniform relevance.
        scored = [(w, 0.0) for w in candidates]
    else:
        scored = [(w, cosine(vec, centroid)) for w, vec in candidates.items()]
    scored.sort(key=lambda kv: (-kv[1], kv[0]))
    top = scored[:max_k]
    return DetectedTopics(
        keywords=top,
        embeddings=np.vstack([candidates[w] for w, _ in top]),
    )


def kmeans_cluster(points, c: int, max_iter: int = 50) -> np.ndarray:
    """Deterministic Lloyd's k-means.

    Initialization is a farthest-point traversal starting from index 0;
    assignment ties go to the lowest centroid index; an empty cluster
    steals the point farthest from its current centroid. Stops when
    assignments stabilize or after ``max_iter`` sweeps.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or len(pts) == 0:
        raise ValueError("points must be a non-empty 2-D array")
    if not (1 <= c <= len(pts)):
        raise ValueError(f"cluster count {c} out of range for {len(pts)} points")
    if max_iter <= 0:
        raise ValueError("max_iter must be positive")

    n = len(pts)
    chosen = [0]
    dist_to_nearest = np.linalg.norm(pts - pts[0], axis=1)
    while len(chosen) < c:
        nxt = int(np.argmax(dist_to_nearest))  # lowest index on ties
        chosen.append(nxt)
        dist_to_nearest = np.minimum(dist_to_nearest, np.linalg.norm(pts - pts[nxt], axis=1))
    centroids = pts[chosen].copy()

    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        dists = np.linalg.norm(pts[:, None, :] - centroids[None, :, :], axis=2)
        new_labels = np.argmin(dists, axis=1)  # first min wins on ties

        for k in range(c):
            if not np.any(new_labels == k):
                point_dist = dists[np.arange(n), new_labels]
                # Only points in clusters of size >= 2 may be stolen.
                counts = np.bincount(new_labels, minlength=c)
                stealable = counts[new_labels] >= 2
                point_dist = np.where(stealable, point_dist, -np.inf)
                victim = int(np.argmax(point_dist))
                new_labels[victim] = k

        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for k in range(c):
            centroids[k] = pts[labels == k].mean(axis=0)
    return centroids


def choose_topic(
    detected: DetectedTopics,
    topics: TopicSet,
    method: str = "auto",
    fallback_index: int | None = None,
) -> TopicChoice:
    """Map detected keywords onto the topic inventory.

    A keyword equal (case-insensitively) to a topic name is a direct
    match. Otherwise ``embedding-average`` compares the mean keyword
    embedding with each topic, and ``kmeans`` compares min(3, m) cluster
    centroids. ``auto`` uses kmeans with 3 or more keywords, embedding
    averaging below that.
    """
    if method not in ("auto", METHOD_EMBED_AVG, METHOD_KMEANS):
        raise ValueError(f"unknown inference method {method!r}")

    if len(detected) == 0:
        if fallback_index is None:
            raise TopicUndeterminableError("no keywords detected and no fallback topic provided")
        if not (0 <= fallback_index < topics.K):
            raise ValueError(f"fallback topic index {fallback_index} out of range")
        return TopicChoice(fallback_index, METHOD_EMBED_AVG, 0.0, fallback_used=True)

    name_lookup = {_ascii_lower(name): i for i, name in enumerate(topics.names)}
    for term, _rel in detected.keywords:
        hit = name_lookup.get(_ascii_lower(term))
        if hit is not None:
            return TopicChoice(hit, METHOD_DIRECT, 1.0)

    if method == "auto":
        method = METHOD_KMEANS if len(detected) >= 3 else METHOD_EMBED_AVG

    if method == METHOD_EMBED_AVG:
        mean_vec = np.mean(detected.embeddings, axis=0)
        sims = [cosine(mean_vec, topics.embeddings[j]) for j in range(topics.K)]
    else:
        c = min(3, len(detected))
        centroids = kmeans_cluster(detected.embeddings, c)
        sims = [
            max(cosine(centroids[k], topics.embeddings[j]) for k in range(len(centroids)))
            for j in range(topics.K)
        ]
    best = int(np.argmax(sims))
    return TopicChoice(best, method, float(sims[best]))
