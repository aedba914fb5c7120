"""Watermark detection: the binomial z-statistic and three topic-selection schemes.

Strict matching infers one topic from the whole text, sliding-window
matching votes over fixed-size windows, and the max-z sweep scores the
text against every green list and keeps the largest statistic. All
schemes share the same z-score: (g - gamma*n) / sqrt(n*gamma*(1-gamma)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingTable, Vocabulary
from .errors import DetectionInputError, TopicUndeterminableError
from .inference import METHOD_EMBED_AVG, METHOD_KMEANS, choose_topic, extract_keywords
from .partition import TopicPartition

DEFAULT_THRESHOLD = 4.75
DEFAULT_MIN_TOKENS = 10
DEFAULT_WINDOW = 50

SCHEME_STRICT_EMBED = "strict-embed"
SCHEME_STRICT_KMEANS = "strict-kmeans"
SCHEME_SLIDING = "sliding"
SCHEME_MAX_Z = "max-z"


def z_score(g: int, n: int, gamma: float) -> float:
    """Standardized green-count deviation under the null green fraction ``gamma``."""
    if n <= 0:
        raise DetectionInputError("no scoreable tokens")
    if not (0.0 < gamma < 1.0):
        raise DetectionInputError(f"gamma must lie strictly inside (0, 1), got {gamma}")
    if not (0 <= g <= n):
        raise ValueError(f"green count {g} outside [0, {n}]")
    return (g - gamma * n) / math.sqrt(n * gamma * (1.0 - gamma))


@dataclass
class DetectionReport:
    scheme: str
    topic_index: int
    z: float
    g: int
    n: int
    gamma_used: float
    threshold: float
    verdict: bool
    per_window: list[tuple[int, int, float]] | None = None
    fallback_to_max_z: bool = False
    all_z: list[float] | None = None

    def to_dict(self) -> dict:
        d = {
            "scheme": self.scheme,
            "topic_index": self.topic_index,
            "z": self.z,
            "g": self.g,
            "n": self.n,
            "gamma_used": self.gamma_used,
            "threshold": self.threshold,
            "verdict": self.verdict,
        }
        if self.per_window is not None:
            d["per_window"] = [
                {"window": w, "topic": t, "z": z} for w, t, z in self.per_window
            ]
        if self.fallback_to_max_z:
            d["fallback_to_max_z"] = True
        if self.all_z is not None:
            d["all_z"] = self.all_z
        return d


def detokenize_for_inference(
    tokens: Sequence[int], vocab: Vocabulary, subword_marker: str | None = None
) -> str:
    """Join token surfaces with single spaces, merging marker-prefixed continuations."""
    pieces: list[str] = []
    for idx in tokens:
        i = int(idx)
        if not (0 <= i < len(vocab)):
            raise ValueError(f"token index {i} outside vocabulary of size {len(vocab)}")
        surface = vocab.tokens[i]
        if (
            subword_marker
            and surface.startswith(subword_marker)
            and len(surface) > len(subword_marker)
            and pieces
        ):
            pieces[-1] += surface[len(subword_marker):]
        else:
            pieces.append(surface)
    return " ".join(pieces)


def green_count(tokens: Sequence[int], partition: TopicPartition, list_index: int) -> int:
    """Number of tokens belonging to one green list."""
    if len(tokens) == 0:
        return 0
    mask = partition.membership(list_index)
    return int(np.sum(mask[np.asarray(tokens, dtype=np.int64)]))


def _scored(tokens: Sequence[int], prompt_len: int, min_tokens: int) -> list[int]:
    scored = list(tokens[prompt_len:])
    if len(scored) < min_tokens:
        raise DetectionInputError(
            f"text has {len(scored)} scoreable tokens, need at least {min_tokens}"
        )
    return scored


def _score_topic(
    scored: Sequence[int], partition: TopicPartition, topic: int, threshold: float
) -> tuple[int, float, float]:
    g = green_count(scored, partition, topic)
    gamma = float(partition.gamma[topic])
    z = z_score(g, len(scored), gamma)
    return g, z, gamma


def detect_max_z(
    tokens: Sequence[int],
    partition: TopicPartition,
    threshold: float = DEFAULT_THRESHOLD,
    min_tokens: int = DEFAULT_MIN_TOKENS,
    prompt_len: int = 0,
) -> DetectionReport:
    """Score the text against every green list; the watermark signal picks the topic."""
    scored = _scored(tokens, prompt_len, min_tokens)
    n = len(scored)
    token_arr = np.asarray(scored, dtype=np.int64)

    best_topic = -1
    best_z = -math.inf
    best_g = 0
    best_gamma = 0.0
    all_z: list[float] = []
    for i in range(partition.K):
        gamma = float(partition.gamma[i])
        if not (0.0 < gamma < 1.0):
            all_z.append(float("nan"))
            continue
        g = int(np.sum(partition.membership(i)[token_arr]))
        z = z_score(g, n, gamma)
        all_z.append(z)
        if z > best_z:
            best_topic, best_z, best_g, best_gamma = i, z, g, gamma
    if best_topic < 0:
        raise DetectionInputError("no list has a usable gamma; cannot score")

    return DetectionReport(
        scheme=SCHEME_MAX_Z,
        topic_index=best_topic,
        z=best_z,
        g=best_g,
        n=n,
        gamma_used=best_gamma,
        threshold=threshold,
        verdict=best_z > threshold,
        all_z=all_z,
    )


def detect_strict(
    tokens: Sequence[int],
    partition: TopicPartition,
    vocab: Vocabulary | None = None,
    table: EmbeddingTable | None = None,
    inference_method: str = METHOD_EMBED_AVG,
    threshold: float = DEFAULT_THRESHOLD,
    min_tokens: int = DEFAULT_MIN_TOKENS,
    prompt_len: int = 0,
    oracle_topic: int | None = None,
    max_keywords: int = 5,
    stop_words: set[str] | None = None,
) -> DetectionReport:
    """Infer one topic for the whole text and test its green list.

    With ``oracle_topic`` the inference step is skipped (the generation
    topic is assumed known). When keyword extraction finds nothing the
    detector falls back to the max-z sweep and flags the report instead
    of failing.
    """
    if inference_method not in (METHOD_EMBED_AVG, METHOD_KMEANS):
        raise ValueError(f"inference_method must be embedding-average or kmeans, got {inference_method!r}")
    scheme = SCHEME_STRICT_KMEANS if inference_method == METHOD_KMEANS else SCHEME_STRICT_EMBED
    scored = _scored(tokens, prompt_len, min_tokens)

    if oracle_topic is not None:
        if not (0 <= oracle_topic < partition.K):
            raise ValueError(f"oracle topic {oracle_topic} out of range for K={partition.K}")
        topic = oracle_topic
    else:
        if vocab is None or table is None:
            raise ValueError("vocab and table are required unless oracle_topic is given")
        text = detokenize_for_inference(scored, vocab, partition.subword_marker)
        detected = extract_keywords(text, table, max_k=max_keywords, stop_words=stop_words)
        try:
            choice = choose_topic(detected, partition.topic_set(), method=inference_method)
        except TopicUndeterminableError:
            fallback = detect_max_z(
                tokens, partition, threshold=threshold, min_tokens=min_tokens, prompt_len=prompt_len
            )
            fallback.scheme = scheme
            fallback.fallback_to_max_z = True
            return fallback
        topic = choice.topic_index

    g, z, gamma = _score_topic(scored, partition, topic, threshold)
    return DetectionReport(
        scheme=scheme,
        topic_index=topic,
        z=z,
        g=g,
        n=len(scored),
        gamma_used=gamma,
        threshold=threshold,
        verdict=z > threshold,
    )


def detect_sliding(
    tokens: Sequence[int],
    partition: TopicPartition,
    vocab: Vocabulary,
    table: EmbeddingTable,
    window_w: int = DEFAULT_WINDOW,
    threshold: float = DEFAULT_THRESHOLD,
    min_tokens: int = DEFAULT_MIN_TOKENS,
    prompt_len: int = 0,
    max_keywords: int = 5,
    stop_words: set[str] | None = None,
) -> DetectionReport:
    """Vote a topic over fixed-size windows, then score the whole text once.

    Each window is matched hierarchically with the adaptive fallback
    (embedding averaging below 3 keywords, k-means otherwise); the final
    topic is the majority vote with ties to the lowest index. The global
    z is computed under the voted topic; per-window topics and z values
    are reported for analysis.
    """
    if window_w <= 0:
        raise ValueError(f"window size must be positive, got {window_w}")
    scored = _scored(tokens, prompt_len, min_tokens)

    windows = [scored[i:i + window_w] for i in range(0, len(scored), window_w)]
    votes = np.zeros(partition.K, dtype=np.int64)
    per_window: list[tuple[int, int, float]] = []
    for w_idx, window in enumerate(windows):
        text = detokenize_for_inference(window, vocab, partition.subword_marker)
        detected = extract_keywords(text, table, max_k=max_keywords, stop_words=stop_words)
        try:
            choice = choose_topic(detected, partition.topic_set(), method="auto")
        except TopicUndeterminableError:
            continue
        votes[choice.topic_index] += 1
        _, wz, _ = _score_topic(window, partition, choice.topic_index, threshold)
        per_window.append((w_idx, choice.topic_index, wz))

    if not np.any(votes):
        fallback = detect_max_z(
            tokens, partition, threshold=threshold, min_tokens=min_tokens, prompt_len=prompt_len
        )
        fallback.scheme = SCHEME_SLIDING
        fallback.fallback_to_max_z = True
        fallback.per_window = []
        return fallback

    voted = int(np.argmax(votes))  # lowest topic index wins ties
    g, z, gamma = _score_topic(scored, partition, voted, threshold)
    return DetectionReport(
        scheme=SCHEME_SLIDING,
        topic_index=voted,
        z=z,
        g=g,
        n=len(scored),
        gamma_used=gamma,
        threshold=threshold,
        verdict=z > threshold,
        per_window=per_window,
    )
