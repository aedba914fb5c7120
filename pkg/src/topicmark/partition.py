"""Vocabulary partitioning into topic-aligned green lists.

Every token is assigned to exactly one of K lists: by cosine similarity
against the topic embeddings when the best similarity clears the
threshold, otherwise by a deterministic round-robin sweep over the
residual set in ascending vocabulary order. Tokens without a usable
embedding (including subwords whose stripped surface is unknown) are
treated as residual so no token is ever dropped.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingTable, Vocabulary
from .errors import FingerprintMismatchError, PartitionError, PartitionFormatError

PARTITION_FORMAT = "topicmark-partition"
PARTITION_VERSION = 1

PROVENANCE_SIMILARITY = 0
PROVENANCE_ROUND_ROBIN = 1

# Default operating configuration: four generalized topics and tau=0.7.
DEFAULT_TOPIC_NAMES = ["animals", "technology", "sports", "medicine"]
DEFAULT_TAU = 0.7


@dataclass
class TopicSet:
    """Ordered topic inventory: names with matching embedding rows."""

    names: list[str]
    embeddings: np.ndarray  # shape (K, dim)

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        if len(self.names) < 2:
            raise PartitionError(f"need at least 2 topics, got {len(self.names)}")
        if len(set(self.names)) != len(self.names):
            raise PartitionError("topic names must be unique")
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] != len(self.names):
            raise PartitionError(
                f"embeddings shape {self.embeddings.shape} does not match {len(self.names)} topics"
            )
        norms = np.linalg.norm(self.embeddings, axis=1)
        if np.any(norms == 0.0):
            bad = self.names[int(np.argmin(norms))]
            raise PartitionError(f"topic {bad!r} has a zero embedding")

    @property
    def K(self) -> int:
        return len(self.names)

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    @classmethod
    def from_names(cls, names: list[str], table: EmbeddingTable) -> "TopicSet":
        rows = []
        for name in names:
            vec = table.lookup(name)
            if vec is None:
                raise PartitionError(f"no embedding for topic {name!r}")
            rows.append(vec)
        return cls(list(names), np.vstack(rows))


class TopicPartition:
    """K disjoint token-index lists covering the whole vocabulary."""

    def __init__(
        self,
        topic_names: list[str],
        topic_embeddings: np.ndarray,
        lists: list[np.ndarray],
        provenance: np.ndarray,
        tau: float,
        vocab_fingerprint: str,
        vocab_size: int,
        subword_marker: str | None = None,
    ):
        self.topic_names = list(topic_names)
        self.topic_embeddings = np.asarray(topic_embeddings, dtype=np.float64)
        self.lists = [np.asarray(lst, dtype=np.int64) for lst in lists]
        self.provenance = np.asarray(provenance, dtype=np.uint8)
        self.tau = float(tau)
        self.vocab_fingerprint = vocab_fingerprint
        self.vocab_size = int(vocab_size)
        self.subword_marker = subword_marker
        self._assignments: np.ndarray | None = None
        self._memberships: dict[int, np.ndarray] = {}
        self._validate()

    def _validate(self) -> None:
        if len(self.lists) != len(self.topic_names):
            raise PartitionError("list count does not match topic count")
        if self.provenance.shape != (self.vocab_size,):
            raise PartitionError("provenance length does not match vocabulary size")
        total = sum(len(lst) for lst in self.lists)
        if total != self.vocab_size:
            raise PartitionError(
                f"lists cover {total} tokens but vocabulary has {self.vocab_size}"
            )
        seen = np.zeros(self.vocab_size, dtype=bool)
        for lst in self.lists:
            if len(lst) and (lst.min() < 0 or lst.max() >= self.vocab_size):
                raise PartitionError("list contains out-of-range token index")
            if np.any(seen[lst]):
                raise PartitionError("lists are not pairwise disjoint")
            seen[lst] = True
        if not np.all(seen):
            raise PartitionError("lists do not cover the vocabulary")

    @property
    def K(self) -> int:
        return len(self.lists)

    @property
    def gamma(self) -> np.ndarray:
        """Per-list expected green fraction |G_i| / |V|."""
        sizes = np.array([len(lst) for lst in self.lists], dtype=np.float64)
        return sizes / float(self.vocab_size)

    def sizes(self) -> list[int]:
        return [len(lst) for lst in self.lists]

    def residual_count(self) -> int:
        return int(np.sum(self.provenance == PROVENANCE_ROUND_ROBIN))

    def list_assignments(self) -> np.ndarray:
        """Token index -> list index, cached."""
        if self._assignments is None:
            a = np.empty(self.vocab_size, dtype=np.int32)
            for i, lst in enumerate(self.lists):
                a[lst] = i
            self._assignments = a
        return self._assignments

    def membership(self, list_index: int) -> np.ndarray:
        """Boolean mask over the vocabulary for one green list, cached."""
        mask = self._memberships.get(list_index)
        if mask is None:
            mask = np.zeros(self.vocab_size, dtype=bool)
            mask[self.lists[list_index]] = True
            self._memberships[list_index] = mask
        return mask

    def topic_set(self) -> TopicSet:
        return TopicSet(self.topic_names, self.topic_embeddings)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TopicPartition):
            return NotImplemented
        return (
            self.topic_names == other.topic_names
            and np.array_equal(self.topic_embeddings, other.topic_embeddings)
            and len(self.lists) == len(other.lists)
            and all(np.array_equal(a, b) for a, b in zip(self.lists, other.lists))
            and np.array_equal(self.provenance, other.provenance)
            and self.tau == other.tau
            and self.vocab_fingerprint == other.vocab_fingerprint
            and self.vocab_size == other.vocab_size
            and self.subword_marker == other.subword_marker
        )


def _token_vector(token: str, table: EmbeddingTable, marker: str | None) -> np.ndarray | None:
    vec = table.lookup(token)
    if vec is None and marker and token.startswith(marker) and len(token) > len(marker):
        vec = table.lookup(token[len(marker):])
    return vec


def build_partition(
    vocab: Vocabulary,
    table: EmbeddingTable,
    topics: TopicSet,
    tau: float,
    subword_marker: str | None = None,
) -> TopicPartition:
    """Assign every vocabulary token to one topic list.

    Tokens whose best cosine similarity reaches ``tau`` go to the argmax
    topic (ties to the lowest topic index); everything else joins the
    residual set, which is dealt out in ascending vocabulary order, the
    j-th residual token landing in list ``j mod K``.
    """
    if len(vocab) == 0:
        raise PartitionError("vocabulary is empty")
    if not (0.0 < tau <= 1.0):
        raise PartitionError(f"tau must lie in (0, 1], got {tau}")
    if topics.dim != table.dim:
        raise PartitionError(
            f"topic embedding dim {topics.dim} does not match table dim {table.dim}"
        )
    if topics.K > 1 and np.all(topics.embeddings == topics.embeddings[0]):
        warnings.warn("all topic embeddings are identical; partition will be degenerate")

    K = topics.K
    topic_unit = topics.embeddings / np.linalg.norm(topics.embeddings, axis=1, keepdims=True)

    embeddable_idx: list[int] = []
    rows: list[np.ndarray] = []
    for i, token in enumerate(vocab.tokens):
        vec = _token_vector(token, table, subword_marker)
        if vec is not None:
            embeddable_idx.append(i)
            rows.append(vec)

    lists: list[list[int]] = [[] for _ in range(K)]
    provenance = np.full(len(vocab), PROVENANCE_ROUND_ROBIN, dtype=np.uint8)
    assigned = np.zeros(len(vocab), dtype=bool)

    if rows:
        mat = np.vstack(rows)
        mat = mat / np.linalg.norm(mat, axis=1, keepdims=True)
        sims = mat @ topic_unit.T  # (M, K)
        best = np.argmax(sims, axis=1)  # first max wins on ties
        best_sim = sims[np.arange(len(rows)), best]
        for row, tok_idx in enumerate(embeddable_idx):
            if best_sim[row] >= tau:
                lists[int(best[row])].append(tok_idx)
                provenance[tok_idx] = PROVENANCE_SIMILARITY
                assigned[tok_idx] = True

    counter = 0
    for tok_idx in range(len(vocab)):
        if not assigned[tok_idx]:
            lists[counter % K].append(tok_idx)
            counter += 1

    return TopicPartition(
        topic_names=topics.names,
        topic_embeddings=topics.embeddings,
        lists=[np.array(lst, dtype=np.int64) for lst in lists],
        provenance=provenance,
        tau=tau,
        vocab_fingerprint=vocab.fingerprint(),
        vocab_size=len(vocab),
        subword_marker=subword_marker,
    )


@dataclass
class PartitionStats:
    sizes: list[int]
    gamma: list[float]
    residual_count: int
    residual_fraction: float


def partition_stats(p: TopicPartition) -> PartitionStats:
    """Per-list sizes and expected fractions plus the round-robin share."""
    sizes = p.sizes()
    residual = p.residual_count()
    return PartitionStats(
        sizes=sizes,
        gamma=[s / p.vocab_size for s in sizes],
        residual_count=residual,
        residual_fraction=residual / p.vocab_size,
    )


def save_partition(p: TopicPartition, sink) -> None:
    """Write a partition as a versioned, self-describing JSON container."""
    doc = {
        "format": PARTITION_FORMAT,
        "version": PARTITION_VERSION,
        "tau": p.tau,
        "subword_marker": p.subword_marker,
        "vocab_fingerprint": p.vocab_fingerprint,
        "vocab_size": p.vocab_size,
        "topic_names": p.topic_names,
        "topic_embeddings": [[float(x) for x in row] for row in p.topic_embeddings],
        "gamma": [float(g) for g in p.gamma],
        "lists": [[int(i) for i in lst] for lst in p.lists],
        "provenance": "".join(str(int(b)) for b in p.provenance),
    }
    own = isinstance(sink, (str, Path))
    f = open(sink, "w", encoding="utf-8") if own else sink
    try:
        json.dump(doc, f, sort_keys=True)
        f.write("\n")
    finally:
        if own:
            f.close()


def load_partition(source, vocab: Vocabulary | None = None) -> TopicPartition:
    """Read a partition file; verify the fingerprint when a vocabulary is supplied."""
    own = isinstance(source, (str, Path))
    f = open(source, "r", encoding="utf-8") if own else source
    try:
        text = f.read()
    finally:
        if own:
            f.close()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PartitionFormatError(f"malformed partition file: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(doc, dict) or doc.get("format") != PARTITION_FORMAT:
        raise PartitionFormatError("not a topicmark partition file")
    if doc.get("version") != PARTITION_VERSION:
        raise PartitionFormatError(f"unsupported partition version {doc.get('version')!r}")
    try:
        part = TopicPartition(
            topic_names=doc["topic_names"],
            topic_embeddings=np.array(doc["topic_embeddings"], dtype=np.float64),
            lists=[np.array(lst, dtype=np.int64) for lst in doc["lists"]],
            provenance=np.frombuffer(doc["provenance"].encode("ascii"), dtype=np.uint8) - ord("0"),
            tau=doc["tau"],
            vocab_fingerprint=doc["vocab_fingerprint"],
            vocab_size=doc["vocab_size"],
            subword_marker=doc.get("subword_marker"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise PartitionFormatError(f"invalid partition contents: {exc}") from exc
    stored_gamma = np.array(doc["gamma"], dtype=np.float64)
    if not np.array_equal(stored_gamma, part.gamma):
        raise PartitionFormatError("stored gamma disagrees with list sizes")
    if vocab is not None:
        found = vocab.fingerprint()
        if found != part.vocab_fingerprint:
            raise FingerprintMismatchError(expected=part.vocab_fingerprint, found=found)
    return part
