"""Deterministic synthetic language worlds for desk-scale experiments.

Builds a vocabulary of topic-flavored content words plus function words,
hand-crafted embeddings whose cosine geometry aligns content words with
their topic axis, and a corpus generator with collocational structure:
function words chain into designated successors (peaked statistics)
while content slots draw from small mixed-topic clusters (flat within
the cluster). Everything is seeded, so worlds are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attacks import LexicalResources
from .embeddings import EmbeddingTable, Vocabulary
from .generation import make_rng
from .partition import TopicPartition, TopicSet, build_partition

TOPIC_NAMES = [
    "animals", "technology", "sports", "medicine",
    "politics", "entertainment", "education", "finance",
    "science", "law", "food", "travel",
    "environment", "religion", "fashion", "history",
    "art", "military", "gaming", "literature",
    "parenting", "space", "transportation", "psychology",
    "agriculture", "housing", "cryptocurrency", "architecture",
    "economics", "fitness", "relationships", "mythology",
]

N_FAMILIES = len(TOPIC_NAMES)
FUNCTION_AXES = 8

# Noise magnitudes cycle per content word; cos = 1/sqrt(1+m^2), so the
# first four clear tau=0.7 and the fifth falls to the residual pool.
NOISE_CYCLE = (0.25, 0.30, 0.35, 0.40, 1.10)

# Content slots draw uniformly from a small cluster keyed on the previous
# (content, function) pair. Keying on the pair keeps the walk from locking
# into green-rich cycles, and a large function-word inventory keeps even
# bigram backoff contexts narrow; flat contexts would let the logit bias
# capture outsized green mass on thin lists.
CLUSTER_SIZE = 4
CHAIN_FIDELITY = 0.95
SECOND_CHAIN_RATE = 0.05
TOPIC_NAME_RATE = 0.02


@dataclass
class SyntheticWorld:
    vocab: Vocabulary
    table: EmbeddingTable
    topic_names: list[str]
    content_ids: np.ndarray
    function_ids: np.ndarray
    topic_name_ids: np.ndarray
    content_perm: np.ndarray  # scrambled content ids, the cluster lookup order
    words_per_family: int
    seed: int

    @property
    def dim(self) -> int:
        return self.table.dim

    def topic_set(self, K: int) -> TopicSet:
        """The first K topics of the inventory."""
        if not (2 <= K <= N_FAMILIES):
            raise ValueError(f"K must lie in [2, {N_FAMILIES}], got {K}")
        names = self.topic_names[:K]
        return TopicSet.from_names(names, self.table)

    def partition(self, K: int, tau: float = 0.7) -> TopicPartition:
        return build_partition(self.vocab, self.table, self.topic_set(K), tau)

    def _designated_function(self, content_id: int) -> int:
        return int(self.function_ids[(content_id * 13 + 5) % len(self.function_ids)])

    def _function_chain(self, function_id: int) -> int:
        pos = int(np.where(self.function_ids == function_id)[0][0])
        return int(self.function_ids[(pos * 7 + 3) % len(self.function_ids)])

    def _cluster(self, prev_content: int, function_id: int) -> np.ndarray:
        # Slices of a scrambled content order, so cluster membership is
        # uncorrelated with family blocks and round-robin index cycling.
        base = (prev_content * 131 + function_id * 257 + 29) % len(self.content_perm)
        idx = [(base + j) % len(self.content_perm) for j in range(CLUSTER_SIZE)]
        return self.content_perm[idx]

    def corpus_ids(self, n_tokens: int, seed: int) -> list[int]:
        """Token-id stream with collocational function chains and clustered content slots."""
        rng = make_rng(seed)
        out: list[int] = []
        n_fn = len(self.function_ids)
        while len(out) < n_tokens:
            family = int(rng.integers(N_FAMILIES))
            sentence_len = int(rng.integers(12, 21))
            fn = int(self.function_ids[rng.integers(n_fn)])
            prev_content = int(self.content_perm[rng.integers(len(self.content_perm))])
            out.append(fn)
            for _ in range(sentence_len):
                # A run of 1-3 content words between function words keeps
                # the content share of tokens near two thirds.
                for _run in range(int(rng.integers(1, 4))):
                    if rng.random() < TOPIC_NAME_RATE:
                        content = int(self.topic_name_ids[family])
                    else:
                        cluster = self._cluster(prev_content, fn)
                        content = int(cluster[rng.integers(CLUSTER_SIZE)])
                    out.append(content)
                    prev_content = content
                if rng.random() < CHAIN_FIDELITY:
                    fn = self._designated_function(prev_content)
                else:
                    fn = int(self.function_ids[rng.integers(n_fn)])
                out.append(fn)
                if rng.random() < SECOND_CHAIN_RATE:
                    fn2 = self._function_chain(fn)
                    out.append(fn2)
                    fn = fn2
        return out[:n_tokens]

    def corpus_text(self, n_tokens: int, seed: int) -> str:
        return " ".join(self.vocab.tokens[i] for i in self.corpus_ids(n_tokens, seed))

    def prompt_ids(self, family: int, seed: int, length: int = 16) -> list[int]:
        """Family-flavored prompt ending in a designated (content, function) context.

        Mentions the family's topic name so keyword extraction maps the
        prompt straight onto the intended topic.
        """
        if not (0 <= family < N_FAMILIES):
            raise ValueError(f"family {family} out of range")
        rng = make_rng(seed)
        start = family * self.words_per_family
        fam_ids = self.content_ids[start:start + self.words_per_family]
        out: list[int] = [int(self.topic_name_ids[family])]
        content = int(fam_ids[rng.integers(len(fam_ids))])
        while len(out) < length - 1:
            out.append(content)
            out.append(self._designated_function(content))
            content = int(fam_ids[rng.integers(len(fam_ids))])
        out.append(content)
        out.append(self._designated_function(content))
        return out

    def resources(self) -> LexicalResources:
        """Attack resources matching this world: function words are the stop/filler pool."""
        function_words = [self.vocab.tokens[i] for i in self.function_ids]
        content_words = [self.vocab.tokens[i] for i in self.content_ids]
        return LexicalResources(
            high_freq_words=function_words[:20],
            synonym_table={},
            pos_lexicon={w: {"N"} for w in content_words},
            stop_words=set(function_words),
        )


def make_world(
    words_per_family: int = 44, n_function: int = 672, seed: int = 83
) -> SyntheticWorld:
    """Construct a reproducible synthetic vocabulary, embeddings, and topology."""
    rng = make_rng(seed)
    dim = N_FAMILIES + FUNCTION_AXES

    tokens: list[str] = []
    entries: dict[str, np.ndarray] = {}

    topic_name_ids = []
    for f, name in enumerate(TOPIC_NAMES):
        vec = np.zeros(dim)
        vec[f] = 1.0
        topic_name_ids.append(len(tokens))
        tokens.append(name)
        entries[name] = vec

    content_ids = []
    for f, name in enumerate(TOPIC_NAMES):
        for i in range(words_per_family):
            word = f"{name}{i:03d}"
            vec = np.zeros(dim)
            vec[f] = 1.0
            noise = rng.standard_normal(FUNCTION_AXES)
            noise /= np.linalg.norm(noise)
            vec[N_FAMILIES:] = NOISE_CYCLE[i % len(NOISE_CYCLE)] * noise
            content_ids.append(len(tokens))
            tokens.append(word)
            entries[word] = vec

    function_ids = []
    for i in range(n_function):
        word = f"fn{i:03d}"
        vec = np.zeros(dim)
        noise = rng.standard_normal(FUNCTION_AXES)
        noise /= np.linalg.norm(noise)
        vec[N_FAMILIES:] = noise
        function_ids.append(len(tokens))
        tokens.append(word)
        entries[word] = vec

    content_arr = np.array(content_ids, dtype=np.int64)
    return SyntheticWorld(
        vocab=Vocabulary(tokens),
        table=EmbeddingTable(dim, entries),
        topic_names=list(TOPIC_NAMES),
        content_ids=content_arr,
        function_ids=np.array(function_ids, dtype=np.int64),
        topic_name_ids=np.array(topic_name_ids, dtype=np.int64),
        content_perm=rng.permutation(content_arr),
        words_per_family=words_per_family,
        seed=seed,
    )


def balanced_partition(vocab_size: int, K: int = 4) -> tuple[TopicPartition, Vocabulary]:
    """Partition whose lists are pure round-robin (every token residual).

    Uses placeholder tokens with no embeddings, so the builder's own
    residual path produces exactly balanced lists when K divides the
    vocabulary size.
    """
    vocab = Vocabulary([f"tok{i:06d}" for i in range(vocab_size)])
    names = [f"axis{k}" for k in range(K)]
    entries = {}
    for k, name in enumerate(names):
        vec = np.zeros(K)
        vec[k] = 1.0
        entries[name] = vec
    table = EmbeddingTable(K, entries)
    topics = TopicSet.from_names(names, table)
    part = build_partition(vocab, table, topics, tau=0.7)
    return part, vocab
