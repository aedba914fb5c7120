"""Shared fixtures: a tiny hand-built stub world and the big synthetic world.

The session-scoped fixtures are expensive (corpus synthesis, n-gram
training, hundreds of generations) and are shared by the acceptance
suite; everything is seeded so repeated runs are bit-identical.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import pytest

from topicmark import (
    EmbeddingTable,
    GenerationConfig,
    SamplerSpec,
    TopicSet,
    Vocabulary,
    generate,
    train_ngram,
)
from topicmark.inference import choose_topic, extract_keywords
from topicmark import synthetic

# ---------------------------------------------------------------- stub world

STUB_VECTORS = {
    "alpha": (0.9, 0.1),
    "bravo": (0.1, 0.95),
    "charlie": (0.8, 0.6),
    "delta": (-1.0, 0.05),
    "echo": (0.05, 0.08),
    # "foxtrot" deliberately has no embedding
}
STUB_TOKENS = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot"]
STUB_TOPIC_VECTORS = {"north": (1.0, 0.0), "east": (0.0, 1.0)}


@pytest.fixture
def stub_vocab() -> Vocabulary:
    return Vocabulary(list(STUB_TOKENS))


@pytest.fixture
def stub_table() -> EmbeddingTable:
    entries = {w: np.array(v, dtype=np.float64) for w, v in STUB_VECTORS.items()}
    entries.update({w: np.array(v, dtype=np.float64) for w, v in STUB_TOPIC_VECTORS.items()})
    return EmbeddingTable(2, entries)


@pytest.fixture
def stub_topics(stub_table) -> TopicSet:
    return TopicSet.from_names(["north", "east"], stub_table)


# ------------------------------------------------------- big synthetic world

CORPUS_TOKENS = 160_000
CORPUS_SEED = 11
NGRAM_ORDER = 3
NGRAM_ALPHA = 1e-3


@pytest.fixture(scope="session")
def world():
    return synthetic.make_world()


@pytest.fixture(scope="session")
def corpus_text(world):
    return world.corpus_text(CORPUS_TOKENS, seed=CORPUS_SEED)


@pytest.fixture(scope="session")
def model(world, corpus_text):
    return train_ngram(corpus_text, order=NGRAM_ORDER, alpha=NGRAM_ALPHA, vocab=world.vocab)


@pytest.fixture(scope="session")
def part4(world):
    """K=4, tau=0.7: the end-to-end configuration."""
    return world.partition(4, tau=0.7)


@dataclass
class WatermarkedSet:
    docs: list[list[int]]
    topics: list[int]
    green_fractions: list[float]
    seconds_first_200: float
    seconds_total: float
    extraction_hits: int = 0


@pytest.fixture(scope="session")
def wm500(world, model, part4) -> WatermarkedSet:
    """500 watermarked generations, delta=3.0, topic inferred from the prompt."""
    docs, topics, fractions = [], [], []
    hits = 0
    t0 = time.perf_counter()
    t200 = 0.0
    topic_set = part4.topic_set()
    for i in range(500):
        fam = i % 4
        prompt = world.prompt_ids(fam, seed=100 + i)
        prompt_text = " ".join(world.vocab.tokens[t] for t in prompt)
        detected = extract_keywords(prompt_text, world.table, max_k=5)
        choice = choose_topic(detected, topic_set, method="auto")
        hits += choice.topic_index == fam
        cfg = GenerationConfig(
            delta=3.0, max_tokens=200, seed=2000 + i, sampler=SamplerSpec()
        )
        result = generate(model, part4, choice, cfg, prompt)
        docs.append(result.tokens)
        topics.append(choice.topic_index)
        fractions.append(result.trace.green_fraction)
        if i == 199:
            t200 = time.perf_counter() - t0
    return WatermarkedSet(
        docs=docs,
        topics=topics,
        green_fractions=fractions,
        seconds_first_200=t200,
        seconds_total=time.perf_counter() - t0,
        extraction_hits=hits,
    )
