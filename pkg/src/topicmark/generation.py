"""Watermark-embedding generation over any logit provider.

The generation loop picks one green list up front from the prompt's
topic, adds the bias to every green logit at each step, then samples.
A Laplace-smoothed n-gram model with stupid backoff is included as a
desk-scale stand-in for a real language model; anything satisfying
:class:`LogitProvider` plugs in the same way.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .embeddings import Vocabulary
from .errors import ProviderError
from .inference import TopicChoice
from .partition import TopicPartition

BACKOFF_FACTOR = 0.4

NGRAM_FORMAT = "topicmark-ngram"
NGRAM_VERSION = 1


@runtime_checkable
class LogitProvider(Protocol):
    """Next-token scoring contract.

    Implementations must be deterministic given identical context and
    must return a vector of exactly ``vocab_size`` finite scores;
    randomness belongs to the sampler, never the provider.
    """

    vocab_size: int

    def next_logits(self, context: Sequence[int]) -> np.ndarray: ...


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax in float64."""
    x = np.asarray(logits, dtype=np.float64)
    shifted = x - np.max(x)
    e = np.exp(shifted)
    return e / np.sum(e)


@dataclass(frozen=True)
class SamplerSpec:
    """Sampling policy: greedy, or softmax sampling with optional top-k and temperature."""

    greedy: bool = False
    top_k: int | None = None
    temperature: float = 1.0

    def __post_init__(self):
        if self.top_k is not None and self.top_k < 1:
            raise ValueError(f"top-k must be >= 1, got {self.top_k}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")

    @classmethod
    def parse(cls, text: str) -> "SamplerSpec":
        """Parse CLI sampler syntax: ``greedy``, ``top-k:50``, ``temperature:0.8``, or a comma list."""
        greedy = False
        top_k = None
        temperature = 1.0
        for part in text.split(","):
            part = part.strip()
            if part == "greedy":
                greedy = True
            elif part.startswith("top-k:"):
                top_k = int(part.split(":", 1)[1])
            elif part.startswith("temperature:"):
                temperature = float(part.split(":", 1)[1])
            elif part:
                raise ValueError(f"unknown sampler component {part!r}")
        return cls(greedy=greedy, top_k=top_k, temperature=temperature)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based RNG: same seed and draw index always yield the same variate."""
    return np.random.Generator(np.random.Philox(seed))


def sample(logits: np.ndarray, sampler: SamplerSpec, rng: np.random.Generator) -> int:
    """Draw one token index; consumes at most one uniform variate."""
    x = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite logits passed to sampler")
    if sampler.greedy:
        return int(np.argmax(x))  # first max wins on ties

    scores = x / sampler.temperature
    if sampler.top_k is not None and sampler.top_k < len(scores):
        order = np.argsort(-scores, kind="stable")  # ties broken by lowest index
        keep = order[: sampler.top_k]
        masked = np.full_like(scores, -np.inf)
        masked[keep] = scores[keep]
        scores = masked
    probs = softmax(scores)
    u = rng.random()
    cum = np.cumsum(probs)
    idx = int(np.searchsorted(cum, u, side="right"))
    return min(idx, len(probs) - 1)


@dataclass
class GenerationConfig:
    delta: float = 2.0
    max_tokens: int = 200
    length_tolerance: int = 5
    sampler: SamplerSpec = field(default_factory=lambda: SamplerSpec(top_k=50))
    seed: int = 0
    eos_token: int | None = None

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if self.max_tokens <= 0:
            raise ValueError(f"max_tokens must be positive, got {self.max_tokens}")
        if self.length_tolerance < 0:
            raise ValueError(f"length_tolerance must be >= 0, got {self.length_tolerance}")


@dataclass
class TraceStep:
    step: int
    token: int
    green: bool
    logit_before: float
    logit_after: float


@dataclass
class GenerationTrace:
    steps: list[TraceStep]
    topic_index: int | None
    flagged_short: bool

    @property
    def green_count(self) -> int:
        return sum(1 for s in self.steps if s.green)

    @property
    def green_fraction(self) -> float:
        return self.green_count / len(self.steps) if self.steps else 0.0


@dataclass
class GenerationResult:
    tokens: list[int]
    trace: GenerationTrace


def generate(
    provider: LogitProvider,
    partition: TopicPartition | None,
    choice: TopicChoice | None,
    cfg: GenerationConfig,
    prompt: Sequence[int],
) -> GenerationResult:
    """Run the biased generation loop.

    The green list is fixed once from ``choice`` before the loop; at each
    step ``cfg.delta`` is added to every green logit before softmax
    sampling. Pass ``partition=None, choice=None`` for an unwatermarked
    baseline. The trace records per-step green membership of the emitted
    token and its logit before/after bias.
    """
    if len(prompt) == 0:
        raise ValueError("prompt must be non-empty")
    if (partition is None) != (choice is None):
        raise ValueError("partition and choice must be supplied together or not at all")

    green_mask = None
    topic_index = None
    if partition is not None:
        if not (0 <= choice.topic_index < partition.K):
            raise ValueError(f"topic index {choice.topic_index} out of range for K={partition.K}")
        green_mask = partition.membership(choice.topic_index)
        topic_index = choice.topic_index

    rng = make_rng(cfg.seed)
    context = list(prompt)
    steps: list[TraceStep] = []
    tokens: list[int] = []

    for step in range(cfg.max_tokens):
        raw = provider.next_logits(context)
        raw = np.asarray(raw, dtype=np.float64)
        if raw.shape != (provider.vocab_size,):
            raise ProviderError(
                f"provider returned {raw.shape} logits, expected ({provider.vocab_size},)", step=step
            )
        if not np.all(np.isfinite(raw)):
            raise ProviderError("provider returned non-finite logits", step=step)

        if green_mask is not None:
            biased = np.where(green_mask, raw + cfg.delta, raw)
        else:
            biased = raw

        token = sample(biased, cfg.sampler, rng)
        steps.append(
            TraceStep(
                step=step,
                token=token,
                green=bool(green_mask[token]) if green_mask is not None else False,
                logit_before=float(raw[token]),
                logit_after=float(biased[token]),
            )
        )
        tokens.append(token)
        context.append(token)
        if cfg.eos_token is not None and token == cfg.eos_token:
            break

    flagged_short = len(tokens) < cfg.max_tokens - cfg.length_tolerance
    return GenerationResult(
        tokens=tokens,
        trace=GenerationTrace(steps=steps, topic_index=topic_index, flagged_short=flagged_short),
    )


def write_trace(trace: GenerationTrace, sink) -> None:
    """Emit a trace as line-delimited JSON records."""
    own = isinstance(sink, (str, Path))
    f = open(sink, "w", encoding="utf-8") if own else sink
    try:
        for s in trace.steps:
            f.write(
                json.dumps(
                    {
                        "step": s.step,
                        "token": s.token,
                        "green": s.green,
                        "logit_before": s.logit_before,
                        "logit_after": s.logit_after,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    finally:
        if own:
            f.close()


class NGramModel:
    """Laplace-smoothed n-gram logit provider with stupid backoff.

    Raw logits for a context seen in training exponentiate to the exact
    Laplace conditional (sums to 1); an unseen context backs off to the
    longest seen suffix, shifted by log(0.4) per backoff step, which the
    downstream softmax absorbs.
    """

    def __init__(self, order: int, alpha: float, vocab: Vocabulary):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        if alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {alpha}")
        self.order = order
        self.alpha = alpha
        self.vocab = vocab
        self.vocab_size = len(vocab)
        # _tables[L]: context tuple of length L -> (token id array, count array, total)
        self._tables: list[dict[tuple[int, ...], tuple[np.ndarray, np.ndarray, int]]] = [
            {} for _ in range(order)
        ]

    def _base_logits(self, ids: np.ndarray, cnts: np.ndarray, total: int) -> np.ndarray:
        denom = total + self.alpha * self.vocab_size
        logits = np.full(self.vocab_size, math.log(self.alpha / denom), dtype=np.float64)
        logits[ids] = np.log((cnts + self.alpha) / denom)
        return logits

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        ctx = tuple(int(t) for t in context[-(self.order - 1):]) if self.order > 1 else ()
        backoff_steps = 0
        while True:
            entry = self._tables[len(ctx)].get(ctx)
            if entry is not None:
                ids, cnts, total = entry
                logits = self._base_logits(ids, cnts, total)
                if backoff_steps:
                    logits += backoff_steps * math.log(BACKOFF_FACTOR)
                return logits
            if not ctx:
                raise ProviderError("model has no unigram counts; was it trained?")
            ctx = ctx[1:]
            backoff_steps += 1

    def conditional(self, context: Sequence[int]) -> np.ndarray:
        """Normalized next-token distribution (the softmax of the raw logits)."""
        return softmax(self.next_logits(context))

    def save(self, sink) -> None:
        doc = {
            "format": NGRAM_FORMAT,
            "version": NGRAM_VERSION,
            "order": self.order,
            "alpha": self.alpha,
            "vocab_size": self.vocab_size,
            "vocab_fingerprint": self.vocab.fingerprint(),
            "tables": [
                {
                    " ".join(map(str, ctx)): {str(int(t)): int(c) for t, c in zip(ids, cnts)}
                    for ctx, (ids, cnts, _total) in table.items()
                }
                for table in self._tables
            ],
        }
        own = isinstance(sink, (str, Path))
        f = open(sink, "w", encoding="utf-8") if own else sink
        try:
            json.dump(doc, f, sort_keys=True)
            f.write("\n")
        finally:
            if own:
                f.close()

    @classmethod
    def load(cls, source, vocab: Vocabulary) -> "NGramModel":
        own = isinstance(source, (str, Path))
        f = open(source, "r", encoding="utf-8") if own else source
        try:
            doc = json.load(f)
        finally:
            if own:
                f.close()
        if doc.get("format") != NGRAM_FORMAT or doc.get("version") != NGRAM_VERSION:
            raise ValueError("not a topicmark n-gram model file")
        if doc["vocab_fingerprint"] != vocab.fingerprint():
            raise ValueError("model was trained against a different vocabulary")
        model = cls(doc["order"], doc["alpha"], vocab)
        for L, table in enumerate(doc["tables"]):
            for key, successors in table.items():
                ctx = tuple(int(t) for t in key.split()) if key else ()
                ids = np.array([int(t) for t in successors], dtype=np.int64)
                cnts = np.array([successors[t] for t in successors], dtype=np.int64)
                order_ix = np.argsort(ids)
                ids, cnts = ids[order_ix], cnts[order_ix]
                model._tables[L][ctx] = (ids, cnts, int(cnts.sum()))
        return model


def train_ngram(corpus, order: int, alpha: float, vocab: Vocabulary) -> NGramModel:
    """Count sliding windows of every order up to ``order`` over a token stream.

    ``corpus`` may be a text string, a path, or a text file object; it is
    whitespace-tokenized and every token must be in the vocabulary.
    """
    if isinstance(corpus, (str, Path)) and isinstance(corpus, Path):
        text = Path(corpus).read_text(encoding="utf-8")
    elif isinstance(corpus, str):
        text = corpus
    else:
        text = corpus.read()
    words = text.split()
    if not words:
        raise ValueError("corpus is empty")
    if len(words) < order:
        raise ValueError(f"corpus has {len(words)} tokens, need at least {order}")

    ids = []
    for w in words:
        idx = vocab.index.get(w)
        if idx is None:
            raise ValueError(f"corpus token {w!r} is not in the vocabulary")
        ids.append(idx)

    model = NGramModel(order, alpha, vocab)
    raw: list[dict[tuple[int, ...], dict[int, int]]] = [{} for _ in range(order)]
    for i, tok in enumerate(ids):
        for L in range(min(i, order - 1) + 1):
            ctx = tuple(ids[i - L:i])
            succ = raw[L].setdefault(ctx, {})
            succ[tok] = succ.get(tok, 0) + 1

    for L in range(order):
        for ctx, succ in raw[L].items():
            sorted_ids = np.array(sorted(succ), dtype=np.int64)
            cnts = np.array([succ[t] for t in sorted_ids], dtype=np.int64)
            model._tables[L][ctx] = (sorted_ids, cnts, int(cnts.sum()))
    return model
