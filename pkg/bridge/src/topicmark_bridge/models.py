"""Model backends the bridge can serve.

Three kinds are built in: deterministic stubs (for conformance testing
and protocol development), the toolkit's own n-gram files, and, when the
optional extras are installed, any causal-LM checkpoint loadable through
the transformers library.
"""

from __future__ import annotations

import hashlib
from typing import Protocol, Sequence

import numpy as np


class BridgeModel(Protocol):
    vocab_size: int
    model_name: str
    tokenizer_fingerprint: str

    def next_logits(self, context: Sequence[int]) -> np.ndarray: ...


def _require_context(context: Sequence[int], vocab_size: int) -> None:
    if len(context) == 0:
        raise ValueError("providers require at least one context token")
    for t in context:
        if not (0 <= int(t) < vocab_size):
            raise ValueError(f"context token {t} outside vocabulary of size {vocab_size}")


class OneHotStubModel:
    """Logits are a one-hot of the last context token: greedy generation repeats it."""

    def __init__(self, vocab_size: int):
        if vocab_size <= 0:
            raise ValueError("vocab_size must be positive")
        self.vocab_size = vocab_size
        self.model_name = f"stub-onehot-{vocab_size}"
        self.tokenizer_fingerprint = hashlib.sha256(
            f"onehot:{vocab_size}".encode()
        ).hexdigest()

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        _require_context(context, self.vocab_size)
        logits = np.zeros(self.vocab_size, dtype=np.float32)
        logits[int(context[-1])] = 1.0
        return logits


class HashStubModel:
    """Deterministic synthetic logits keyed on the context, full-mantissa floats.

    The reference stub for protocol conformance: values are non-trivial
    float32s so encode/decode bit-exactness is actually exercised.
    """

    def __init__(self, vocab_size: int, seed: int = 0):
        if vocab_size <= 0:
            raise ValueError("vocab_size must be positive")
        self.vocab_size = vocab_size
        self.seed = seed
        self.model_name = f"stub-hash-{vocab_size}"
        self.tokenizer_fingerprint = hashlib.sha256(
            f"hash:{vocab_size}:{seed}".encode()
        ).hexdigest()

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        _require_context(context, self.vocab_size)
        digest = hashlib.sha256(
            (str(self.seed) + ":" + ",".join(str(int(t)) for t in context)).encode()
        ).digest()
        rng = np.random.Generator(np.random.Philox(int.from_bytes(digest[:8], "little")))
        return rng.standard_normal(self.vocab_size).astype(np.float32)


class NGramBackedModel:
    """Serves a topicmark n-gram model file (the toolkit's documented format)."""

    def __init__(self, model_path: str, vocab_path: str):
        from topicmark import NGramModel, Vocabulary

        vocab = Vocabulary.from_file(vocab_path)
        self._model = NGramModel.load(model_path, vocab)
        self.vocab_size = self._model.vocab_size
        self.model_name = f"ngram-order{self._model.order}"
        self.tokenizer_fingerprint = vocab.fingerprint()

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        _require_context(context, self.vocab_size)
        return self._model.next_logits(context)


class HFCausalModel:
    """Any transformers causal LM checkpoint; logits for the next token only."""

    def __init__(self, checkpoint: str):
        try:
            import torch
            from transformers import AutoModelForCausalLM, AutoTokenizer
        except ImportError as exc:  # pragma: no cover - optional extra
            raise RuntimeError(
                "the 'hf' extra (transformers + torch) is required for hf: models"
            ) from exc
        self._torch = torch
        self._tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        self._model = AutoModelForCausalLM.from_pretrained(checkpoint)
        self._model.eval()
        self.vocab_size = int(self._model.config.vocab_size)
        self.model_name = checkpoint
        vocab_items = sorted(self._tokenizer.get_vocab().items(), key=lambda kv: kv[1])
        h = hashlib.sha256()
        for token, _ in vocab_items:
            raw = token.encode("utf-8")
            h.update(len(raw).to_bytes(4, "little"))
            h.update(raw)
        self.tokenizer_fingerprint = h.hexdigest()

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        _require_context(context, self.vocab_size)
        with self._torch.no_grad():
            ids = self._torch.tensor([list(map(int, context))])
            out = self._model(ids)
        return out.logits[0, -1, :].float().numpy()


def load_model(spec: str) -> BridgeModel:
    """Parse a model spec string.

    Forms: ``stub:onehot:<vocab>``, ``stub:hash:<vocab>[:<seed>]``,
    ``ngram:<model.json>:<vocab.txt>``, ``hf:<checkpoint>``.
    """
    parts = spec.split(":")
    if parts[0] == "stub":
        if len(parts) >= 3 and parts[1] == "onehot":
            return OneHotStubModel(int(parts[2]))
        if len(parts) >= 3 and parts[1] == "hash":
            seed = int(parts[3]) if len(parts) > 3 else 0
            return HashStubModel(int(parts[2]), seed=seed)
        raise ValueError(f"unknown stub spec {spec!r}")
    if parts[0] == "ngram":
        if len(parts) != 3:
            raise ValueError("ngram spec must be ngram:<model.json>:<vocab.txt>")
        return NGramBackedModel(parts[1], parts[2])
    if parts[0] == "hf":
        return HFCausalModel(spec.split(":", 1)[1])
    raise ValueError(f"unknown model spec {spec!r}")
