"""Word/token embedding storage, file loading, and cosine similarity.

Embeddings are treated purely as data: any source that can be exported to
the ``text-vec`` or ``tsv`` formats works. All vectors are stored and
compared in 64-bit floats so similarity comparisons are reproducible
across platforms.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import EmbeddingLoadError, VocabularyError

FORMATS = ("text-vec", "tsv")
CASEFOLD_POLICIES = ("exact", "lowercase")


def _ascii_lower(s: str) -> str:
    # ASCII-only casefold; unicode lowering would make lookups locale-sensitive.
    return s.translate(_ASCII_LOWER_TABLE)


_ASCII_LOWER_TABLE = str.maketrans(
    "ABCDEFGHIJKLMNOPQRSTUVWXYZ", "abcdefghijklmnopqrstuvwxyz"
)


def cosine(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """Cosine similarity between two non-zero vectors of equal length.

    Computed in float64 with index-ascending summation; the result is
    clipped to [-1, 1] to absorb rounding at the boundaries.
    """
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.ndim != 1 or bv.ndim != 1 or av.shape != bv.shape:
        raise ValueError(f"cosine requires equal-length vectors, got {av.shape} and {bv.shape}")
    scale_a = float(np.max(np.abs(av)))
    scale_b = float(np.max(np.abs(bv)))
    if scale_a == 0.0 or scale_b == 0.0:
        raise ValueError("cosine is undefined for zero-norm vectors")
    # Pre-scale by the max magnitude so squaring neither under- nor overflows.
    av = av / scale_a
    bv = bv / scale_b
    na = math.sqrt(float(np.dot(av, av)))
    nb = math.sqrt(float(np.dot(bv, bv)))
    value = float(np.dot(av, bv)) / (na * nb)
    return min(1.0, max(-1.0, value))


@dataclass
class Vocabulary:
    """Ordered token list with its inverse index."""

    tokens: list[str]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {}
        for i, tok in enumerate(self.tokens):
            if tok in self.index:
                raise VocabularyError(f"duplicate token {tok!r} at positions {self.index[tok]} and {i}")
            self.index[tok] = i

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def fingerprint(self) -> str:
        """Content hash of the ordered token list (length-prefixed, sha256)."""
        h = hashlib.sha256()
        for tok in self.tokens:
            raw = tok.encode("utf-8")
            h.update(len(raw).to_bytes(4, "little"))
            h.update(raw)
        return h.hexdigest()

    @classmethod
    def from_file(cls, path: str | Path) -> "Vocabulary":
        """Read a vocabulary file: one token per line, order preserved."""
        with open(path, "r", encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f if line.rstrip("\n")]
        return cls(tokens)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for tok in self.tokens:
                f.write(tok + "\n")


class EmbeddingTable:
    """Immutable map from surface strings to float64 vectors of one dimensionality.

    Out-of-vocabulary lookups return ``None`` rather than any default
    vector, so callers must handle absence explicitly.
    """

    def __init__(
        self,
        dim: int,
        entries: dict[str, np.ndarray],
        casefold_policy: str = "exact",
        duplicate_count: int = 0,
    ):
        if dim <= 0:
            raise ValueError(f"dim must be positive, got {dim}")
        if casefold_policy not in CASEFOLD_POLICIES:
            raise ValueError(f"unknown casefold policy {casefold_policy!r}")
        for word, vec in entries.items():
            if vec.shape != (dim,):
                raise ValueError(f"entry {word!r} has shape {vec.shape}, expected ({dim},)")
            if not np.any(vec):
                raise ValueError(f"entry {word!r} is a zero vector")
        self.dim = dim
        self.casefold_policy = casefold_policy
        self.duplicate_count = duplicate_count
        self._entries = entries

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, word: str) -> bool:
        return self.lookup(word) is not None

    def _key(self, word: str) -> str:
        return _ascii_lower(word) if self.casefold_policy == "lowercase" else word

    def lookup(self, word: str) -> np.ndarray | None:
        """Vector for ``word`` or None when absent."""
        return self._entries.get(self._key(word))

    def words(self) -> Iterable[str]:
        return self._entries.keys()

    def similarity(self, word_a: str, word_b: str) -> float:
        va = self.lookup(word_a)
        vb = self.lookup(word_b)
        if va is None or vb is None:
            missing = word_a if va is None else word_b
            raise KeyError(f"no embedding for {missing!r}")
        return cosine(va, vb)


def _open_stream(source) -> IO[str]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8")
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, io.TextIOBase):
        return source
    # binary file object
    return io.TextIOWrapper(source, encoding="utf-8")


def load_embeddings(
    source,
    format: str = "text-vec",
    casefold_policy: str = "exact",
) -> EmbeddingTable:
    """Parse an embedding stream into an :class:`EmbeddingTable`.

    ``text-vec`` lines are whitespace-separated ``word v1 ... vd`` with an
    optional leading ``count dim`` header; ``tsv`` lines are tab-separated.
    Duplicate words keep their first occurrence and are counted. Rows whose
    dimensionality disagrees with the first row, and all-zero rows, abort
    the load with the offending line number.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown embedding format {format!r}, expected one of {FORMATS}")
    sep = "\t" if format == "tsv" else None

    stream = _open_stream(source)
    entries: dict[str, np.ndarray] = {}
    dim: int | None = None
    duplicates = 0
    declared_count: int | None = None

    lineno = 0
    for raw in stream:
        lineno += 1
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split(sep)
        if lineno == 1 and format == "text-vec" and len(parts) == 2:
            try:
                declared_count = int(parts[0])
                dim = int(parts[1])
                continue
            except ValueError:
                pass  # not a header, fall through to parsing as a row
        word, raw_values = parts[0], parts[1:]
        if not raw_values:
            raise EmbeddingLoadError(f"line {lineno}: no vector components for {word!r}")
        try:
            vec = np.array([float(v) for v in raw_values], dtype=np.float64)
        except ValueError as exc:
            raise EmbeddingLoadError(f"line {lineno}: {exc}") from exc
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise EmbeddingLoadError(
                f"line {lineno}: dimension mismatch, expected {dim} but row has {len(vec)}"
            )
        if not np.any(vec):
            raise EmbeddingLoadError(f"line {lineno}: zero vector for word {word!r}")
        key = _ascii_lower(word) if casefold_policy == "lowercase" else word
        if key in entries:
            duplicates += 1
            continue
        entries[key] = vec

    if not entries:
        raise EmbeddingLoadError("empty embedding stream")
    if declared_count is not None and declared_count != len(entries) + duplicates:
        # Header counts are advisory in the wild; record, do not fail.
        pass
    assert dim is not None
    return EmbeddingTable(dim, entries, casefold_policy=casefold_policy, duplicate_count=duplicates)


def write_embeddings(table: EmbeddingTable, sink, format: str = "text-vec") -> None:
    """Serialize a table so that a reload reproduces bit-identical float64 vectors."""
    if format not in FORMATS:
        raise ValueError(f"unknown embedding format {format!r}")
    sep = "\t" if format == "tsv" else " "
    own = isinstance(sink, (str, Path))
    f = open(sink, "w", encoding="utf-8") if own else sink
    try:
        for word in table.words():
            vec = table.lookup(word)
            f.write(word + sep + sep.join(repr(float(x)) for x in vec) + "\n")
    finally:
        if own:
            f.close()
