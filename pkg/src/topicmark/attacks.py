"""Lexical perturbation attacks and paraphrase-corpus ingestion.

A perturbation budget of p percent over n words yields floor(p*n/100)
edits split equally across insertion, deletion, and substitution (the
remainder goes to substitution). Random mode draws edit positions
uniformly; targeted mode restricts edits to content words tagged
noun/verb/adjective/adverb and never touches stop words. All randomness
comes from the plan's seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .detection import DetectionReport, detect_max_z, detect_strict, detokenize_for_inference
from .embeddings import EmbeddingTable, Vocabulary, _ascii_lower
from .errors import ResourceError
from .generation import make_rng
from .inference import default_stopwords
from .partition import TopicPartition
from .seeding import derive_seed

MODE_RANDOM = "random"
MODE_TARGETED = "targeted"

CONTENT_TAGS = frozenset({"N", "V", "J", "R"})
COARSE_TAGS = frozenset({"N", "V", "J", "R", "other"})

# Default sweep: 5% steps up to 50%, averaging 20 independent trials per level.
DEFAULT_LEVELS = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0)
DEFAULT_TRIALS = 20


@dataclass
class PerturbationPlan:
    """Edit budget for one perturbation pass."""

    percent: float
    total_edits: int
    insertions: int
    deletions: int
    substitutions: int
    mode: str
    seed: int

    def __post_init__(self):
        if not (0.0 <= self.percent <= 100.0):
            raise ValueError(f"percent must lie in [0, 100], got {self.percent}")
        if self.mode not in (MODE_RANDOM, MODE_TARGETED):
            raise ValueError(f"unknown perturbation mode {self.mode!r}")
        if self.insertions + self.deletions + self.substitutions != self.total_edits:
            raise ValueError("insertions + deletions + substitutions must equal total_edits")

    @classmethod
    def for_text(cls, n_words: int, percent: float, mode: str, seed: int) -> "PerturbationPlan":
        """Budget for an n-word text: total = floor(percent*n/100), split /3 with remainder to substitution."""
        total = int(percent * n_words // 100)
        ins = total // 3
        dele = total // 3
        subs = total - ins - dele
        return cls(
            percent=percent,
            total_edits=total,
            insertions=ins,
            deletions=dele,
            substitutions=subs,
            mode=mode,
            seed=seed,
        )


@dataclass
class LexicalResources:
    """Pluggable word pools for the perturbation operators."""

    high_freq_words: list[str]
    synonym_table: dict[str, list[str]] = field(default_factory=dict)
    pos_lexicon: dict[str, set[str]] = field(default_factory=dict)
    stop_words: set[str] = field(default_factory=set)

    @classmethod
    def from_dir(cls, path: str | Path) -> "LexicalResources":
        """Load ``high_freq_words.txt``, ``synonyms.tsv``, ``pos_tags.tsv``, ``stopwords.txt``."""
        path = Path(path)
        hf_file = path / "high_freq_words.txt"
        if not hf_file.exists():
            raise ResourceError(f"missing {hf_file}")
        high_freq = _read_word_list(hf_file)

        synonyms: dict[str, list[str]] = {}
        syn_file = path / "synonyms.tsv"
        if syn_file.exists():
            synonyms = _read_synonyms(syn_file.read_text("utf-8"), str(syn_file))

        pos: dict[str, set[str]] = {}
        pos_file = path / "pos_tags.tsv"
        if pos_file.exists():
            pos = _read_pos(pos_file.read_text("utf-8"), str(pos_file))

        stop_file = path / "stopwords.txt"
        stops = set(_read_word_list(stop_file)) if stop_file.exists() else set(default_stopwords())
        return cls(high_freq, synonyms, pos, stops)

    @classmethod
    def default(cls) -> "LexicalResources":
        """Small curated pools shipped with the package."""
        from importlib import resources as importlib_resources

        data = importlib_resources.files("topicmark.data")
        return cls(
            high_freq_words=_parse_word_list(data.joinpath("high_freq_words.txt").read_text("utf-8")),
            synonym_table=_read_synonyms(data.joinpath("synonyms.tsv").read_text("utf-8"), "synonyms.tsv"),
            pos_lexicon=_read_pos(data.joinpath("pos_tags.tsv").read_text("utf-8"), "pos_tags.tsv"),
            stop_words=set(default_stopwords()),
        )

    def coarse_tags(self, word: str) -> set[str]:
        return self.pos_lexicon.get(_ascii_lower(word), {"other"})


def _parse_word_list(text: str) -> list[str]:
    return [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]


def _read_word_list(path: Path) -> list[str]:
    return _parse_word_list(path.read_text("utf-8"))


def _read_synonyms(text: str, origin: str) -> dict[str, list[str]]:
    table: dict[str, list[str]] = {}
    for i, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        if "\t" not in line:
            raise ResourceError(f"{origin} line {i}: expected word<TAB>syn1,syn2,...")
        word, syns = line.split("\t", 1)
        table[_ascii_lower(word.strip())] = [s.strip() for s in syns.split(",") if s.strip()]
    return table


def _read_pos(text: str, origin: str) -> dict[str, set[str]]:
    lex: dict[str, set[str]] = {}
    for i, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        if "\t" not in line:
            raise ResourceError(f"{origin} line {i}: expected word<TAB>TAG[,TAG...]")
        word, tags = line.split("\t", 1)
        tagset = {t.strip() for t in tags.split(",") if t.strip()}
        bad = tagset - COARSE_TAGS
        if bad:
            raise ResourceError(f"{origin} line {i}: unknown tags {sorted(bad)}")
        lex[_ascii_lower(word.strip())] = tagset
    return lex


@dataclass
class PerturbResult:
    """Perturbed word sequence plus what was actually applied."""

    words: list[str]
    mode_used: str
    fell_back_to_random: bool
    insertions: int
    deletions: int
    substitutions: int


def _draw_positions(
    rng: np.random.Generator, primary: list[int], backup: list[int], count: int, label: str
) -> list[int]:
    """Draw ``count`` distinct positions, preferring the primary pool."""
    if count == 0:
        return []
    pool = list(primary)
    taken: list[int]
    if len(pool) >= count:
        taken = [pool[i] for i in rng.permutation(len(pool))[:count]]
    else:
        taken = list(pool)
        extra_pool = [p for p in backup if p not in set(pool)]
        short = count - len(taken)
        if len(extra_pool) < short:
            raise ValueError(f"not enough positions for {label}: need {count}")
        taken += [extra_pool[i] for i in rng.permutation(len(extra_pool))[:short]]
    return taken


def perturb(words: Sequence[str], plan: PerturbationPlan, res: LexicalResources) -> PerturbResult:
    """Apply one seeded perturbation pass.

    Substitutions are applied first, then deletions, then insertions;
    every position is resolved against the original indexing, so the
    three operations never interfere. Substitution and deletion
    positions are drawn jointly without replacement (the edit budget
    must land in full). Targeted mode edits only noun/verb/adjective/
    adverb words that are not stop words; with no such candidates the
    pass falls back to random mode and flags it.
    """
    words = list(words)
    n = len(words)
    if n == 0:
        raise ValueError("cannot perturb empty text")
    if plan.deletions > n:
        raise ValueError(f"plan deletes {plan.deletions} words but text has {n}")
    if plan.substitutions + plan.deletions > n:
        raise ValueError("plan edits more positions than the text has")
    if (plan.insertions or plan.substitutions) and not res.high_freq_words:
        raise ResourceError("high-frequency word pool is empty")

    mode = plan.mode
    fell_back = False
    candidates: list[int] = []
    if mode == MODE_TARGETED:
        candidates = [
            i
            for i, w in enumerate(words)
            if (res.coarse_tags(w) & CONTENT_TAGS) and _ascii_lower(w) not in res.stop_words
        ]
        if not candidates:
            mode = MODE_RANDOM
            fell_back = True

    rng = make_rng(plan.seed)
    all_positions = list(range(n))
    all_gaps = list(range(n + 1))

    if mode == MODE_TARGETED:
        non_stop = [
            i for i in all_positions if _ascii_lower(words[i]) not in res.stop_words
        ]
        edit_pos = _draw_positions(
            rng, candidates, non_stop, plan.substitutions + plan.deletions, "targeted edits"
        )
        gaps = _draw_positions(rng, candidates, all_gaps, plan.insertions, "insertions")
    else:
        edit_pos = _draw_positions(
            rng, all_positions, [], plan.substitutions + plan.deletions, "edits"
        )
        gaps = _draw_positions(rng, all_gaps, [], plan.insertions, "insertions")

    sub_pos = sorted(edit_pos[: plan.substitutions])
    del_pos = edit_pos[plan.substitutions:]

    def pick_high_freq() -> str:
        return res.high_freq_words[int(rng.integers(len(res.high_freq_words)))]

    cells: list[list[str]] = [[w] for w in words]
    for i in sub_pos:
        if mode == MODE_TARGETED:
            syns = res.synonym_table.get(_ascii_lower(words[i]))
            cells[i] = [syns[int(rng.integers(len(syns)))]] if syns else [pick_high_freq()]
        else:
            cells[i] = [pick_high_freq()]
    for i in del_pos:
        cells[i] = []

    inserted: dict[int, list[str]] = {}
    for g in gaps:
        inserted.setdefault(g, []).append(pick_high_freq())

    out: list[str] = []
    for i in range(n):
        out.extend(inserted.get(i, ()))
        out.extend(cells[i])
    out.extend(inserted.get(n, ()))

    return PerturbResult(
        words=out,
        mode_used=mode,
        fell_back_to_random=fell_back,
        insertions=plan.insertions,
        deletions=plan.deletions,
        substitutions=plan.substitutions,
    )


def tokenize_words(
    words: Sequence[str], vocab: Vocabulary, casefold: bool = True
) -> tuple[list[int], int]:
    """Map words to token ids against the active vocabulary.

    Tries the exact surface first, then the ASCII-lowercased form when
    ``casefold`` is set. Unknown words are dropped and counted (there is
    no learned subword segmenter to split them with).
    """
    ids: list[int] = []
    oov = 0
    for w in words:
        idx = vocab.index.get(w)
        if idx is None and casefold:
            idx = vocab.index.get(_ascii_lower(w))
        if idx is None:
            oov += 1
        else:
            ids.append(idx)
    return ids, oov


@dataclass
class LevelStats:
    percent: float
    mean_verdict: float
    mean_z: float


def degradation_curve(
    samples: Sequence[Sequence[int]],
    partition: TopicPartition,
    vocab: Vocabulary,
    resources: LexicalResources,
    levels: Sequence[float],
    trials: int,
    mode: str,
    base_seed: int = 0,
    threshold: float = 4.75,
    scheme: str = "max-z",
    oracle_topics: Sequence[int] | None = None,
    table: EmbeddingTable | None = None,
    inference_method: str = "embedding-average",
    min_tokens: int = 1,
) -> tuple[list[LevelStats], list[dict]]:
    """Detection outcome versus perturbation strength.

    For each level and sample, ``trials`` independently seeded
    perturbations are applied and detected; returns per-level means plus
    the raw per-trial rows so every aggregate can be recomputed.
    ``scheme`` is ``max-z``, or ``strict-oracle`` with ``oracle_topics``
    giving the known generation topic per sample.
    """
    if not samples:
        raise ValueError("no samples to attack")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if list(levels) != sorted(levels):
        raise ValueError("levels must be sorted ascending")
    if scheme == "strict-oracle" and oracle_topics is None:
        raise ValueError("strict-oracle scheme needs oracle_topics")

    def detect(tokens: Sequence[int], sample_ix: int) -> DetectionReport:
        if scheme == "max-z":
            return detect_max_z(tokens, partition, threshold=threshold, min_tokens=min_tokens)
        if scheme == "strict-oracle":
            return detect_strict(
                tokens,
                partition,
                threshold=threshold,
                min_tokens=min_tokens,
                oracle_topic=oracle_topics[sample_ix],
            )
        if scheme in ("strict-embed", "strict-kmeans"):
            method = "kmeans" if scheme == "strict-kmeans" else "embedding-average"
            return detect_strict(
                tokens,
                partition,
                vocab=vocab,
                table=table,
                inference_method=method,
                threshold=threshold,
                min_tokens=min_tokens,
            )
        raise ValueError(f"unknown scheme {scheme!r}")

    word_docs = [detokenize_for_inference(s, vocab, partition.subword_marker).split() for s in samples]

    stats: list[LevelStats] = []
    rows: list[dict] = []
    for level in levels:
        verdicts: list[bool] = []
        zs: list[float] = []
        for s_ix, words in enumerate(word_docs):
            for trial in range(trials):
                seed = derive_seed(base_seed, "perturb", level, s_ix, trial)
                plan = PerturbationPlan.for_text(len(words), level, mode, seed)
                result = perturb(words, plan, resources)
                ids, oov = tokenize_words(result.words, vocab)
                report = detect(ids, s_ix)
                verdicts.append(report.verdict)
                zs.append(report.z)
                rows.append(
                    {
                        "level": float(level),
                        "sample": s_ix,
                        "trial": trial,
                        "mode": result.mode_used,
                        "oov": oov,
                        "z": report.z,
                        "verdict": report.verdict,
                        "topic": report.topic_index,
                        "g": report.g,
                        "n": report.n,
                    }
                )
        stats.append(
            LevelStats(
                percent=float(level),
                mean_verdict=float(np.mean(verdicts)),
                mean_z=float(np.mean(zs)),
            )
        )
    return stats, rows


@dataclass
class ParaphrasePair:
    doc_id: str
    original_tokens: list[int]
    paraphrase_tokens: list[int]
    original_oov: int
    paraphrase_oov: int


def ingest_paraphrases(
    originals: Mapping[str, str],
    paraphrased: Mapping[str, str],
    vocab: Vocabulary,
    pairing: Mapping[str, str] | None = None,
) -> list[ParaphrasePair]:
    """Pair externally produced rewrites with their originals and tokenize both.

    ``pairing`` maps paraphrase id to original id; by default ids must
    match one-to-one. Every paraphrase must pair with exactly one
    original or the offending id is reported.
    """
    pairs: list[ParaphrasePair] = []
    for para_id in paraphrased:
        orig_id = pairing.get(para_id, para_id) if pairing else para_id
        if orig_id not in originals:
            raise ValueError(f"paraphrase {para_id!r} has no original (looked for {orig_id!r})")
        orig_tokens, orig_oov = tokenize_words(originals[orig_id].split(), vocab)
        para_tokens, para_oov = tokenize_words(paraphrased[para_id].split(), vocab)
        pairs.append(
            ParaphrasePair(
                doc_id=para_id,
                original_tokens=orig_tokens,
                paraphrase_tokens=para_tokens,
                original_oov=orig_oov,
                paraphrase_oov=para_oov,
            )
        )
    return pairs
