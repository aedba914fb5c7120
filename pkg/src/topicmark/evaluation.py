"""Detection metrics and batch experiment driving.

ROC-AUC follows the Mann-Whitney convention (tied scores earn half
credit); best F1 sweeps midpoints between adjacent distinct scores plus
the two infinities; TPR@FPR picks the smallest observed score whose
empirical FPR stays within budget. Every aggregate is recomputable from
the raw per-document log the experiment runner emits.
"""

from __future__ import annotations

import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .attacks import LexicalResources, PerturbationPlan, perturb, tokenize_words
from .detection import (
    DetectionReport,
    detect_max_z,
    detect_sliding,
    detect_strict,
    detokenize_for_inference,
)
from .embeddings import EmbeddingTable, Vocabulary, load_embeddings
from .errors import FingerprintMismatchError, ManifestError
from .partition import TopicPartition, load_partition
from .seeding import derive_seed

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

LABEL_WATERMARKED = "watermarked"
LABEL_CLEAN = "clean"


@dataclass(frozen=True)
class ScoredDoc:
    doc_id: str
    score: float
    label: str


@dataclass
class ScoredCorpus:
    """Scores with ground-truth labels, the input shape for every metric."""

    docs: list[ScoredDoc]

    def __post_init__(self):
        for d in self.docs:
            if d.label not in (LABEL_WATERMARKED, LABEL_CLEAN):
                raise ValueError(f"unknown label {d.label!r} for {d.doc_id!r}")

    def __len__(self) -> int:
        return len(self.docs)

    def split(self) -> tuple[np.ndarray, np.ndarray]:
        pos = np.array([d.score for d in self.docs if d.label == LABEL_WATERMARKED])
        neg = np.array([d.score for d in self.docs if d.label == LABEL_CLEAN])
        return pos, neg

    def require_both_labels(self) -> None:
        pos, neg = self.split()
        if len(pos) == 0 or len(neg) == 0:
            raise ValueError("metric needs at least one watermarked and one clean score")


def roc_auc(corpus: ScoredCorpus) -> float:
    """Area under the ROC curve; equal scores contribute half credit.

    Computed through average ranks, which is exactly the concordant-pair
    statistic (concordant + 0.5*ties) / (pos*neg).
    """
    corpus.require_both_labels()
    pos, neg = corpus.split()
    scores = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(len(pos), dtype=bool), np.zeros(len(neg), dtype=bool)])

    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        avg_rank = (i + j) / 2.0 + 1.0  # 1-based average rank of the tie group
        ranks[order[i:j + 1]] = avg_rank
        i = j + 1

    r_pos = float(np.sum(ranks[labels]))
    n_pos, n_neg = len(pos), len(neg)
    return (r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _confusion_at(pos: np.ndarray, neg: np.ndarray, threshold: float) -> tuple[int, int, int]:
    tp = int(np.sum(pos > threshold))
    fp = int(np.sum(neg > threshold))
    fn = len(pos) - tp
    return tp, fp, fn


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def candidate_thresholds(scores: Sequence[float]) -> list[float]:
    """-inf, midpoints between adjacent distinct scores, +inf."""
    distinct = sorted(set(float(s) for s in scores))
    mids = [(a + b) / 2.0 for a, b in zip(distinct, distinct[1:])]
    return [-math.inf] + mids + [math.inf]


def best_f1(corpus: ScoredCorpus) -> tuple[float, float]:
    """Maximum F1 over all candidate thresholds; F1 ties keep the lowest threshold."""
    corpus.require_both_labels()
    pos, neg = corpus.split()
    best_score = -1.0
    best_threshold = -math.inf
    for t in candidate_thresholds(np.concatenate([pos, neg])):
        f1 = _f1(*_confusion_at(pos, neg, t))
        if f1 > best_score:
            best_score = f1
            best_threshold = t
    return best_score, best_threshold


def tpr_at_fpr(corpus: ScoredCorpus, fpr_level: float, interpolate: bool = False) -> float:
    """TPR at the smallest observed score whose empirical FPR is within budget.

    The default never exceeds the FPR budget; ``interpolate`` instead
    reads the TPR off the linearly interpolated ROC curve at the exact
    level.
    """
    if not (0.0 < fpr_level < 1.0):
        raise ValueError(f"fpr_level must lie in (0, 1), got {fpr_level}")
    corpus.require_both_labels()
    pos, neg = corpus.split()

    if interpolate:
        thresholds = sorted(set(np.concatenate([pos, neg])), reverse=True)
        fprs = [0.0]
        tprs = [0.0]
        for t in thresholds:
            fprs.append(float(np.sum(neg >= t)) / len(neg))
            tprs.append(float(np.sum(pos >= t)) / len(pos))
        fprs.append(1.0)
        tprs.append(1.0)
        # keep the highest tpr at duplicated fpr values
        best_at: dict[float, float] = {}
        for f, t in zip(fprs, tprs):
            best_at[f] = max(best_at.get(f, 0.0), t)
        xs = sorted(best_at)
        ys = [best_at[x] for x in xs]
        return float(np.interp(fpr_level, xs, ys))

    for t in sorted(set(float(s) for s in np.concatenate([pos, neg]))):
        fpr = float(np.sum(neg > t)) / len(neg)
        if fpr <= fpr_level:
            return float(np.sum(pos > t)) / len(pos)
    return 0.0  # unreachable: the maximum score always has FPR 0


@dataclass
class CleanFprReport:
    fpr: float
    false_positives: int
    n: int
    z_mean: float
    z_sd: float


def fpr_on_clean(
    clean_docs: Sequence[Sequence[int]], detector: Callable[[Sequence[int]], DetectionReport]
) -> CleanFprReport:
    """Fraction of clean documents the detector flags, plus the z summary."""
    if not clean_docs:
        raise ValueError("no clean documents supplied")
    reports = [detector(doc) for doc in clean_docs]
    zs = np.array([r.z for r in reports])
    fp = sum(1 for r in reports if r.verdict)
    return CleanFprReport(
        fpr=fp / len(reports),
        false_positives=fp,
        n=len(reports),
        z_mean=float(np.mean(zs)),
        z_sd=float(np.std(zs, ddof=1)) if len(zs) > 1 else 0.0,
    )


@dataclass
class ScalingRow:
    K: int
    z_mean: float
    z_sd: float
    seconds_mean: float
    seconds_sd: float


def scaling_study(
    partitions: Sequence[TopicPartition],
    samples,
    threshold: float = 4.75,
    repetitions: int = 10,
    warmup: int = 2,
    min_tokens: int = 10,
) -> list[ScalingRow]:
    """Max-z signal strength and wall-clock versus topic count.

    ``samples`` is either one shared list of token documents or a
    mapping from K to that partition's own watermarked documents (the
    right shape when comparing watermark strength across K). Timing
    wraps detection only: warmup repetitions are discarded and the
    per-sample mean/sd is taken over the remaining repetitions.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    fingerprints = {p.vocab_fingerprint for p in partitions}
    if len(fingerprints) > 1:
        pair = sorted(fingerprints)
        raise FingerprintMismatchError(expected=pair[0], found=pair[1])

    rows: list[ScalingRow] = []
    for part in partitions:
        docs = samples[part.K] if isinstance(samples, Mapping) else samples
        if not docs:
            raise ValueError(f"no samples for K={part.K}")
        zs = np.array(
            [detect_max_z(d, part, threshold=threshold, min_tokens=min_tokens).z for d in docs]
        )
        per_sample_times = []
        for rep in range(warmup + repetitions):
            t0 = time.perf_counter()
            for d in docs:
                detect_max_z(d, part, threshold=threshold, min_tokens=min_tokens)
            elapsed = time.perf_counter() - t0
            if rep >= warmup:
                per_sample_times.append(elapsed / len(docs))
        times = np.array(per_sample_times)
        rows.append(
            ScalingRow(
                K=part.K,
                z_mean=float(np.mean(zs)),
                z_sd=float(np.std(zs, ddof=1)) if len(zs) > 1 else 0.0,
                seconds_mean=float(np.mean(times)),
                seconds_sd=float(np.std(times, ddof=1)) if len(times) > 1 else 0.0,
            )
        )
    return rows


@dataclass
class MetricsReport:
    roc_auc: float
    best_f1: float
    best_f1_threshold: float
    tpr_at: dict[float, float]
    fpr_at_threshold: float
    z_stats: dict[str, tuple[float, float]]
    runtime_stats: dict | None = None

    def to_dict(self) -> dict:
        return {
            "roc_auc": self.roc_auc,
            "best_f1": self.best_f1,
            "best_f1_threshold": self.best_f1_threshold,
            "tpr_at": {f"{level:g}": tpr for level, tpr in sorted(self.tpr_at.items())},
            "fpr_at_threshold": self.fpr_at_threshold,
            "z_stats": {
                label: {"mean": m, "sd": s} for label, (m, s) in sorted(self.z_stats.items())
            },
            "runtime_stats": self.runtime_stats,
        }


def compute_metrics(
    corpus: ScoredCorpus,
    fpr_levels: Sequence[float] = (0.01, 0.10),
    clean_verdicts: Sequence[bool] | None = None,
) -> MetricsReport:
    """All table metrics from one scored corpus."""
    pos, neg = corpus.split()
    f1, f1_threshold = best_f1(corpus)
    z_stats = {}
    for label, arr in ((LABEL_WATERMARKED, pos), (LABEL_CLEAN, neg)):
        if len(arr):
            z_stats[label] = (
                float(np.mean(arr)),
                float(np.std(arr, ddof=1)) if len(arr) > 1 else 0.0,
            )
    fpr = (
        sum(1 for v in clean_verdicts if v) / len(clean_verdicts)
        if clean_verdicts
        else 0.0
    )
    return MetricsReport(
        roc_auc=roc_auc(corpus),
        best_f1=f1,
        best_f1_threshold=f1_threshold,
        tpr_at={level: tpr_at_fpr(corpus, level) for level in fpr_levels},
        fpr_at_threshold=fpr,
        z_stats=z_stats,
    )


def read_token_docs(path: str | Path) -> list[list[int]]:
    """One document per line, whitespace-separated integer token ids."""
    docs = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                docs.append([int(t) for t in line.split()])
    return docs


def write_token_docs(docs: Sequence[Sequence[int]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            f.write(" ".join(str(int(t)) for t in doc) + "\n")


@dataclass
class ExperimentConfig:
    """Parsed and path-checked experiment manifest."""

    partition_path: Path
    watermarked_path: Path
    clean_path: Path
    scheme: str
    threshold: float
    min_tokens: int
    seed: int
    fpr_levels: list[float]
    vocab_path: Path | None = None
    embeddings_path: Path | None = None
    embeddings_format: str = "text-vec"
    inference_method: str = "embedding-average"
    window: int = 50
    attack: dict | None = None
    resources_path: Path | None = None

    degradation: dict | None = None

    @classmethod
    def from_toml(cls, manifest_path: str | Path) -> "ExperimentConfig":
        manifest_path = Path(manifest_path)
        if not manifest_path.exists():
            raise ManifestError(f"manifest {manifest_path} does not exist")
        with open(manifest_path, "rb") as f:
            try:
                doc = tomllib.load(f)
            except tomllib.TOMLDecodeError as exc:
                raise ManifestError(f"invalid manifest: {exc}") from exc

        base = manifest_path.parent

        def resolve(p: str) -> Path:
            path = Path(p)
            return path if path.is_absolute() else base / path

        try:
            artifacts = doc["artifacts"]
            corpora = doc["corpora"]
            detector = doc["detector"]
            cfg = cls(
                partition_path=resolve(artifacts["partition"]),
                watermarked_path=resolve(corpora["watermarked"]),
                clean_path=resolve(corpora["clean"]),
                scheme=detector.get("scheme", "max-z"),
                threshold=float(detector.get("threshold", 4.75)),
                min_tokens=int(detector.get("min_tokens", 10)),
                seed=int(doc.get("experiment", {}).get("seed", 0)),
                fpr_levels=[float(x) for x in doc.get("metrics", {}).get("fpr_levels", [0.01, 0.10])],
                vocab_path=resolve(artifacts["vocab"]) if "vocab" in artifacts else None,
                embeddings_path=resolve(artifacts["embeddings"]) if "embeddings" in artifacts else None,
                embeddings_format=artifacts.get("embeddings_format", "text-vec"),
                inference_method=detector.get("inference_method", "embedding-average"),
                window=int(detector.get("window", 50)),
                attack=doc.get("attack"),
                resources_path=resolve(doc["attack"]["resources"])
                if doc.get("attack", {}).get("resources")
                else None,
                degradation=doc.get("degradation"),
            )
        except KeyError as exc:
            raise ManifestError(f"manifest is missing required key {exc}") from exc

        if cfg.scheme not in ("max-z", "strict-embed", "strict-kmeans", "sliding"):
            raise ManifestError(f"unknown detector scheme {cfg.scheme!r}")
        needs_inference = cfg.scheme != "max-z"
        if needs_inference and (cfg.vocab_path is None or cfg.embeddings_path is None):
            raise ManifestError(f"scheme {cfg.scheme!r} requires vocab and embeddings artifacts")
        if cfg.attack is not None and cfg.vocab_path is None:
            raise ManifestError("attacks require the vocab artifact to round-trip words")
        if cfg.degradation is not None and cfg.vocab_path is None:
            raise ManifestError("the degradation sweep requires the vocab artifact")

        required = [cfg.partition_path, cfg.watermarked_path, cfg.clean_path]
        if cfg.vocab_path:
            required.append(cfg.vocab_path)
        if cfg.embeddings_path:
            required.append(cfg.embeddings_path)
        if cfg.resources_path:
            required.append(cfg.resources_path)
        for p in required:
            if not p.exists():
                raise ManifestError(f"referenced artifact {p} does not exist")
        return cfg


def run_experiment(
    manifest_path: str | Path, out_dir: str | Path | None = None
) -> tuple[MetricsReport, list[dict]]:
    """Drive one manifest end to end; deterministic given its seeds.

    Returns the metrics report and the raw per-document rows; with
    ``out_dir`` also writes ``metrics.json``, ``raw_log.jsonl``, and
    ``roc.csv``.
    """
    cfg = ExperimentConfig.from_toml(manifest_path)

    vocab = Vocabulary.from_file(cfg.vocab_path) if cfg.vocab_path else None
    partition = load_partition(cfg.partition_path, vocab=vocab)
    table: EmbeddingTable | None = None
    if cfg.embeddings_path:
        table = load_embeddings(cfg.embeddings_path, format=cfg.embeddings_format)

    wm_docs = read_token_docs(cfg.watermarked_path)
    clean_docs = read_token_docs(cfg.clean_path)
    if not wm_docs or not clean_docs:
        raise ManifestError("both corpora must be non-empty")

    def detect(tokens: Sequence[int]) -> DetectionReport:
        if cfg.scheme == "max-z":
            return detect_max_z(
                tokens, partition, threshold=cfg.threshold, min_tokens=cfg.min_tokens
            )
        if cfg.scheme == "sliding":
            return detect_sliding(
                tokens, partition, vocab, table,
                window_w=cfg.window, threshold=cfg.threshold, min_tokens=cfg.min_tokens,
            )
        method = "kmeans" if cfg.scheme == "strict-kmeans" else "embedding-average"
        return detect_strict(
            tokens, partition, vocab=vocab, table=table, inference_method=method,
            threshold=cfg.threshold, min_tokens=cfg.min_tokens,
        )

    resources: LexicalResources | None = None
    attack_mode = None
    attack_percent = 0.0
    attack_trials = 1
    if cfg.attack is not None:
        attack_mode = cfg.attack.get("mode", "random")
        attack_percent = float(cfg.attack.get("percent", 0.0))
        attack_trials = int(cfg.attack.get("trials", 1))
        resources = (
            LexicalResources.from_dir(cfg.resources_path)
            if cfg.resources_path
            else LexicalResources.default()
        )

    rows: list[dict] = []

    def record(doc_id: str, label: str, trial: int, report: DetectionReport, oov: int = 0):
        rows.append(
            {
                "id": doc_id,
                "label": label,
                "trial": trial,
                "scheme": report.scheme,
                "topic": report.topic_index,
                "z": report.z,
                "g": report.g,
                "n": report.n,
                "gamma": report.gamma_used,
                "verdict": report.verdict,
                "oov": oov,
            }
        )

    for i, doc in enumerate(wm_docs):
        doc_id = f"wm-{i:05d}"
        if cfg.attack is None or attack_percent == 0.0:
            record(doc_id, LABEL_WATERMARKED, 0, detect(doc))
        else:
            words = detokenize_for_inference(doc, vocab, partition.subword_marker).split()
            for trial in range(attack_trials):
                seed = derive_seed(cfg.seed, "attack", i, trial)
                plan = PerturbationPlan.for_text(len(words), attack_percent, attack_mode, seed)
                perturbed = perturb(words, plan, resources)
                ids, oov = tokenize_words(perturbed.words, vocab)
                record(doc_id, LABEL_WATERMARKED, trial, detect(ids), oov)

    for i, doc in enumerate(clean_docs):
        record(f"clean-{i:05d}", LABEL_CLEAN, 0, detect(doc))

    corpus = ScoredCorpus(
        [ScoredDoc(f"{r['id']}#{r['trial']}", r["z"], r["label"]) for r in rows]
    )
    clean_verdicts = [r["verdict"] for r in rows if r["label"] == LABEL_CLEAN]
    report = compute_metrics(corpus, fpr_levels=cfg.fpr_levels, clean_verdicts=clean_verdicts)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "metrics.json", "w", encoding="utf-8") as f:
            json.dump(report.to_dict(), f, sort_keys=True, indent=2)
            f.write("\n")
        with open(out / "raw_log.jsonl", "w", encoding="utf-8") as f:
            for r in rows:
                f.write(json.dumps(r, sort_keys=True) + "\n")
        write_roc_csv(corpus, out / "roc.csv")

    return report, rows


def run_degradation_sweep(manifest_path: str | Path, out_dir: str | Path):
    """Run the optional [degradation] sweep of a manifest and write its CSV.

    The section takes ``mode`` (random/targeted), ``levels`` (default
    5..50 step 5), ``trials`` (default 20), and optional ``resources``;
    detection follows the manifest's [detector] settings on the
    watermarked corpus. Returns the per-level stats, or None when the
    manifest has no [degradation] section.
    """
    from .attacks import DEFAULT_LEVELS, DEFAULT_TRIALS, degradation_curve

    cfg = ExperimentConfig.from_toml(manifest_path)
    if cfg.degradation is None:
        return None
    vocab = Vocabulary.from_file(cfg.vocab_path)
    partition = load_partition(cfg.partition_path, vocab=vocab)
    table = (
        load_embeddings(cfg.embeddings_path, format=cfg.embeddings_format)
        if cfg.embeddings_path
        else None
    )
    wm_docs = read_token_docs(cfg.watermarked_path)
    resources_dir = cfg.degradation.get("resources")
    resources = (
        LexicalResources.from_dir(Path(manifest_path).parent / resources_dir)
        if resources_dir
        else LexicalResources.default()
    )
    levels = [float(x) for x in cfg.degradation.get("levels", DEFAULT_LEVELS)]
    stats, _rows = degradation_curve(
        wm_docs,
        partition,
        vocab,
        resources,
        levels=levels,
        trials=int(cfg.degradation.get("trials", DEFAULT_TRIALS)),
        mode=cfg.degradation.get("mode", "random"),
        base_seed=cfg.seed,
        threshold=cfg.threshold,
        scheme="max-z" if cfg.scheme == "max-z" else cfg.scheme,
        table=table,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_degradation_csv(stats, out / "degradation.csv")
    return stats


def write_roc_csv(corpus: ScoredCorpus, path: str | Path) -> None:
    """Threshold sweep as plain CSV: threshold, fpr, tpr."""
    pos, neg = corpus.split()
    lines = ["threshold,fpr,tpr"]
    for t in sorted(set(np.concatenate([pos, neg])), reverse=True):
        fpr = float(np.sum(neg >= t)) / len(neg) if len(neg) else 0.0
        tpr = float(np.sum(pos >= t)) / len(pos) if len(pos) else 0.0
        lines.append(f"{t!r},{fpr!r},{tpr!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_degradation_csv(stats, path: str | Path) -> None:
    """Degradation curve as plain CSV: percent, mean_verdict, mean_z."""
    lines = ["percent,mean_verdict,mean_z"]
    for row in stats:
        lines.append(f"{row.percent!r},{row.mean_verdict!r},{row.mean_z!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
