"""Acceptance suite: one test per release criterion, tolerances pinned.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line
per criterion. Every computation is seeded, so results are identical
across runs.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from topicmark import (
    GenerationConfig,
    SamplerSpec,
    ScoredCorpus,
    ScoredDoc,
    Vocabulary,
    best_f1,
    build_partition,
    degradation_curve,
    detect_max_z,
    detect_strict,
    generate,
    load_partition,
    roc_auc,
    save_partition,
    tpr_at_fpr,
    z_score,
)
from topicmark.embeddings import EmbeddingTable
from topicmark.inference import TopicChoice
from topicmark.partition import PROVENANCE_ROUND_ROBIN, TopicSet
from topicmark.synthetic import balanced_partition

from oracles import brute_auc, brute_best_f1, brute_tpr_at_fpr

NULL_TRIALS = 10_000
NULL_DOC_LEN = 200
NULL_VOCAB = 1000


@pytest.fixture(scope="module")
def null_world():
    """Balanced K=4 partition and 10,000 uniform-random 200-token streams."""
    part, vocab = balanced_partition(NULL_VOCAB, K=4)
    rng = np.random.default_rng(20260101)
    streams = rng.integers(0, NULL_VOCAB, size=(NULL_TRIALS, NULL_DOC_LEN))
    return part, streams


def test_null_z_calibration(null_world):
    """Criterion: single-list null z has mean in [-0.05, 0.05], sd in [0.95, 1.05]; < 1 min."""
    t0 = time.perf_counter()
    part, streams = null_world
    mask = part.membership(0)
    greens = mask[streams].sum(axis=1)
    gamma = float(part.gamma[0])
    assert gamma == 0.25

    zs = np.array([z_score(int(g), NULL_DOC_LEN, gamma) for g in greens])
    mean, sd = float(np.mean(zs)), float(np.std(zs, ddof=1))
    elapsed = time.perf_counter() - t0

    assert -0.05 <= mean <= 0.05, f"null z mean {mean:.4f} outside [-0.05, 0.05]"
    assert 0.95 <= sd <= 1.05, f"null z sd {sd:.4f} outside [0.95, 1.05]"
    assert elapsed < 60.0, f"null calibration took {elapsed:.1f}s"
    print(f"\nACCEPTANCE null-z-calibration: PASS (mean={mean:+.4f}, sd={sd:.4f}, {elapsed:.1f}s)")


def test_max_z_null_mean_and_fpr(null_world):
    """Criterion: max-z null mean within ±0.05 of the Monte-Carlo oracle; FPR@4.75 < 0.001."""
    part, streams = null_world
    gammas = part.gamma
    assert np.allclose(gammas, 0.25)

    # detector-path max-z for every stream (vectorized membership, same masks
    # the detector uses; spot-checked against the public API below)
    per_list = np.stack([part.membership(k)[streams].sum(axis=1) for k in range(4)])
    z_all = (per_list - 0.25 * NULL_DOC_LEN) / np.sqrt(NULL_DOC_LEN * 0.25 * 0.75)
    max_z = z_all.max(axis=0)

    for i in range(0, 500, 50):  # tie the fast path to the real detector
        report = detect_max_z(streams[i].tolist(), part, threshold=4.75)
        assert report.z == pytest.approx(float(max_z[i]), abs=1e-9)

    # independent Monte-Carlo oracle: multinomial green counts, 100k trials
    rng = np.random.default_rng(775533)
    counts = rng.multinomial(NULL_DOC_LEN, [0.25] * 4, size=100_000)
    oracle_z = (counts - 0.25 * NULL_DOC_LEN) / np.sqrt(NULL_DOC_LEN * 0.25 * 0.75)
    oracle_mean = float(oracle_z.max(axis=1).mean())

    mean_max = float(np.mean(max_z))
    fpr = float(np.mean(max_z > 4.75))
    assert abs(mean_max - oracle_mean) <= 0.05, f"max-z mean {mean_max:.3f} vs oracle {oracle_mean:.3f}"
    assert fpr < 0.001, f"null FPR at 4.75 was {fpr}"
    print(
        f"\nACCEPTANCE max-z-null: PASS (mean={mean_max:.3f}, oracle={oracle_mean:.3f}, FPR={fpr:.5f})"
    )


def test_end_to_end_watermark_detectability(world, corpus_text, model, part4, wm500):
    """Criterion: 200 generations at delta=3, tau=0.7, K=4 -> max-z detection >= 0.95 at 4.75,
    oracle-topic strict within 2 percentage points; corpus >= 1 MB; < 5 minutes."""
    assert len(corpus_text.encode("utf-8")) >= 1_000_000, "training corpus must be at least 1 MB"
    assert model.order == 3

    t0 = time.perf_counter()
    docs, topics = wm500.docs[:200], wm500.topics[:200]
    max_z_hits = sum(detect_max_z(d, part4, threshold=4.75).verdict for d in docs)
    strict_hits = sum(
        detect_strict(d, part4, oracle_topic=t, threshold=4.75).verdict
        for d, t in zip(docs, topics)
    )
    detect_seconds = time.perf_counter() - t0
    elapsed = wm500.seconds_first_200 + detect_seconds

    max_z_rate = max_z_hits / 200
    strict_rate = strict_hits / 200
    assert max_z_rate >= 0.95, f"max-z detection rate {max_z_rate:.3f} < 0.95"
    assert abs(strict_rate - max_z_rate) <= 0.02, (
        f"oracle strict {strict_rate:.3f} vs max-z {max_z_rate:.3f} differ by more than 2pp"
    )
    assert elapsed < 300.0, f"end-to-end run took {elapsed:.1f}s"
    print(
        f"\nACCEPTANCE end-to-end: PASS (max-z={max_z_rate:.3f}, oracle-strict={strict_rate:.3f}, "
        f"{elapsed:.1f}s incl. generation)"
    )


def test_delta_monotonicity(world, model, part4):
    """Criterion: mean green fraction strictly increases over delta in {0,1,2,3,5} (100 seeds)."""
    fractions = []
    for delta in (0.0, 1.0, 2.0, 3.0, 5.0):
        shares = []
        for i in range(100):
            fam = i % 4
            prompt = world.prompt_ids(fam, seed=500 + i)
            cfg = GenerationConfig(delta=delta, max_tokens=200, seed=6000 + i, sampler=SamplerSpec())
            result = generate(model, part4, TopicChoice(fam, "direct-match", 1.0), cfg, prompt)
            shares.append(result.trace.green_fraction)
        fractions.append(float(np.mean(shares)))
    assert all(a < b for a, b in zip(fractions, fractions[1:])), (
        f"green fraction not strictly increasing: {fractions}"
    )
    print(
        "\nACCEPTANCE delta-monotonicity: PASS ("
        + " -> ".join(f"{f:.3f}" for f in fractions)
        + ")"
    )


def test_degradation_curve_shape(world, model, part4, wm500):
    """Criterion: 5%..50% sweeps (step 5, 20 trials) give non-increasing mean z for both
    modes, targeted <= random at every level >= 20%; < 10 minutes."""
    t0 = time.perf_counter()
    samples = wm500.docs[:40]
    topics = wm500.topics[:40]
    levels = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0]
    curves = {}
    for mode in ("random", "targeted"):
        stats, _rows = degradation_curve(
            samples, part4, world.vocab, world.resources(),
            levels=levels, trials=20, mode=mode, base_seed=77,
            scheme="strict-oracle", oracle_topics=topics, threshold=4.75,
        )
        zs = [s.mean_z for s in stats]
        assert all(a >= b for a, b in zip(zs, zs[1:])), f"{mode} mean z not non-increasing: {zs}"
        curves[mode] = zs
    for level, rz, tz in zip(levels, curves["random"], curves["targeted"]):
        if level >= 20.0:
            assert tz <= rz, f"targeted ({tz:.2f}) degraded slower than random ({rz:.2f}) at {level}%"
    elapsed = time.perf_counter() - t0
    assert elapsed < 600.0, f"degradation sweep took {elapsed:.1f}s"
    print(
        f"\nACCEPTANCE degradation-curve: PASS (random {curves['random'][0]:.1f}->"
        f"{curves['random'][-1]:.1f}, targeted {curves['targeted'][0]:.1f}->"
        f"{curves['targeted'][-1]:.1f}, {elapsed:.0f}s)"
    )


def test_metric_oracles():
    """Criterion: roc_auc, best_f1, tpr_at_fpr match brute force on 50 randomized corpora, 1e-12."""
    rng = np.random.default_rng(424242)
    for trial in range(50):
        n = int(rng.integers(10, 201))
        n_pos = int(rng.integers(1, n))
        # integer-ish score grid forces plenty of ties
        scores = np.round(rng.normal(0, 3, size=n), 0)
        scores[:n_pos] += rng.integers(0, 4)
        pos = scores[:n_pos].tolist()
        neg = scores[n_pos:].tolist()
        corpus = ScoredCorpus(
            [ScoredDoc(f"p{i}", s, "watermarked") for i, s in enumerate(pos)]
            + [ScoredDoc(f"n{i}", s, "clean") for i, s in enumerate(neg)]
        )
        assert roc_auc(corpus) == pytest.approx(brute_auc(pos, neg), abs=1e-12)
        assert best_f1(corpus)[0] == pytest.approx(brute_best_f1(pos, neg), abs=1e-12)
        for level in (0.01, 0.10, 0.25):
            assert tpr_at_fpr(corpus, level) == pytest.approx(
                brute_tpr_at_fpr(pos, neg, level), abs=1e-12
            )
    print("\nACCEPTANCE metric-oracles: PASS (50 corpora, exact to 1e-12)")


def _check_partition_properties(vocab, table, topics, taus):
    previous_residual: set[int] = set()
    for tau in taus:
        part = build_partition(vocab, table, topics, tau=tau)
        covered = sorted(int(t) for lst in part.lists for t in lst)
        assert covered == list(range(len(vocab))), "disjoint cover violated"
        rr_sizes = [
            int(np.sum(part.provenance[lst] == PROVENANCE_ROUND_ROBIN)) for lst in part.lists
        ]
        assert max(rr_sizes) - min(rr_sizes) <= 1, "round-robin balance violated"
        residual = {
            int(i) for i in range(len(vocab)) if part.provenance[i] == PROVENANCE_ROUND_ROBIN
        }
        assert previous_residual.issubset(residual), "raising tau shrank the residual set"
        previous_residual = residual
        for size, gamma in zip(part.sizes(), part.gamma):
            # gamma must be the correctly rounded float of the exact rational size/|V|
            assert float(gamma) == float(Fraction(size, len(vocab)))
    return part


def test_partition_properties(stub_vocab, stub_table, stub_topics, tmp_path):
    """Criterion: disjoint-cover, round-robin balance, tau-monotone residual, and
    save/load round trip on the stub vocabulary and a 50k synthetic vocabulary."""
    taus = [x / 10 for x in range(1, 10)]
    _check_partition_properties(stub_vocab, stub_table, stub_topics, taus)

    # 50,000-token synthetic vocabulary with mixed alignment strengths
    rng = np.random.default_rng(1313)
    n, dim, K = 50_000, 8, 4
    mat = np.zeros((n, dim))
    axes = rng.integers(0, K, size=n)
    mat[np.arange(n), axes] = 1.0
    noise = rng.standard_normal((n, dim - K))
    noise /= np.linalg.norm(noise, axis=1, keepdims=True)
    mat[:, K:] = noise * rng.uniform(0.1, 2.0, size=(n, 1))
    tokens = [f"tok{i:05d}" for i in range(n)]
    entries = {tok: mat[i] for i, tok in enumerate(tokens)}
    for k in range(K):
        vec = np.zeros(dim)
        vec[k] = 1.0
        entries[f"axis{k}"] = vec
    big_table = EmbeddingTable(dim, entries)
    big_vocab = Vocabulary(tokens)
    big_topics = TopicSet.from_names([f"axis{k}" for k in range(K)], big_table)

    part = _check_partition_properties(big_vocab, big_table, big_topics, taus)

    path = tmp_path / "big.tmk"
    save_partition(part, path)
    loaded = load_partition(path, vocab=big_vocab)
    assert loaded == part
    print(f"\nACCEPTANCE partition-properties: PASS (stub + {n}-token vocabulary, 9 tau levels)")


def test_k_scaling(world, model):
    """Criterion: K=32 vs K=4 max-z wall-clock ratio in [2, 12]; watermarked mean z
    non-increasing in K."""
    from topicmark import scaling_study

    partitions = [world.partition(K, tau=0.5) for K in (4, 8, 16, 32)]
    samples = {}
    for part in partitions:
        K = part.K
        docs = []
        for i in range(100):
            fam = i % K
            prompt = world.prompt_ids(fam, seed=7000 + i)
            cfg = GenerationConfig(
                delta=2.0, max_tokens=200, seed=9000 + K * 1000 + i, sampler=SamplerSpec()
            )
            result = generate(model, part, TopicChoice(fam, "direct-match", 1.0), cfg, prompt)
            docs.append(result.tokens)
        samples[K] = docs

    rows = scaling_study(partitions, samples, threshold=4.75, repetitions=10, warmup=2)
    by_k = {row.K: row for row in rows}

    z_means = [by_k[K].z_mean for K in (4, 8, 16, 32)]
    assert all(a >= b for a, b in zip(z_means, z_means[1:])), (
        f"watermarked mean z not non-increasing in K: {z_means}"
    )

    ratio = by_k[32].seconds_mean / by_k[4].seconds_mean
    assert 2.0 <= ratio <= 12.0, f"K=32/K=4 detection time ratio {ratio:.2f} outside [2, 12]"
    print(
        "\nACCEPTANCE k-scaling: PASS (z "
        + " -> ".join(f"{z:.2f}" for z in z_means)
        + f"; time ratio {ratio:.2f})"
    )


def test_delta_zero_identity(world, model, part4):
    """Criterion: delta=0 reproduces the unwatermarked sequence bit-exactly for 100 seeds."""
    for i in range(100):
        fam = i % 4
        prompt = world.prompt_ids(fam, seed=300 + i)
        cfg = GenerationConfig(delta=0.0, max_tokens=50, seed=400 + i, sampler=SamplerSpec())
        watermarked = generate(model, part4, TopicChoice(fam, "direct-match", 1.0), cfg, prompt)
        plain = generate(model, None, None, cfg, prompt)
        assert watermarked.tokens == plain.tokens, f"sequences diverged for seed {400 + i}"
    print("\nACCEPTANCE delta-zero-identity: PASS (100 seeds, bit-exact)")
