"""Command-line interface: partition, generate, detect, attack, evaluate."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .attacks import LexicalResources, PerturbationPlan, perturb
from .detection import detect_max_z, detect_sliding, detect_strict
from .embeddings import Vocabulary, load_embeddings
from .errors import TopicmarkError
from .evaluation import read_token_docs, run_degradation_sweep, run_experiment
from .generation import (
    GenerationConfig,
    NGramModel,
    SamplerSpec,
    generate,
    train_ngram,
    write_trace,
)
from .inference import TopicChoice, choose_topic, extract_keywords, load_stopwords
from .partition import (
    DEFAULT_TAU,
    DEFAULT_TOPIC_NAMES,
    TopicSet,
    build_partition,
    load_partition,
    save_partition,
)


def _cmd_embeddings_inspect(args) -> int:
    table = load_embeddings(args.file, format=args.format)
    print(f"dim: {table.dim}")
    print(f"entries: {len(table)}")
    print(f"duplicates: {table.duplicate_count}")
    return 0


def _read_topics_file(path: str, table) -> TopicSet:
    """One topic per line: a bare name looked up in the table, or name<TAB>v1 v2 ..."""
    names: list[str] = []
    rows: list[np.ndarray] = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            if "\t" in line:
                name, values = line.split("\t", 1)
                names.append(name.strip())
                rows.append(np.array([float(x) for x in values.split()], dtype=np.float64))
            else:
                name = line.strip()
                vec = table.lookup(name)
                if vec is None:
                    raise TopicmarkError(f"topic {name!r} has no embedding in the table")
                names.append(name)
                rows.append(vec)
    return TopicSet(names, np.vstack(rows))


def _cmd_partition(args) -> int:
    vocab = Vocabulary.from_file(args.vocab)
    table = load_embeddings(args.embeddings, format=args.embeddings_format)
    if args.topics:
        topics = _read_topics_file(args.topics, table)
    else:
        topics = TopicSet.from_names(DEFAULT_TOPIC_NAMES, table)
    part = build_partition(vocab, table, topics, tau=args.tau, subword_marker=args.subword_marker)
    save_partition(part, args.out)
    sizes = part.sizes()
    print(f"K={part.K} vocab={part.vocab_size} residual={part.residual_count()}")
    for name, size, gamma in zip(part.topic_names, sizes, part.gamma):
        print(f"  {name}: {size} tokens (gamma={gamma:.4f})")
    return 0


def _cmd_topics(args) -> int:
    table = load_embeddings(args.embeddings, format=args.embeddings_format)
    part = load_partition(args.partition)
    text = Path(args.text_file).read_text(encoding="utf-8")
    stops = load_stopwords(args.stopwords) if args.stopwords else None
    detected = extract_keywords(text, table, max_k=args.max_keywords, stop_words=stops)
    choice = choose_topic(detected, part.topic_set(), method=args.method)
    record = {
        "topic_index": choice.topic_index,
        "topic_name": part.topic_names[choice.topic_index],
        "method": choice.method,
        "score": choice.score,
        "keywords": [{"term": t, "relevance": r} for t, r in detected.keywords],
    }
    print(json.dumps(record, sort_keys=True))
    return 0


def _cmd_train_ngram(args) -> int:
    vocab = Vocabulary.from_file(args.vocab)
    model = train_ngram(Path(args.corpus), args.order, args.alpha, vocab)
    model.save(args.out)
    print(f"trained order-{args.order} model over {len(vocab)} tokens -> {args.out}")
    return 0


def _cmd_generate(args) -> int:
    vocab = Vocabulary.from_file(args.vocab)
    model = NGramModel.load(args.model, vocab)
    part = load_partition(args.partition, vocab=vocab)

    prompt_text = Path(args.prompt_file).read_text(encoding="utf-8")
    prompt = []
    for w in prompt_text.split():
        if w not in vocab.index:
            raise TopicmarkError(f"prompt word {w!r} is not in the vocabulary")
        prompt.append(vocab.index[w])

    if args.topic is not None:
        try:
            topic_index = int(args.topic)
        except ValueError:
            if args.topic not in part.topic_names:
                raise TopicmarkError(f"unknown topic {args.topic!r}")
            topic_index = part.topic_names.index(args.topic)
        choice = TopicChoice(topic_index, "direct-match", 1.0)
    else:
        if not args.embeddings:
            raise TopicmarkError("--embeddings is required to infer the topic from the prompt")
        table = load_embeddings(args.embeddings, format=args.embeddings_format)
        detected = extract_keywords(prompt_text, table, max_k=args.max_keywords)
        choice = choose_topic(detected, part.topic_set(), method="auto")

    cfg = GenerationConfig(
        delta=args.delta,
        max_tokens=args.max_tokens,
        length_tolerance=args.tolerance,
        sampler=SamplerSpec.parse(args.sampler),
        seed=args.seed,
        eos_token=args.eos_token,
    )
    result = generate(model, part, choice, cfg, prompt)

    out_line = " ".join(str(t) for t in result.tokens)
    if args.out:
        Path(args.out).write_text(out_line + "\n", encoding="utf-8")
    else:
        print(out_line)
    if args.trace_out:
        write_trace(result.trace, args.trace_out)
    print(
        f"topic={part.topic_names[choice.topic_index]} green={result.trace.green_count}/"
        f"{len(result.tokens)} short={result.trace.flagged_short}",
        file=sys.stderr,
    )
    return 0


def _cmd_detect(args) -> int:
    part = load_partition(args.partition)
    vocab = Vocabulary.from_file(args.vocab) if args.vocab else None
    table = (
        load_embeddings(args.embeddings, format=args.embeddings_format)
        if args.embeddings
        else None
    )
    docs = read_token_docs(args.infile)
    for i, doc in enumerate(docs):
        if args.scheme == "max-z":
            report = detect_max_z(doc, part, threshold=args.threshold, min_tokens=args.min_tokens)
        elif args.scheme == "sliding":
            report = detect_sliding(
                doc, part, vocab, table,
                window_w=args.window, threshold=args.threshold, min_tokens=args.min_tokens,
            )
        else:
            method = "kmeans" if args.scheme == "strict-kmeans" else "embedding-average"
            report = detect_strict(
                doc, part, vocab=vocab, table=table, inference_method=method,
                threshold=args.threshold, min_tokens=args.min_tokens,
                oracle_topic=args.oracle_topic,
            )
        if args.json:
            print(json.dumps({"doc": i, **report.to_dict()}, sort_keys=True))
        else:
            mark = "WATERMARKED" if report.verdict else "clean"
            print(
                f"doc {i}: {mark} z={report.z:.3f} topic={part.topic_names[report.topic_index]}"
                f" g={report.g}/{report.n}"
            )
    return 0


def _cmd_attack(args) -> int:
    resources = (
        LexicalResources.from_dir(args.resources) if args.resources else LexicalResources.default()
    )
    words = Path(args.infile).read_text(encoding="utf-8").split()
    plan = PerturbationPlan.for_text(len(words), args.percent, args.mode, args.seed)
    result = perturb(words, plan, resources)
    text = " ".join(result.words)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    print(
        f"mode={result.mode_used} edits={plan.total_edits} "
        f"(ins={plan.insertions} del={plan.deletions} sub={plan.substitutions})"
        + (" [fell back to random]" if result.fell_back_to_random else ""),
        file=sys.stderr,
    )
    return 0


def _cmd_synth(args) -> int:
    from . import synthetic
    from .embeddings import write_embeddings

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    world = synthetic.make_world(
        words_per_family=args.words_per_family, n_function=args.function_words, seed=args.seed
    )
    world.vocab.save(out / "vocab.txt")
    write_embeddings(world.table, out / "embeddings.vec")
    (out / "topics.txt").write_text("\n".join(world.topic_names[: args.topics]) + "\n")
    (out / "corpus.txt").write_text(world.corpus_text(args.corpus_tokens, seed=args.seed + 1))
    prompt = world.prompt_ids(args.prompt_family, seed=args.seed + 2)
    (out / "prompt.txt").write_text(" ".join(world.vocab.tokens[t] for t in prompt) + "\n")
    res = world.resources()
    (out / "resources").mkdir(exist_ok=True)
    (out / "resources" / "high_freq_words.txt").write_text("\n".join(res.high_freq_words) + "\n")
    (out / "resources" / "stopwords.txt").write_text("\n".join(sorted(res.stop_words)) + "\n")
    (out / "resources" / "pos_tags.tsv").write_text(
        "".join(f"{w}\t{','.join(sorted(tags))}\n" for w, tags in sorted(res.pos_lexicon.items()))
    )
    print(f"synthetic world written to {out} (vocab={len(world.vocab)}, {args.corpus_tokens} corpus tokens)")
    return 0


def _cmd_eval(args) -> int:
    report, rows = run_experiment(args.manifest, out_dir=args.out)
    print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    if args.plot:
        if not args.out:
            raise TopicmarkError("--plot needs --out to know where to write CSVs")
        # run_experiment already wrote roc.csv; add the sweep when configured.
        stats = run_degradation_sweep(args.manifest, args.out)
        if stats is not None:
            print(f"degradation sweep written ({len(stats)} levels)", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topicmark", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_emb = sub.add_parser("embeddings", help="embedding table utilities")
    emb_sub = p_emb.add_subparsers(dest="subcommand", required=True)
    p_inspect = emb_sub.add_parser("inspect", help="print dim, entry count, duplicate count")
    p_inspect.add_argument("file")
    p_inspect.add_argument("--format", default="text-vec", choices=["text-vec", "tsv"])
    p_inspect.set_defaults(func=_cmd_embeddings_inspect)

    p_part = sub.add_parser("partition", help="build a topic partition")
    p_part.add_argument("--vocab", required=True)
    p_part.add_argument("--embeddings", required=True)
    p_part.add_argument("--embeddings-format", default="text-vec", choices=["text-vec", "tsv"])
    p_part.add_argument(
        "--topics",
        default=None,
        help="file with one topic per line; defaults to " + ", ".join(DEFAULT_TOPIC_NAMES),
    )
    p_part.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p_part.add_argument("--subword-marker", default=None)
    p_part.add_argument("--out", required=True)
    p_part.set_defaults(func=_cmd_partition)

    p_topics = sub.add_parser("topics", help="infer the topic of a text")
    p_topics.add_argument("--text-file", required=True)
    p_topics.add_argument("--partition", required=True)
    p_topics.add_argument("--embeddings", required=True)
    p_topics.add_argument("--embeddings-format", default="text-vec", choices=["text-vec", "tsv"])
    p_topics.add_argument("--method", default="auto", choices=["auto", "embedding-average", "kmeans"])
    p_topics.add_argument("--max-keywords", type=int, default=5)
    p_topics.add_argument("--stopwords", default=None)
    p_topics.set_defaults(func=_cmd_topics)

    p_train = sub.add_parser("train-ngram", help="train the toy n-gram model")
    p_train.add_argument("--corpus", required=True)
    p_train.add_argument("--order", type=int, default=3)
    p_train.add_argument("--alpha", type=float, default=0.001)
    p_train.add_argument("--vocab", required=True)
    p_train.add_argument("--out", required=True)
    p_train.set_defaults(func=_cmd_train_ngram)

    p_gen = sub.add_parser("generate", help="generate watermarked text")
    p_gen.add_argument("--model", required=True)
    p_gen.add_argument("--vocab", required=True)
    p_gen.add_argument("--partition", required=True)
    p_gen.add_argument("--prompt-file", required=True)
    p_gen.add_argument("--embeddings", default=None, help="needed to infer the topic from the prompt")
    p_gen.add_argument("--embeddings-format", default="text-vec", choices=["text-vec", "tsv"])
    p_gen.add_argument("--topic", default=None, help="force a topic index or name (oracle mode)")
    p_gen.add_argument("--delta", type=float, default=2.0)
    p_gen.add_argument("--sampler", default="top-k:50")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--max-tokens", type=int, default=200)
    p_gen.add_argument("--tolerance", type=int, default=5)
    p_gen.add_argument("--eos-token", type=int, default=None)
    p_gen.add_argument("--max-keywords", type=int, default=5)
    p_gen.add_argument("--out", default=None)
    p_gen.add_argument("--trace-out", default=None)
    p_gen.set_defaults(func=_cmd_generate)

    p_det = sub.add_parser("detect", help="detect the watermark in token documents")
    p_det.add_argument("--scheme", default="max-z",
                       choices=["max-z", "strict-embed", "strict-kmeans", "sliding"])
    p_det.add_argument("--partition", required=True)
    p_det.add_argument("--in", dest="infile", required=True)
    p_det.add_argument("--vocab", default=None)
    p_det.add_argument("--embeddings", default=None)
    p_det.add_argument("--embeddings-format", default="text-vec", choices=["text-vec", "tsv"])
    p_det.add_argument("--threshold", type=float, default=4.75)
    p_det.add_argument("--min-tokens", type=int, default=10)
    p_det.add_argument("--window", type=int, default=50)
    p_det.add_argument("--oracle-topic", type=int, default=None)
    p_det.add_argument("--json", action="store_true")
    p_det.set_defaults(func=_cmd_detect)

    p_att = sub.add_parser("attack", help="apply a lexical perturbation attack to a text file")
    p_att.add_argument("--mode", default="random", choices=["random", "targeted"])
    p_att.add_argument("--percent", type=float, required=True)
    p_att.add_argument("--seed", type=int, default=0)
    p_att.add_argument("--in", dest="infile", required=True)
    p_att.add_argument("--resources", default=None, help="resource directory; package defaults otherwise")
    p_att.add_argument("--out", default=None)
    p_att.set_defaults(func=_cmd_attack)

    p_synth = sub.add_parser("synth", help="write a synthetic desk-scale world for demos")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--words-per-family", type=int, default=44)
    p_synth.add_argument("--function-words", type=int, default=672)
    p_synth.add_argument("--topics", type=int, default=4)
    p_synth.add_argument("--corpus-tokens", type=int, default=160_000)
    p_synth.add_argument("--prompt-family", type=int, default=0)
    p_synth.add_argument("--seed", type=int, default=83)
    p_synth.set_defaults(func=_cmd_synth)

    p_eval = sub.add_parser("eval", help="run an experiment manifest")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--out", default=None)
    p_eval.add_argument("--plot", action="store_true",
                        help="also write ROC and degradation curve CSVs to --out")
    p_eval.set_defaults(func=_cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (TopicmarkError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
