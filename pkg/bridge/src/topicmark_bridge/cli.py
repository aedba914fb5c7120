"""topicmark-bridge: serve a model as a remote logit provider."""

from __future__ import annotations

import argparse
import sys

from .models import load_model
from .server import serve_stdio, serve_tcp


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topicmark-bridge", description=__doc__)
    parser.add_argument(
        "--model",
        required=True,
        help="stub:onehot:<vocab> | stub:hash:<vocab>[:<seed>] | ngram:<model.json>:<vocab.txt> | hf:<checkpoint>",
    )
    parser.add_argument(
        "--transport",
        default="stdio",
        help="'stdio' or 'tcp:<port>' (optionally 'tcp:<host>:<port>')",
    )
    parser.add_argument(
        "--keywords", action="store_true", help="advertise the keyword-extraction capability"
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        model = load_model(args.model)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if args.transport == "stdio":
        serve_stdio(model, enable_keywords=args.keywords)
        return 0
    if args.transport.startswith("tcp:"):
        parts = args.transport.split(":")
        if len(parts) == 2:
            host, port = "127.0.0.1", int(parts[1])
        elif len(parts) == 3:
            host, port = parts[1], int(parts[2])
        else:
            print(f"error: bad transport {args.transport!r}", file=sys.stderr)
            return 1
        print(f"serving {model.model_name} on {host}:{port}", file=sys.stderr)
        serve_tcp(model, host, port, enable_keywords=args.keywords)
        return 0
    print(f"error: unknown transport {args.transport!r}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    raise SystemExit(main())
