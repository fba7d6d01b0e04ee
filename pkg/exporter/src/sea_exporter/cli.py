"""sea-export: dump encoder features into the training pipeline's formats.

Subcommands mirror the training CLI's flag naming (--out, --seed,
--word-list).  Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ExporterError
from .exports import export_llm_embedding_rows, export_vision_features, export_word_features
from .manifest import load_word_list
from .models import SEEDED_CLIP, SEEDED_LLM, load_llm_embeddings, load_vision_text_encoder


def _print_config(command: str, settings: dict) -> None:
    print(f"config {command} " + json.dumps(settings, sort_keys=True, default=str))


def cmd_vision(args) -> int:
    _print_config("vision", {k: v for k, v in vars(args).items() if k != "func"})
    words = load_word_list(args.word_list) if args.word_list else []
    encoder = load_vision_text_encoder(
        args.model, words, seed=args.seed, revision=args.revision
    )
    manifest = export_vision_features(args.images, encoder, args.out)
    print(f"wrote {len(manifest.dims)} patch grids to {manifest.outputs['tensors']}")
    return 0


def cmd_words(args) -> int:
    _print_config("words", {k: v for k, v in vars(args).items() if k != "func"})
    words = load_word_list(args.word_list)
    encoder = load_vision_text_encoder(
        args.model, words, seed=args.seed, revision=args.revision
    )
    manifest = export_word_features(words, encoder, args.out)
    print(f"wrote {manifest.dims['word_features']} word features to {manifest.outputs['tensors']}")
    return 0


def cmd_llm(args) -> int:
    _print_config("llm-embeddings", {k: v for k, v in vars(args).items() if k != "func"})
    words = load_word_list(args.word_list)
    llm = load_llm_embeddings(args.model, words, seed=args.seed, revision=args.revision)
    manifest = export_llm_embedding_rows(words, llm, args.out)
    print(f"wrote {manifest.dims['token_embeddings']} token rows to {manifest.outputs['tensors']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sea-export",
        description="Dump pretrained-model features into the sea tensor format.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vision", help="per-patch features for a set of images")
    p.add_argument("--images", nargs="+", required=True)
    p.add_argument("--model", default=SEEDED_CLIP)
    p.add_argument("--word-list", default=None,
                   help="required for seeded models (their tokenizer trains on it)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--revision", default=None)
    p.set_defaults(func=cmd_vision)

    p = sub.add_parser("words", help="text-encoder features for a word list")
    p.add_argument("--word-list", required=True)
    p.add_argument("--model", default=SEEDED_CLIP)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--revision", default=None)
    p.set_defaults(func=cmd_words)

    p = sub.add_parser("llm-embeddings", help="LLM input-embedding rows for a word list")
    p.add_argument("--word-list", required=True)
    p.add_argument("--model", default=SEEDED_LLM)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--revision", default=None)
    p.set_defaults(func=cmd_llm)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ExporterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
