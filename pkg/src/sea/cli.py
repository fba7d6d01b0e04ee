"""Command-line surface tying the pipeline together.

Subcommands: gen-synth, label, pretrain, audit, gradcheck, report.  Every run
prints its fully resolved configuration first so logs are self-describing.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import audit as audit_mod
from . import gradcheck as gradcheck_mod
from .adapter import adapter_forward
from .config import env_seed, load_pretrain_config, resolved_config_dict
from .errors import SeaError
from .labeling import extract_with_candidates, save_label_cache, vocabulary_usage_report
from .synth import Corpus, SyntheticCorpusSpec, generate_synthetic_corpus, load_corpus, save_corpus
from .tensorfile import load_tensors
from .toylm import word_feature_matrix
from .trainer import load_checkpoint, run_pretraining


def _print_config(command: str, settings: dict) -> None:
    print(f"config {command} " + json.dumps(settings, sort_keys=True, default=str))


def _resolve_seed(flag_value) -> int:
    if flag_value is not None:
        return flag_value
    fallback = env_seed()
    return 0 if fallback is None else fallback


def cmd_gen_synth(args) -> int:
    spec = SyntheticCorpusSpec(
        vocab_size=args.vocab_size,
        d_v=args.d_v,
        d_llm=args.d_llm,
        grid_height=args.grid_height,
        grid_width=args.grid_width,
        images=args.images,
        noise_sigma=args.noise_sigma,
        seed=_resolve_seed(args.seed),
    )
    _print_config("gen-synth", {"out": args.out, **spec.__dict__})
    corpus = generate_synthetic_corpus(spec)
    save_corpus(corpus, args.out)
    print(f"wrote corpus with {spec.images} images to {args.out}")
    return 0


def _label_corpus(corpus: Corpus, top_n: int, negate: bool):
    all_sets, all_raw = [], []
    per_image = []
    for grid in corpus.grids:
        sets, raw = extract_with_candidates(
            grid.features, corpus.word_label_features, n=top_n, negate=negate
        )
        per_image.append(sets)
        all_sets.extend(sets)
        all_raw.extend(raw)
    report = vocabulary_usage_report(all_sets, all_raw, corpus.word_list)
    return per_image, report


def cmd_label(args) -> int:
    _print_config("label", {"corpus": args.corpus, "out": args.out, "top_n": args.top_n, "negate": args.negate})
    corpus = load_corpus(args.corpus)
    per_image, report = _label_corpus(corpus, args.top_n, args.negate)
    out = Path(args.out)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    for grid, sets in zip(corpus.grids, per_image):
        save_label_cache(out / "labels" / f"image_{grid.image_id:05d}.jsonl", sets)
    payload = report.to_dict()
    payload["word_list_sha256"] = corpus.word_list.sha256()
    payload["top_n"] = args.top_n
    payload["negate"] = args.negate
    (out / "usage_report.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(
        f"labeled {len(corpus.grids)} images: utilization {report.utilization_rate:.3f}, "
        f"below-zero {report.below_zero_fraction:.3f}"
    )
    return 0


def cmd_pretrain(args) -> int:
    config, paths = load_pretrain_config(args.config)
    _print_config("pretrain", resolved_config_dict(config, paths))
    corpus = load_corpus(paths["corpus"])
    state, final = run_pretraining(
        config, corpus, paths["out"], resume_from=args.resume
    )
    print(f"finished at step {state.step}, final checkpoint {final}")
    return 0


def _infer_arch(tensors: dict) -> str:
    return "mlp2" if "params.w2" in tensors else "linear"


def cmd_audit(args) -> int:
    _print_config(
        "audit",
        {"corpus": args.corpus, "checkpoint": args.checkpoint, "out": args.out,
         "csv": args.csv, "histogram": args.histogram, "seed": args.seed},
    )
    corpus = load_corpus(args.corpus)
    arch = _infer_arch(load_tensors(args.checkpoint))
    state = load_checkpoint(args.checkpoint, arch)
    params = state.adapter_params()

    tokens = []
    ids = []
    gt = []
    for grid, truth in zip(corpus.grids, corpus.ground_truth):
        visual = adapter_forward(params, grid.features)
        tokens.append(visual.data)
        ids.extend((grid.image_id, p) for p in range(grid.features.rows))
        gt.extend(truth)
    word_features = word_feature_matrix(corpus.word_list.words, corpus.tokenizer, corpus.table)
    report = audit_mod.audit_visual_tokens(
        np.concatenate(tokens, axis=0),
        word_features,
        ground_truth=gt,
        image_ids=ids,
        metadata={
            "checkpoint": Path(args.checkpoint).name,
            "seed": args.seed,
            "word_list_sha256": corpus.word_list.sha256(),
            "adapter_arch": arch,
        },
    )
    report.save_json(args.out)
    if args.csv:
        report.save_csv(args.csv)
    if args.histogram:
        report.save_histogram_txt(args.histogram)
    print(f"audited {len(report.records)} tokens, top-1 recall {report.top1_accuracy:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    _print_config("gradcheck", {"seed": _resolve_seed(args.seed), "instances": args.instances})
    result = gradcheck_mod.run_suite(seed=_resolve_seed(args.seed), instances=args.instances)
    for key in sorted(result["errors"]):
        print(f"{key:32s} max relative error {result['errors'][key]:.3e}")
    if not result["passed"]:
        print("FAILED: " + ", ".join(result["failures"]), file=sys.stderr)
        return 1
    print("all gradient checks passed")
    return 0


def cmd_report(args) -> int:
    _print_config("report", {"input": args.input, "out": args.out})
    data = json.loads(Path(args.input).read_text(encoding="utf-8"))
    counts = data.get("histogram_counts")
    edges = data.get("histogram_edges")
    if counts is None or edges is None:
        raise SeaError(f"{args.input}: no histogram_counts/histogram_edges fields")
    centers = [(edges[i] + edges[i + 1]) / 2.0 for i in range(len(counts))]
    lines = ["# bin_center count"]
    lines += [f"{c:.6f} {int(n)}" for c, n in zip(centers, counts)]
    Path(args.out).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    peak = max(max(counts), 1)
    for c, n in zip(centers, counts):
        bar = "#" * int(round(40 * n / peak))
        print(f"{c:8.3f} {n:8d} {bar}")
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sea", description="Patch labeling, adapter pre-training, and embedding audits."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-size", type=int, default=50)
    p.add_argument("--d-v", type=int, default=32)
    p.add_argument("--d-llm", type=int, default=64)
    p.add_argument("--grid-height", type=int, default=8)
    p.add_argument("--grid-width", type=int, default=8)
    p.add_argument("--images", type=int, default=200)
    p.add_argument("--noise-sigma", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("label", help="extract per-patch semantic labels")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--negate", action="store_true")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("pretrain", help="run stage-1 adapter training from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", default=None)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("audit", help="recalled-word audit of a checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None)
    p.add_argument("--histogram", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--instances", type=int, default=20)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="render a stored histogram as text")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SeaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
