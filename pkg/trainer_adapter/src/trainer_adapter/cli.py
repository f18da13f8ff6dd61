"""Command-line entry points: export-igs and emit-dataset."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dataset import emit_masked_dataset
from .export import ExportJob, export_igs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="segsel-adapter")
    sub = parser.add_subparsers(dest="cmd", required=True)

    exp = sub.add_parser("export-igs", help="write an attribution dump from a causal LM")
    exp.add_argument("--model", required=True, help="model path or hub id")
    exp.add_argument("--corpus", required=True, type=Path)
    exp.add_argument("--out", required=True, type=Path)
    exp.add_argument("--steps", type=int, default=50)
    exp.add_argument("--tokenizer", default="byte-v1")
    exp.add_argument("--device", default="cpu")
    exp.add_argument("--batch-steps", type=int, default=10)
    exp.add_argument("--keyword-profile", default="paper-main")

    emit = sub.add_parser("emit-dataset", help="write a training-ready dataset")
    emit.add_argument("--corpus", required=True, type=Path)
    emit.add_argument("--out", required=True, type=Path)
    emit.add_argument("--masks", type=Path)
    emit.add_argument("--mode", choices=("selective", "pruned"), default="selective")
    emit.add_argument("--tokenizer", default="byte-v1")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.cmd == "export-igs":
        job = ExportJob(
            model=args.model, corpus=args.corpus, out=args.out, steps=args.steps,
            tokenizer=args.tokenizer, device=args.device, batch_steps=args.batch_steps,
            keyword_profile=args.keyword_profile,
        )
        summary = export_igs(job)
        print(json.dumps(summary))
        return 0
    report = emit_masked_dataset(
        corpus=args.corpus, out=args.out, masks=args.masks,
        mode=args.mode, tokenizer=args.tokenizer,
    )
    print(json.dumps({"examples": report["examples"], "mismatches": len(report["mismatches"])}))
    return 0 if not report["mismatches"] else 1


if __name__ == "__main__":
    sys.exit(main())
