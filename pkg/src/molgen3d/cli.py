"""Command-line front end.

Subcommands walk the pipeline in order: ingest -> train-lm ->
train-diffusion -> generate -> evaluate / property-mae. Two extras:
make-toy writes a synthetic corpus, init-config writes a starter config.
Exit codes: 0 ok, 2 validation failure, 3 missing prerequisite.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, RunConfig, default_document
from .pipeline import (
    PipelineError,
    Workdir,
    ingest,
    run_evaluate,
    run_generate,
    run_property_mae,
    run_stage1,
    run_stage2,
)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="run config JSON file")
    p.add_argument("--workdir", required=True, help="directory for artifacts")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="molgen3d",
        description="Train a token LM plus conditional coordinate-diffusion "
        "model over molecules and evaluate the samples.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate records, write splits + hashes")
    _add_common(p)
    p.add_argument("--dataset", default=None, help="override the config dataset path")

    p = sub.add_parser("train-lm", help="stage 1: train the token language model")
    _add_common(p)

    p = sub.add_parser(
        "train-diffusion", help="stage 2: train bridge + denoiser on frozen LM states"
    )
    _add_common(p)

    p = sub.add_parser("generate", help="sample molecules and conformers")
    _add_common(p)
    p.add_argument("-n", "--num", type=int, required=True, help="molecules to sample")
    p.add_argument("--target", type=float, default=None,
                   help="conditional property target value")
    p.add_argument("--out", default=None, help="output JSONL path")

    p = sub.add_parser("evaluate", help="score a generated set against a split")
    _add_common(p)
    p.add_argument("--generated", default=None, help="generated JSONL path")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))

    p = sub.add_parser("property-mae", help="surrogate-property MAE vs targets")
    _add_common(p)
    p.add_argument("--generated", default=None, help="generated JSONL path")
    p.add_argument("--property", default=None, help="surrogate property name")
    p.add_argument("--target", type=float, default=None, help="target value")

    p = sub.add_parser("make-toy", help="write a synthetic seeded corpus")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.add_argument("-n", "--num", type=int, default=1000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--max-heavy", type=int, default=9)
    p.add_argument("--max-tokens", type=int, default=12)
    p.add_argument("--distinct", action="store_true",
                   help="skip duplicate molecules (by canonical hash)")

    p = sub.add_parser("init-config", help="write the default config document")
    p.add_argument("--out", required=True, help="output JSON path")
    return ap


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "make-toy":
        from .data import write_jsonl
        from .toydata import make_toy_corpus

        records = make_toy_corpus(
            args.num, seed=args.seed, max_heavy=args.max_heavy,
            max_tokens=args.max_tokens, distinct=args.distinct,
        )
        write_jsonl(args.out, records, meta={"kind": "toy", "seed": args.seed,
                                             "n_records": len(records)})
        print(f"wrote {len(records)} records to {args.out}")
        return 0

    if args.command == "init-config":
        with open(args.out, "w") as fh:
            json.dump(default_document(), fh, indent=2)
            fh.write("\n")
        print(f"wrote default config to {args.out}")
        return 0

    config = RunConfig.load(args.config)
    workdir = Workdir(args.workdir)

    if args.command == "ingest":
        summary = ingest(config, workdir, dataset_path=args.dataset)
        print(
            f"ingested {summary.n_accepted} records "
            f"({summary.n_rejected} rejected); splits {summary.split_counts}"
        )
        for line_no, why in summary.rejects[:10]:
            print(f"  rejected line {line_no}: {why}")
        return 0

    if args.command == "train-lm":
        summary = run_stage1(config, workdir)
        ppl = summary["epoch_perplexities"][-1] if summary["epoch_perplexities"] else None
        print(
            f"stage 1 done: final loss {summary['final_loss']:.4f}, "
            f"train perplexity {ppl:.4f}, val perplexity {summary['val_perplexity']}"
        )
        return 0

    if args.command == "train-diffusion":
        summary = run_stage2(config, workdir)
        final = summary["epoch_losses"][-1] if summary["epoch_losses"] else None
        val = summary["val_losses"][-1] if summary["val_losses"] else None
        print(
            f"stage 2 done: final loss {final}, val loss {val}, "
            f"lm checkpoint {summary['lm_checkpoint']}, "
            f"{summary['total_params']} trained parameters"
        )
        return 0

    if args.command == "generate":
        out = run_generate(config, workdir, args.num, target=args.target,
                           out_path=args.out)
        print(f"wrote {args.num} generated records to {out}")
        return 0

    if args.command == "evaluate":
        report = run_evaluate(config, workdir, generated_path=args.generated,
                              split=args.split)
        scores = report["scores"]
        agg = report["geometry"]["aggregate"]
        print(
            "evaluation: "
            f"V&C {scores['vc']:.3f}, V&U {scores['vu']:.3f}, "
            f"V&U&N {scores['vun']:.3f}, SNN {scores['snn']:.3f}, "
            f"mmd(lengths) {agg['bond_lengths']}, mmd(angles) {agg['bond_angles']}"
        )
        print(f"report: {Workdir(args.workdir).report_path}")
        return 0

    if args.command == "property-mae":
        result = run_property_mae(
            config, workdir, generated_path=args.generated,
            property_name=args.property, targets=args.target,
        )
        print(
            f"property {result['property']}: MAE {result['mae']:.4f} over "
            f"{result['n_scored']} molecules ({result['n_failed']} oracle failures)"
        )
        return 0

    raise AssertionError(f"unhandled command {args.command!r}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
