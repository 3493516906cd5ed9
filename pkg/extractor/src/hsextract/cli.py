"""CLI: ``extract`` runs a checkpoint over document permutations and writes
bundles; ``decode-reps`` fills in answers for an existing bundle's
representative permutations."""

import argparse
import logging
import sys

from .errors import ExtractorError
from .extract import (
    DEFAULT_MAX_NEW_TOKENS,
    DEFAULT_TEMPERATURE,
    ExtractionJob,
    decode_representatives,
    extract,
    load_queries,
)


def build_parser():
    parser = argparse.ArgumentParser(prog="hsextract")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="emit one hidden-state bundle per query")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="queries JSONL")
    p.add_argument("--outdir", required=True)
    p.add_argument("--max-perms", type=int, default=None)
    p.add_argument("--decode", choices=("none", "all", "reps"), default="none")
    p.add_argument("--reps-dir", default=None,
                   help="directory of <query_id>.reps.json files for --decode reps")
    p.add_argument("--layer", default="final")
    p.add_argument("--temperature", type=float, default=DEFAULT_TEMPERATURE)
    p.add_argument("--max-new-tokens", type=int, default=DEFAULT_MAX_NEW_TOKENS)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("decode-reps", help="decode representative permutations only")
    p.add_argument("--model", default=None, help="defaults to the bundle's model_id")
    p.add_argument("--bundle", required=True)
    p.add_argument("--reps", required=True)
    p.add_argument("--max-new-tokens", type=int, default=DEFAULT_MAX_NEW_TOKENS)
    p.set_defaults(func=_cmd_decode_reps)
    return parser


def _cmd_extract(args):
    import os

    os.makedirs(args.outdir, exist_ok=True)
    job = ExtractionJob(
        model_id=args.model,
        queries=load_queries(args.input),
        layer=args.layer,
        max_permutations=args.max_perms,
        temperature=args.temperature,
        decode=args.decode,
        max_new_tokens=args.max_new_tokens,
        reps_dir=args.reps_dir,
        outdir=args.outdir,
    )
    written = extract(job)
    for path in written:
        print(path)
    if job.skipped:
        print(f"skipped {len(job.skipped)} queries: {', '.join(job.skipped)}",
              file=sys.stderr)
    return 0


def _cmd_decode_reps(args):
    decode_representatives(args.bundle, args.reps, model_id=args.model,
                           max_new_tokens=args.max_new_tokens)
    print(args.bundle)
    return 0


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ExtractorError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
