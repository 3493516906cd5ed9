"""Command-line surface tying the pipeline together.

Subcommands: ``synth`` (generate a labeled bundle), ``cluster`` (bundle ->
partition JSON), ``represent`` (partition -> representatives JSON), ``prefs``
(representatives + manifest -> preference JSONL), ``metrics``, ``psr``,
``dpo-loss`` and ``project`` (PCA coordinates CSV).

Exit codes: 0 success, 1 validation error, 2 I/O error. All randomness flows
from the configured seed; the PERMSTAB_SEED environment variable overrides
the built-in default of 42, and an explicit --seed wins over both.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import bundle_io, dpo, metrics, modes, prefs, synth
from .errors import IoFailure, ValidationError

DEFAULT_SEED = 42
SEED_ENV_VAR = "PERMSTAB_SEED"


@dataclass
class RunConfig:
    sigma: float | None = None
    seed: int = DEFAULT_SEED
    beta: float = dpo.DEFAULT_BETA
    abstention: str = metrics.ABSTENTION
    exhaustive: bool = False


def default_seed():
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ValidationError(f"{SEED_ENV_VAR}={env!r} is not an integer") from exc
    return DEFAULT_SEED


def config_from_args(args):
    return RunConfig(
        sigma=getattr(args, "sigma", None),
        seed=getattr(args, "seed", default_seed()),
        beta=getattr(args, "beta", dpo.DEFAULT_BETA),
        exhaustive=getattr(args, "exhaustive", False),
    )


def _cmd_synth(args):
    weights = None
    if args.weights:
        weights = tuple(float(w) for w in args.weights.split(","))
    spec = synth.SynthSpec(
        true_modes=args.modes,
        dim=args.dim,
        n_states=args.n,
        noise_std=args.noise,
        size_weights=weights,
        seed=args.seed,
    )
    labeled = synth.generate(spec)
    bundle_io.write_bundle(labeled.bundle, args.out)
    bundle_io.write_canonical_json(
        {
            "query_id": labeled.bundle.query_id,
            "true_labels": [int(v) for v in labeled.true_labels],
            "true_modes": spec.true_modes,
        },
        args.out + ".labels.json",
    )
    print(args.out)
    return 0


def _cmd_cluster(args):
    config = config_from_args(args)
    bundle = bundle_io.read_bundle(args.bundle)
    partition = modes.cluster_permutations(bundle, sigma=config.sigma, seed=config.seed)
    bundle_io.write_partition(partition, bundle.query_id, args.out)
    print(args.out)
    return 0


def _cmd_represent(args):
    bundle = bundle_io.read_bundle(args.bundle)
    query_id, partition = bundle_io.read_partition(args.partition)
    if query_id != bundle.query_id:
        raise ValidationError(
            f"partition belongs to {query_id!r}, bundle is {bundle.query_id!r}"
        )
    reps = modes.representatives(partition, bundle)
    bundle_io.write_representatives(reps, bundle.query_id, args.out)
    print(args.out)
    return 0


def _cmd_prefs(args):
    bundle = bundle_io.read_bundle(args.bundle)
    query_id, partition = bundle_io.read_partition(args.partition)
    if query_id != bundle.query_id:
        raise ValidationError(
            f"partition belongs to {query_id!r}, bundle is {bundle.query_id!r}"
        )
    _, reps = bundle_io.read_representatives(args.reps)
    config = config_from_args(args)
    if config.exhaustive and not bundle.has_full_answers():
        raise ValidationError("--exhaustive needs a decoded answer for every permutation")
    tuples = prefs.build_preferences_for_bundle(
        partition, reps, bundle, per_representative=args.per_representative
    )
    bundle_io.write_preferences(tuples, args.out)
    print(args.out)
    return 0


def _cmd_metrics(args):
    preds = {}
    for rec in bundle_io.read_jsonl(args.pred):
        preds[rec["query_id"]] = rec["prediction"]
    golds = {}
    for rec in bundle_io.read_jsonl(args.gold):
        golds[rec["query_id"]] = rec["gold_answers"]
    if set(preds) != set(golds):
        raise ValidationError("prediction and gold files cover different query ids")
    if not preds:
        raise ValidationError("no examples to score")
    subem_values = []
    f1_values = []
    for query_id in golds:
        subem_values.append(metrics.sub_em(preds[query_id], golds[query_id]))
        f1_values.append(metrics.token_f1(preds[query_id], golds[query_id]))
    report = {
        "f1": float(np.mean(f1_values)),
        "n": len(golds),
        "subem": float(np.mean(subem_values)),
    }
    print(bundle_io.dumps_canonical(report))
    return 0


def _cmd_psr(args):
    outcomes = [
        metrics.PermutationOutcome(
            gold_position=int(rec["gold_position"]),
            correct_flags=tuple(bool(v) for v in rec["correct_flags"]),
        )
        for rec in bundle_io.read_jsonl(args.outcomes)
    ]
    rate = metrics.psr(outcomes, args.position)
    report = {
        "n_flags": sum(len(o.correct_flags) for o in outcomes),
        "position": args.position,
        "psr": float(rate),
    }
    print(bundle_io.dumps_canonical(report))
    return 0


def _cmd_dpo_loss(args):
    batch = [
        dpo.DpoExample(
            logp_policy_w=float(rec["logp_policy_w"]),
            logp_policy_l=float(rec["logp_policy_l"]),
            logp_ref_w=float(rec["logp_ref_w"]),
            logp_ref_l=float(rec["logp_ref_l"]),
        )
        for rec in bundle_io.read_jsonl(args.input)
    ]
    report = dpo.dpo_loss(batch, beta=config_from_args(args).beta)
    print(bundle_io.dumps_canonical({"loss": report.loss, "mean_margin": report.mean_margin}))
    return 0


def _cmd_project(args):
    bundle = bundle_io.read_bundle(args.bundle)
    coords = modes.pca_project(bundle.states.astype(np.float64), args.dims)
    with_answers = bundle.answers is not None
    header = "perm_index," + ",".join(f"pc{i + 1}" for i in range(args.dims))
    if with_answers:
        header += ",answer"
    lines = [header]
    for i, row in enumerate(coords):
        cells = [str(i)] + [bundle_io.format_float(v) for v in row]
        if with_answers:
            answer = bundle.answers[i]
            cells.append("" if answer is None else answer.replace(",", " "))
        lines.append(",".join(cells))
    bundle_io.atomic_write_bytes(("\n".join(lines) + "\n").encode("utf-8"), args.out)
    print(args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="permstab",
        description="Quantify and mitigate document-order permutation sensitivity in RAG.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    seed = default_seed()

    p = sub.add_parser("synth", help="generate a labeled synthetic bundle")
    p.add_argument("--modes", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--n", type=int, required=True, help="number of states")
    p.add_argument("--noise", type=float, required=True)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--weights", type=str, default=None, help="comma-separated mode weights")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("cluster", help="cluster a bundle into reasoning modes")
    p.add_argument("--bundle", required=True)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("represent", help="pick representative permutations per cluster")
    p.add_argument("--bundle", required=True)
    p.add_argument("--partition", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_represent)

    p = sub.add_parser("prefs", help="emit preference tuples as JSONL")
    p.add_argument("--bundle", required=True)
    p.add_argument("--partition", required=True)
    p.add_argument("--reps", required=True)
    p.add_argument("--exhaustive", action="store_true",
                   help="require full per-permutation answers")
    p.add_argument("--per-representative", action="store_true",
                   help="one tuple per representative permutation instead of one per query")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_prefs)

    p = sub.add_parser("metrics", help="score predictions against gold answers")
    p.add_argument("--pred", required=True, help="JSONL with query_id, prediction")
    p.add_argument("--gold", required=True, help="JSONL with query_id, gold_answers")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("psr", help="perturbation success rate at a gold position")
    p.add_argument("--outcomes", required=True,
                   help="JSONL with gold_position, correct_flags")
    p.add_argument("--position", type=int, required=True)
    p.set_defaults(func=_cmd_psr)

    p = sub.add_parser("dpo-loss", help="DPO loss over a batch of log-probabilities")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--beta", type=float, default=dpo.DEFAULT_BETA)
    p.set_defaults(func=_cmd_dpo_loss)

    p = sub.add_parser("project", help="PCA projection of a bundle's states to CSV")
    p.add_argument("--bundle", required=True)
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_project)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IoFailure as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
