"""Command-line entry point.

Subcommands: bound, calibrate, privatize, attack, simulate, thm1, ctr.
Option precedence is inline flags over config-file values over defaults,
and the fully resolved configuration is echoed as a JSON line before any
work runs. Numeric output on stdout uses 6 significant digits unless
--full-precision is passed; result files always carry full precision.
"""

from __future__ import annotations

import argparse
import csv as _csv
import json
import math
import sys

import numpy as np

from . import experiments, mechanisms, metrics
from .attacks import AdversaryKnowledge, marginal_guess, spa
from .data import CsvFormatError, load_csv
from .metrics import BoundQuery, UtilitySpec
from .models import LogisticHyper, load_model

CHECK_EXIT = 3


def _fmt(value, full_precision: bool):
    if isinstance(value, float) and math.isfinite(value) and not full_precision:
        return float(f"{value:.6g}")
    return value


def _record(record: dict, full_precision: bool) -> str:
    return json.dumps({k: _fmt(v, full_precision) for k, v in record.items()})


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(","))


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(","))


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Apply flag > config-file > default precedence for every known key."""
    file_values = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            file_values = json.load(fh)
        unknown = set(file_values) - set(defaults)
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
    resolved = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
        elif key in file_values:
            value = file_values[key]
            resolved[key] = tuple(value) if isinstance(default, tuple) else value
        else:
            resolved[key] = default
    return resolved


def _echo(resolved: dict) -> None:
    print("resolved-config " + json.dumps(experiments._jsonable(resolved), sort_keys=True))


def cmd_bound(args) -> int:
    query = BoundQuery(
        epsilon=args.epsilon,
        delta=args.delta,
        utility_bound=args.B,
        exp_sup_utility=args.exp_sup,
        domain_size=args.domain_size,
    )
    if args.kind == "universal":
        value = metrics.universal_bound(query, args.draft_variant)
    elif args.kind == "advantage":
        value = metrics.advantage_bound(query, args.draft_variant)
    elif args.kind == "weak-threat":
        value = metrics.weak_threat_bound(query, args.draft_variant)
    elif args.kind == "generalization":
        value = metrics.dp_generalization_gap_bound(args.epsilon, args.delta, args.draft_variant)
    elif args.kind == "reconstruction":
        if args.domain_size is None:
            raise ValueError("reconstruction bound needs --domain-size")
        value = metrics.reconstruction_bound(args.epsilon, args.delta, args.domain_size)
    elif args.kind == "hoeffding":
        if args.n is None:
            raise ValueError("hoeffding bound needs --n")
        value = metrics.hoeffding_lower_bound(args.epsilon, args.n)
    else:
        raise ValueError(f"unknown bound kind {args.kind!r}")
    record = {
        "kind": args.kind, "epsilon": args.epsilon, "delta": args.delta,
        "B": args.B, "exp_sup": args.exp_sup, "domain_size": args.domain_size,
        "n": args.n, "draft_variant": args.draft_variant, "value": value,
    }
    print(_record(record, args.full_precision))
    return 0


def cmd_calibrate(args) -> int:
    result = metrics.calibrate_epsilon(args.advantage, args.delta, args.B)
    record = {
        "advantage": args.advantage, "delta": args.delta, "B": args.B,
        "epsilon": result.epsilon, "feasible": result.feasible, "note": result.note,
    }
    print(_record(record, args.full_precision))
    return 0 if result.feasible else 1


def cmd_privatize(args) -> int:
    _echo(
        {
            "input": args.input, "label_column": args.label_column,
            "mechanism": args.mechanism, "epsilon": args.epsilon,
            "top_k": args.top_k, "iterations": args.iterations,
            "seed": args.seed, "output": args.output,
        }
    )
    dataset = load_csv(args.input, args.label_column)
    hyper = LogisticHyper(iterations=args.iterations)
    if args.mechanism == "rr":
        labels = mechanisms.randomized_response(
            dataset.labels, dataset.num_classes, args.epsilon, args.seed
        )
        note = mechanisms.BASIC
    elif args.mechanism == "alibi":
        report = mechanisms.alibi(dataset, args.epsilon, hyper, args.seed)
        labels, note = report.labels, report.params.note
    elif args.mechanism == "lp2st":
        report = mechanisms.lp_mst(dataset, 2, args.epsilon, args.top_k, hyper, args.seed)
        labels, note = report.labels, report.params.note
    else:
        raise ValueError(f"mechanism {args.mechanism!r} does not emit per-row labels")
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write("row_index,private_label\n")
        for i, label in enumerate(labels):
            fh.write(f"{i},{int(label)}\n")
    with open(args.output + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "mechanism": args.mechanism, "epsilon": args.epsilon,
                "seed": args.seed, "accounting_rule": note,
                "input": args.input, "label_column": args.label_column,
            },
            fh, sort_keys=True, indent=2,
        )
        fh.write("\n")
    print(f"wrote {len(labels)} privatized labels to {args.output}")
    return 0


def _load_features_only(path: str) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv.reader(fh)
        try:
            next(reader)  # header row
        except StopIteration:
            raise CsvFormatError(f"{path}: file is empty") from None
        rows = []
        for row_num, row in enumerate(reader):
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise CsvFormatError(f"{path}: row {row_num}: non-numeric cell") from None
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def cmd_attack(args) -> int:
    _echo(
        {
            "model": args.model, "input": args.input, "label_column": args.label_column,
            "attack": args.attack, "utility": args.utility, "marginal": args.marginal,
            "output": args.output,
        }
    )
    model = load_model(args.model)
    if args.label_column is not None:
        dataset = load_csv(args.input, args.label_column)
        features, true_labels = dataset.features, dataset.labels
    else:
        features, true_labels = _load_features_only(args.input), None
    marginal = np.asarray(_floats(args.marginal)) if args.marginal else None
    if args.utility == "weighted":
        if marginal is None:
            raise ValueError("weighted utility needs --marginal")
        spec = UtilitySpec.weighted(marginal)
    else:
        spec = UtilitySpec.zero_one()
    knowledge = AdversaryKnowledge(features=features, model=model, marginal=marginal)
    if args.attack == "spa":
        inferred = spa(knowledge, spec)
    else:
        inferred = marginal_guess(knowledge, spec)
    with open(args.output, "w", encoding="utf-8") as fh:
        if true_labels is None:
            fh.write("row_index,inferred_label\n")
            for i, label in enumerate(inferred.labels):
                fh.write(f"{i},{int(label)}\n")
        else:
            fh.write("row_index,inferred_label,true_label\n")
            for i, (label, truth) in enumerate(zip(inferred.labels, true_labels)):
                fh.write(f"{i},{int(label)},{int(truth)}\n")
    if true_labels is not None:
        eau = metrics.eau_empirical(inferred, true_labels, spec)
        print(_record({"attack": inferred.attack, "empirical_eau": eau}, args.full_precision))
    return 0


SIMULATE_DEFAULTS = {
    "class_counts": (2, 100), "dim": 100, "sigmas": (1.0, 10.0, 100.0), "n": 100,
    "trials": 1000, "epsilons": (0.1, 0.5, 1.0, 2.0, 4.0, 10.0),
    "feature_redraws": 1, "mechanism": "rr", "iterations": 35, "seed": 0,
}


def cmd_simulate(args) -> int:
    defaults = dict(SIMULATE_DEFAULTS)
    if args.preset == "fig1-reduced":
        defaults["trials"] = 100
    resolved = _resolve(args, defaults)
    _echo(resolved)
    config = experiments.SimulationConfig(**resolved)
    reports = experiments.run_simulation(config)
    experiments.write_results(
        reports, args.output, args.format,
        columns=experiments.SIMULATION_COLUMNS,
        manifest=experiments.config_manifest(config),
    )
    print(f"wrote {len(reports)} cells to {args.output}")
    if args.check:
        violations = experiments.check_simulation(reports)
        for v in violations:
            print("violation: " + v, file=sys.stderr)
        return CHECK_EXIT if violations else 0
    return 0


THM1_DEFAULTS = {"epsilon": 1.0, "n_values": (100, 1000), "trials": 200, "seed": 0}


def cmd_thm1(args) -> int:
    resolved = _resolve(args, THM1_DEFAULTS)
    _echo(resolved)
    config = experiments.Thm1Config(**resolved)
    rows = experiments.run_thm1_demo(config)
    experiments.write_results(
        rows, args.output, args.format,
        columns=experiments.THM1_COLUMNS,
        manifest=experiments.config_manifest(config),
    )
    print(f"wrote {len(rows)} rows to {args.output}")
    if args.check:
        violations = experiments.check_thm1(rows)
        for v in violations:
            print("violation: " + v, file=sys.stderr)
        return CHECK_EXIT if violations else 0
    return 0


CTR_DEFAULTS = {
    "csv_path": None, "label_column": "label", "n": 100_000,
    "positive_rate": 0.03, "dim": 20, "separation": 0.5, "label_noise": 0.1,
    "mechanisms": ("rr",), "epsilons": (math.inf, 8.0, 4.0, 2.0, 1.0, 0.1),
    "iterations": 150, "seed": 0,
}


def cmd_ctr(args) -> int:
    resolved = _resolve(args, CTR_DEFAULTS)
    _echo(resolved)
    from .data import SkewedBinarySpec

    config = experiments.CtrConfig(
        source=SkewedBinarySpec(
            resolved["positive_rate"], resolved["dim"],
            resolved["separation"], resolved["label_noise"],
        ),
        csv_path=resolved["csv_path"],
        label_column=resolved["label_column"],
        n=resolved["n"],
        mechanisms=tuple(resolved["mechanisms"]),
        epsilons=tuple(resolved["epsilons"]),
        iterations=resolved["iterations"],
        seed=resolved["seed"],
    )
    reports = experiments.run_ctr(config)
    experiments.write_results(
        reports, args.output, args.format,
        columns=experiments.CTR_COLUMNS,
        manifest=experiments.config_manifest(config),
    )
    print(f"wrote {len(reports)} cells to {args.output}")
    if args.check:
        violations = experiments.check_ctr(reports)
        for v in violations:
            print("violation: " + v, file=sys.stderr)
        return CHECK_EXIT if violations else 0
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="labeldp")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="evaluate a closed-form advantage bound")
    p.add_argument("--kind", default="universal",
                   choices=["universal", "advantage", "weak-threat", "generalization",
                            "reconstruction", "hoeffding"])
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--B", type=float, default=None)
    p.add_argument("--exp-sup", dest="exp_sup", type=float, default=None)
    p.add_argument("--domain-size", dest="domain_size", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--draft-variant", action="store_true")
    p.add_argument("--full-precision", action="store_true")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("calibrate", help="invert the universal bound for epsilon")
    p.add_argument("--advantage", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--B", type=float, default=1.0)
    p.add_argument("--full-precision", action="store_true")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("privatize", help="privatize the labels of a CSV dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--label-column", dest="label_column", default="label")
    p.add_argument("--mechanism", default="rr", choices=["rr", "alibi", "lp2st"])
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--top-k", dest="top_k", type=int, default=2)
    p.add_argument("--iterations", type=int, default=150)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_privatize)

    p = sub.add_parser("attack", help="run a label inference attack on a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--label-column", dest="label_column", default=None)
    p.add_argument("--attack", default="spa", choices=["spa", "marginal-guess"])
    p.add_argument("--utility", default="zero-one", choices=["zero-one", "weighted"])
    p.add_argument("--marginal", default=None, help="comma-separated marginal, e.g. 0.97,0.03")
    p.add_argument("--output", required=True)
    p.add_argument("--full-precision", action="store_true")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("simulate", help="Gaussian-mixture EAU/advantage study")
    p.add_argument("--preset", choices=["fig1", "fig1-reduced"], default="fig1")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--class-counts", dest="class_counts", type=_ints, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--sigmas", type=_floats, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--epsilons", type=_floats, default=None)
    p.add_argument("--feature-redraws", dest="feature_redraws", type=int, default=None)
    p.add_argument("--mechanism", default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", required=True)
    p.add_argument("--format", default="csv", choices=["csv", "structured-records"])
    p.add_argument("--check", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("thm1", help="RR majority-vote lower-bound demonstration")
    p.add_argument("--config", default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--n-values", dest="n_values", type=_ints, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", required=True)
    p.add_argument("--format", default="csv", choices=["csv", "structured-records"])
    p.add_argument("--check", action="store_true")
    p.set_defaults(func=cmd_thm1)

    p = sub.add_parser("ctr", help="skewed click-prediction study")
    p.add_argument("--config", default=None)
    p.add_argument("--csv", dest="csv_path", default=None)
    p.add_argument("--label-column", dest="label_column", default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--positive-rate", dest="positive_rate", type=float, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--separation", type=float, default=None)
    p.add_argument("--label-noise", dest="label_noise", type=float, default=None)
    p.add_argument("--mechanisms", type=lambda s: tuple(s.split(",")), default=None)
    p.add_argument("--epsilons", type=_floats, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", required=True)
    p.add_argument("--format", default="csv", choices=["csv", "structured-records"])
    p.add_argument("--check", action="store_true")
    p.set_defaults(func=cmd_ctr)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, CsvFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
