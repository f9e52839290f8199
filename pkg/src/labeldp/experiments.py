"""End-to-end studies: the Gaussian-mixture simulation grid, the
randomized-response majority-vote demonstration, and the skewed
click-prediction study, plus deterministic result serialization.

Cells are enumerated in config order and each derives its own seed, so
output rows are byte-reproducible for a fixed (config, seed).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from .attacks import AdversaryKnowledge, spa
from .data import (
    Dataset,
    MixtureModel,
    SkewedBinarySpec,
    gen_mixture,
    gen_skewed_binary,
    load_csv,
    split,
)
from .mechanisms import alibi, lp_mst, pate, randomized_response
from .metrics import (
    BoundQuery,
    MetricsReport,
    UtilitySpec,
    advantage_bound,
    eau_empirical,
    eau_monte_carlo,
    hoeffding_lower_bound,
    leau_estimate,
    leau_exact,
    universal_bound,
)
from .models import (
    LogisticHyper,
    constant_model,
    log_loss,
    majority_table,
    stability_threshold,
    train_logistic,
)
from .rng import derive_seed

SIMULATION_COLUMNS = [
    "m", "sigma", "epsilon", "x_rep", "trials",
    "eau", "eau_stderr", "leau", "advantage", "theoretical_bound",
]
THM1_COLUMNS = ["epsilon", "n", "trials", "empirical_eau", "hoeffding_lower_bound"]
CTR_COLUMNS = [
    "mechanism", "epsilon", "test_log_loss",
    "eau", "eau_stderr", "leau", "advantage", "theoretical_bound", "utility_bound",
]


@dataclass(frozen=True)
class SimulationConfig:
    """Gaussian-mixture study grid; defaults match the published protocol
    (d=100, n=100, T=1000, sigma in {1,10,100}, m in {2,100})."""

    class_counts: tuple = (2, 100)
    dim: int = 100
    sigmas: tuple = (1.0, 10.0, 100.0)
    n: int = 100
    trials: int = 1000
    epsilons: tuple = (0.1, 0.5, 1.0, 2.0, 4.0, 10.0)
    feature_redraws: int = 1
    mechanism: str = "rr"
    iterations: int = 35
    seed: int = 0

    def __post_init__(self):
        for name in ("dim", "n", "trials", "feature_redraws", "iterations"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if any(m < 2 for m in self.class_counts):
            raise ValueError("class counts must be >= 2")
        if list(self.epsilons) != sorted(self.epsilons):
            raise ValueError("epsilon grid must be sorted ascending")


def mechanism_pipeline(
    name: str,
    num_classes: int,
    epsilon: float,
    hyper: LogisticHyper,
    lp2_top_k: int = 2,
    pate_teachers: int = 5,
    pate_queries: int = 50,
):
    """Label-to-model procedure for one mechanism at one epsilon.

    The returned callable takes (features, labels, seed) and yields the
    trained model, which is the interface eau_monte_carlo expects.
    """

    def pipeline(features: np.ndarray, labels: np.ndarray, seed: int):
        ds = Dataset(features, labels, num_classes)
        if name == "rr":
            private = randomized_response(labels, num_classes, epsilon, seed)
            return train_logistic(ds.with_labels(private), hyper, seed)
        if name == "lp2st":
            return lp_mst(ds, 2, epsilon, lp2_top_k, hyper, seed).model
        if name == "alibi":
            return alibi(ds, epsilon, hyper, seed).model
        if name == "pate":
            queries = min(pate_queries, len(ds))
            return pate(ds, pate_teachers, queries, epsilon / queries, hyper, seed).model
        raise ValueError(f"unknown mechanism {name!r}")

    return pipeline


def run_simulation(config: SimulationConfig) -> list[MetricsReport]:
    """For every (m, sigma, epsilon) cell: fix the features, compute the
    exact L-EAU, Monte-Carlo the SPA EAU over the mechanism pipeline, and
    pair the advantage with its distribution-dependent bound (the expected
    supremum term is 1 for zero-one utility)."""
    spec = UtilitySpec.zero_one()
    attack = lambda knowledge: spa(knowledge, spec)  # noqa: E731
    reports = []
    for mi, m in enumerate(config.class_counts):
        for si, sigma in enumerate(config.sigmas):
            mixture = MixtureModel(m, config.dim, float(sigma))
            for rep in range(config.feature_redraws):
                ds, conditional = gen_mixture(
                    mixture, config.n, derive_seed(config.seed, "sim-x", mi, si, rep)
                )
                features = ds.features
                # X is fixed across the Monte-Carlo trials of this cell, so
                # the auto learning rate can be resolved once here.
                hyper = LogisticHyper(
                    learning_rate=0.9 * stability_threshold(ds),
                    iterations=config.iterations,
                )
                leau = leau_exact(conditional, features, spec)
                for ei, eps in enumerate(config.epsilons):
                    pipeline = mechanism_pipeline(config.mechanism, m, float(eps), hyper)
                    eau, stderr = eau_monte_carlo(
                        conditional,
                        features,
                        pipeline,
                        attack,
                        spec,
                        config.trials,
                        derive_seed(config.seed, "sim-mc", mi, si, rep, ei),
                    )
                    bound = advantage_bound(BoundQuery(float(eps), 0.0, exp_sup_utility=1.0))
                    reports.append(
                        MetricsReport(
                            eau, stderr, leau, bound,
                            cell={
                                "m": m, "sigma": float(sigma), "epsilon": float(eps),
                                "x_rep": rep, "trials": config.trials,
                            },
                        )
                    )
    return reports


@dataclass(frozen=True)
class Thm1Config:
    """Two-feature construction sizes; every n must be even (n = 2r)."""

    epsilon: float = 1.0
    n_values: tuple = (100, 1000)
    trials: int = 200
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if any(n < 2 or n % 2 for n in self.n_values):
            raise ValueError(f"each n must be even and >= 2, got {self.n_values}")


def run_thm1_demo(config: Thm1Config) -> list[dict]:
    """Binary RR on the deterministic two-valued-feature dataset, majority
    vote per feature value, SPA accuracy against the true labels, averaged
    over trials and paired with the matching Hoeffding lower bound."""
    spec = UtilitySpec.zero_one()
    rows = []
    for ni, n in enumerate(config.n_values):
        r = n // 2
        features = np.concatenate([np.ones(r), -np.ones(r)])[:, None]
        true_labels = np.concatenate(
            [np.ones(r, dtype=np.int64), np.zeros(r, dtype=np.int64)]
        )
        accs = np.empty(config.trials)
        for t in range(config.trials):
            private = randomized_response(
                true_labels, 2, config.epsilon, derive_seed(config.seed, "thm1", ni, t)
            )
            model = majority_table(Dataset(features, private, 2))
            inferred = spa(AdversaryKnowledge(features=features, model=model), spec)
            accs[t] = eau_empirical(inferred, true_labels, spec)
        rows.append(
            {
                "epsilon": float(config.epsilon),
                "n": n,
                "trials": config.trials,
                "empirical_eau": float(accs.mean()),
                "hoeffding_lower_bound": hoeffding_lower_bound(config.epsilon, n),
            }
        )
    return rows


@dataclass(frozen=True)
class CtrConfig:
    """Skewed click-prediction study over a synthetic source or a CSV file.

    The synthetic defaults (positive rate 0.03, 20 dims, separation 0.5,
    label noise 0.1) mimic a noisy, heavily imbalanced click log.
    """

    source: SkewedBinarySpec = SkewedBinarySpec(0.03, 20, 0.5, 0.1)
    csv_path: str | None = None
    label_column: str = "label"
    n: int = 100_000
    mechanisms: tuple = ("rr",)
    epsilons: tuple = (math.inf, 8.0, 4.0, 2.0, 1.0, 0.1)
    split_fractions: tuple = (0.8, 0.04, 0.16)
    iterations: int = 150
    lp2_top_k: int = 2
    pate_teachers: int = 5
    pate_queries: int = 200
    seed: int = 0

    def __post_init__(self):
        if any(not e > 0 for e in self.epsilons):
            raise ValueError("epsilon grid values must be positive or infinite")
        if self.csv_path is None and self.n < 10:
            raise ValueError("synthetic source needs n >= 10")


def run_ctr(config: CtrConfig) -> list[MetricsReport]:
    """Per (mechanism, epsilon): train privately, record test log loss and
    the weighted-SPA training EAU, and compare the advantage against the
    universal bound with B = max_y 1/(2 p_y). The first row is the
    constant-predictor baseline; the marginal p_y is estimated from the
    training split."""
    if config.csv_path is not None:
        dataset = load_csv(config.csv_path, config.label_column)
        conditional = None
    else:
        dataset, conditional = gen_skewed_binary(
            config.source, config.n, derive_seed(config.seed, "ctr-data")
        )
    train, _val, test = split(dataset, config.split_fractions, derive_seed(config.seed, "ctr-split"))

    counts = np.bincount(train.labels, minlength=dataset.num_classes)
    if np.any(counts == 0):
        missing = int(np.argmin(counts))
        raise ValueError(f"class {missing} absent from the training split; cannot weight")
    marginal = counts / counts.sum()
    spec = UtilitySpec.weighted(marginal)
    b = spec.bound
    hyper = LogisticHyper(iterations=config.iterations)

    candidates = []
    entries = []

    baseline = constant_model(marginal)
    candidates.append(baseline)
    entries.append(("constant-baseline", math.inf, baseline))

    for mech in config.mechanisms:
        for eps in config.epsilons:
            pipeline = mechanism_pipeline(
                mech, dataset.num_classes, float(eps), hyper,
                lp2_top_k=config.lp2_top_k,
                pate_teachers=config.pate_teachers,
                pate_queries=config.pate_queries,
            )
            model = pipeline(
                train.features, train.labels, derive_seed(config.seed, "ctr", mech, repr(eps))
            )
            candidates.append(model)
            entries.append((mech, float(eps), model))

    if conditional is not None:
        leau = leau_exact(conditional, train.features, spec)
    else:
        leau = leau_estimate(candidates, test, spec)

    reports = []
    for mech, eps, model in entries:
        knowledge = AdversaryKnowledge(features=train.features, model=model, marginal=marginal)
        inferred = spa(knowledge, spec)
        eau = eau_empirical(inferred, train.labels, spec)
        bound = universal_bound(BoundQuery(eps, 0.0, utility_bound=b))
        reports.append(
            MetricsReport(
                eau, 0.0, leau, bound,
                cell={
                    "mechanism": mech,
                    "epsilon": eps,
                    "test_log_loss": log_loss(model, test),
                    "utility_bound": b,
                },
            )
        )
    return reports


def _cell_value(value):
    if isinstance(value, (np.floating, float)):
        return repr(float(value))
    if isinstance(value, (np.integer, int)):
        return str(int(value))
    return str(value)


def write_results(rows, path: str, fmt: str = "csv", columns=None, manifest=None) -> None:
    """Serialize result rows with a fixed column order plus a sidecar
    manifest echoing the full configuration (including seeds).

    Formats: "csv" (header row always written, floats at full precision) and
    "structured-records" (one JSON object per line). Reruns with an
    identical config produce byte-identical files.
    """
    dict_rows = [row.to_row() if isinstance(row, MetricsReport) else dict(row) for row in rows]
    if columns is None:
        if not dict_rows:
            raise ValueError("cannot infer columns from an empty row list")
        columns = list(dict_rows[0].keys())
    try:
        with open(path, "w", encoding="utf-8") as fh:
            if fmt == "csv":
                fh.write(",".join(columns) + "\n")
                for row in dict_rows:
                    fh.write(",".join(_cell_value(row[c]) for c in columns) + "\n")
            elif fmt == "structured-records":
                for row in dict_rows:
                    record = {c: row[c] for c in columns}
                    fh.write(json.dumps(_jsonable(record)) + "\n")
            else:
                raise ValueError(f"unknown format {fmt!r}")
        with open(path + ".manifest.json", "w", encoding="utf-8") as fh:
            json.dump(
                {"columns": columns, "format": fmt, "config": _jsonable(manifest)},
                fh, sort_keys=True, indent=2,
            )
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def _jsonable(value):
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return _jsonable(dataclasses.asdict(value))
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def config_manifest(config) -> dict:
    return {"type": type(config).__name__, **_jsonable(dataclasses.asdict(config))}


def check_simulation(reports) -> list[str]:
    """Invariant checks for simulation cells; returns violation messages."""
    violations = []
    groups: dict[tuple, list[MetricsReport]] = {}
    for rep in reports:
        cell = rep.cell
        if rep.advantage > rep.theoretical_bound + 3.0 * rep.eau_stderr:
            violations.append(
                f"cell {cell}: advantage {rep.advantage:.6f} exceeds bound "
                f"{rep.theoretical_bound:.6f} + 3*stderr"
            )
        groups.setdefault((cell["m"], cell["sigma"], cell["x_rep"]), []).append(rep)
    for key, cells in groups.items():
        leaus = {rep.leau for rep in cells}
        if len(leaus) != 1:
            violations.append(f"group {key}: L-EAU varies across epsilon: {sorted(leaus)}")
        ordered = sorted(cells, key=lambda rep: rep.cell["epsilon"])
        for lo, hi in zip(ordered, ordered[1:]):
            slack = 3.0 * math.hypot(lo.eau_stderr, hi.eau_stderr)
            if hi.eau < lo.eau - slack:
                violations.append(
                    f"group {key}: EAU drops from {lo.eau:.4f} (eps={lo.cell['epsilon']}) "
                    f"to {hi.eau:.4f} (eps={hi.cell['epsilon']}) beyond 3*stderr"
                )
    return violations


def check_thm1(rows) -> list[str]:
    return [
        f"n={row['n']}: empirical EAU {row['empirical_eau']:.6f} below the "
        f"Hoeffding lower bound {row['hoeffding_lower_bound']:.6f}"
        for row in rows
        if row["empirical_eau"] < row["hoeffding_lower_bound"]
    ]


def check_ctr(reports) -> list[str]:
    return [
        f"cell {rep.cell}: advantage {rep.advantage:.6f} exceeds the universal "
        f"bound {rep.theoretical_bound:.6f}"
        for rep in reports
        if rep.advantage > rep.theoretical_bound
    ]
