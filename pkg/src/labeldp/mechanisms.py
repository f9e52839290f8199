"""Label-DP training mechanisms.

Each mechanism consumes a Dataset and produces a MechanismReport holding
the trained model, the privatized labels it saw, the accounted privacy
spend, and per-stage diagnostics. All randomness flows through explicit
seeds, so identical inputs reproduce identical outputs bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .models import LogisticHyper, Model, train_logistic
from .rng import substream

BASIC = "basic-composition"
PARALLEL = "parallel-composition"


@dataclass(frozen=True)
class PrivacyParams:
    """An (epsilon, delta) guarantee with a note naming the accounting rule."""

    epsilon: float
    delta: float = 0.0
    note: str = ""

    def __post_init__(self):
        if self.epsilon < 0 or math.isnan(self.epsilon):
            raise ValueError(f"epsilon must be >= 0 (or inf), got {self.epsilon}")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must be in [0, 1], got {self.delta}")


@dataclass(frozen=True)
class PriorTable:
    """Per-row label distributions used to restrict randomized response."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 2:
            raise ValueError(f"prior must be an (n, k) matrix, got shape {probs.shape}")
        row_err = np.abs(probs.sum(axis=1) - 1.0)
        if np.any(probs < 0) or np.any(row_err > 1e-9):
            bad = int(np.argmax(row_err)) if probs.size else 0
            if np.any(probs < 0):
                bad = int(np.argwhere(probs < 0)[0, 0])
            raise ValueError(f"prior row {bad} is not a probability distribution")
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return self.probs.shape[0]


@dataclass
class MechanismReport:
    model: Model
    params: PrivacyParams
    labels: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def account(stage_epsilons, rule: str) -> PrivacyParams:
    """Compose stage epsilons: basic sums, parallel (disjoint data) takes the max.

    Every implemented mechanism is pure epsilon-DP, so delta stays 0.
    """
    eps = [float(e) for e in stage_epsilons]
    if any(e < 0 for e in eps):
        raise ValueError(f"stage epsilons must be >= 0, got {eps}")
    if rule == BASIC:
        total = math.fsum(eps) if all(math.isfinite(e) for e in eps) else math.inf
    elif rule == PARALLEL:
        total = max(eps, default=0.0)
    else:
        raise ValueError(f"unknown accounting rule {rule!r}")
    return PrivacyParams(total if eps else 0.0, 0.0, note=rule)


def keep_probability(epsilon: float, k: int) -> float:
    """Randomized-response keep probability e^eps / (e^eps + k - 1)."""
    if math.isinf(epsilon):
        return 1.0
    # Computed as 1 / (1 + (k-1) e^-eps) to avoid overflow at large epsilon.
    return 1.0 / (1.0 + (k - 1) * math.exp(-epsilon))


def randomized_response(labels: np.ndarray, k: int, epsilon: float, seed: int) -> np.ndarray:
    """k-ary randomized response: keep each label with probability
    e^eps / (e^eps + k - 1), otherwise replace it uniformly among the other
    k - 1 classes. The output labels are epsilon-label-DP."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    labels = np.asarray(labels, dtype=np.int64)
    p = keep_probability(epsilon, k)
    rng = substream(seed, "rr")
    keep = rng.random(labels.shape[0]) < p
    offset = rng.integers(1, k, size=labels.shape[0])
    return np.where(keep, labels, (labels + offset) % k).astype(np.int64)


def rr_with_prior(
    labels: np.ndarray,
    prior: PriorTable | np.ndarray,
    top_k: int,
    epsilon: float,
    seed: int,
) -> np.ndarray:
    """Randomized response restricted to each row's top_k classes by prior.

    A true label outside its row's top set is first mapped to the
    highest-prior in-set class, then k-ary RR runs over the restricted set
    with keep probability e^eps / (e^eps + top_k - 1).
    """
    if not isinstance(prior, PriorTable):
        prior = PriorTable(np.asarray(prior))
    labels = np.asarray(labels, dtype=np.int64)
    n, k = prior.probs.shape
    if labels.shape[0] != n:
        raise ValueError(f"{labels.shape[0]} labels but prior has {n} rows")
    if not 1 <= top_k <= k:
        raise ValueError(f"top_k must be in [1, {k}], got {top_k}")

    # Stable sort on the negated prior: ties resolve to the lowest class index.
    order = np.argsort(-prior.probs, axis=1, kind="stable")
    top = order[:, :top_k]
    in_set = (top == labels[:, None]).any(axis=1)
    mapped = np.where(in_set, labels, top[:, 0])

    rng = substream(seed, "rr-prior")
    keep = rng.random(n) < keep_probability(epsilon, top_k)
    if top_k == 1:
        return mapped.astype(np.int64)
    pos = (top == mapped[:, None]).argmax(axis=1)
    offset = rng.integers(1, top_k, size=n)
    new_pos = (pos + offset) % top_k
    chosen = np.take_along_axis(top, new_pos[:, None], axis=1)[:, 0]
    return np.where(keep, mapped, chosen).astype(np.int64)


def cluster_prior(
    features: np.ndarray,
    reference_labels: np.ndarray,
    num_clusters: int,
    seed: int,
    num_classes: int | None = None,
    smoothing: float = 1.0,
    max_iter: int = 100,
) -> PriorTable:
    """Per-row label prior from k-means clusters of min-max normalized features.

    Each row's prior is the additively smoothed label histogram of its
    cluster. The reference labels must already be privatized or public; the
    caller owns that accounting. Clusters that empty out during Lloyd
    iterations are merged into the nearest surviving cluster.
    """
    features = np.asarray(features, dtype=np.float64)
    reference_labels = np.asarray(reference_labels, dtype=np.int64)
    if num_clusters < 1:
        raise ValueError(f"num_clusters must be >= 1, got {num_clusters}")
    if smoothing < 0:
        raise ValueError(f"smoothing must be >= 0, got {smoothing}")
    n = features.shape[0]
    if reference_labels.shape[0] != n:
        raise ValueError("reference_labels length must match features")
    k = int(num_classes) if num_classes is not None else int(reference_labels.max()) + 1

    lo, hi = features.min(axis=0), features.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    norm = (features - lo) / span

    num_clusters = min(num_clusters, n)
    rng = substream(seed, "cluster-prior")
    norm_sq = (norm**2).sum(axis=1)
    # Distance-weighted (k-means++ style) seeding; duplicates of an existing
    # centroid carry zero weight, so clusters start at distinct values.
    picks = [int(rng.integers(n))]
    while len(picks) < num_clusters:
        d2 = norm_sq[:, None] - 2.0 * norm @ norm[picks].T + norm_sq[picks][None, :]
        nearest = np.clip(d2.min(axis=1), 0.0, None)
        total = nearest.sum()
        if total == 0:
            break
        picks.append(int(rng.choice(n, p=nearest / total)))
    centroids = norm[picks]
    assign = None
    for _ in range(max_iter):
        dists = norm_sq[:, None] - 2.0 * norm @ centroids.T + (centroids**2).sum(axis=1)
        new_assign = dists.argmin(axis=1)
        occupied = np.unique(new_assign)
        if occupied.size < centroids.shape[0]:
            # Drop empty clusters; their would-be members already sit with
            # the nearest surviving centroid.
            centroids = centroids[occupied]
            remap = np.full(int(occupied.max()) + 1, -1, dtype=np.int64)
            remap[occupied] = np.arange(occupied.size)
            new_assign = remap[new_assign]
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        centroids = np.stack(
            [norm[assign == c].mean(axis=0) for c in range(centroids.shape[0])]
        )

    priors = np.empty((n, k))
    for c in np.unique(assign):
        members = assign == c
        counts = np.bincount(reference_labels[members], minlength=k).astype(np.float64)
        hist = (counts + smoothing) / (counts.sum() + smoothing * k)
        priors[members] = hist
    return PriorTable(priors)


def lp_mst(
    train: Dataset,
    num_stages: int,
    epsilon: float,
    top_k: int,
    hyper: LogisticHyper,
    seed: int,
) -> MechanismReport:
    """Multi-stage randomized-response training (one or two stages).

    Stage 1 applies plain RR to a disjoint subset and trains a model. Stage
    2 uses that model's predictions as a per-row prior for top-k restricted
    RR on the remaining rows and retrains on the union. Each stage spends
    epsilon on disjoint rows, so parallel composition keeps the total at
    epsilon.
    """
    if num_stages not in (1, 2):
        raise ValueError(f"num_stages must be 1 or 2, got {num_stages}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    k = train.num_classes
    diagnostics: dict = {"mechanism": f"lp-{num_stages}st"}

    if num_stages == 1:
        private = randomized_response(train.labels, k, epsilon, seed)
        model = train_logistic(train.with_labels(private), hyper, seed)
        diagnostics["stage_sizes"] = [len(train)]
        diagnostics["flip_rates"] = [float(np.mean(private != train.labels))]
        return MechanismReport(model, account([epsilon], PARALLEL), private, diagnostics)

    n = len(train)
    perm = substream(seed, "lp-mst-split").permutation(n)
    half = n // 2
    idx1, idx2 = perm[:half], perm[half:]
    if idx1.size == 0 or idx2.size == 0:
        raise ValueError(f"cannot form two non-empty stages from n={n}")

    stage1 = train.subset(idx1)
    private1 = randomized_response(stage1.labels, k, epsilon, seed)
    model1 = train_logistic(stage1.with_labels(private1), hyper, seed)

    stage2 = train.subset(idx2)
    prior = PriorTable(model1.predict_proba(stage2.features))
    private2 = rr_with_prior(stage2.labels, prior, top_k, epsilon, seed)

    private = np.empty(n, dtype=np.int64)
    private[idx1] = private1
    private[idx2] = private2
    model = train_logistic(train.with_labels(private), hyper, seed)
    diagnostics["stage_sizes"] = [int(idx1.size), int(idx2.size)]
    diagnostics["flip_rates"] = [
        float(np.mean(private1 != stage1.labels)),
        float(np.mean(private2 != stage2.labels)),
    ]
    return MechanismReport(model, account([epsilon, epsilon], PARALLEL), private, diagnostics)


def alibi(train: Dataset, epsilon: float, hyper: LogisticHyper, seed: int) -> MechanismReport:
    """Laplace noise on one-hot labels followed by MAP denoising.

    A one-hot label change moves the encoding by 2 in L1, so coordinate-wise
    Laplace noise of scale 2/eps makes the noisy encodings epsilon-label-DP;
    the denoised labels and the trained model follow by post-processing.
    Under a uniform prior the MAP label is the argmax of the noisy vector.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    k = train.num_classes
    onehot = np.zeros((len(train), k))
    onehot[np.arange(len(train)), train.labels] = 1.0
    scale = 0.0 if math.isinf(epsilon) else 2.0 / epsilon
    noisy = onehot
    if scale > 0:
        noisy = onehot + substream(seed, "alibi").laplace(0.0, scale, size=onehot.shape)
    denoised = np.argmax(noisy, axis=1).astype(np.int64)
    model = train_logistic(train.with_labels(denoised), hyper, seed)
    diagnostics = {
        "mechanism": "alibi",
        "noise_scale": scale,
        "agreement_rate": float(np.mean(denoised == train.labels)),
    }
    return MechanismReport(model, account([epsilon], BASIC), denoised, diagnostics)


def aggregate_votes(histogram: np.ndarray, epsilon_per_query: float, rng) -> int:
    """One noisy-vote aggregation step: Laplace(2/eps) on the histogram,
    clamp at zero, renormalize, sample a label from the result."""
    hist = np.asarray(histogram, dtype=np.float64)
    if not math.isinf(epsilon_per_query):
        hist = hist + rng.laplace(0.0, 2.0 / epsilon_per_query, size=hist.shape)
    hist = np.clip(hist, 0.0, None)
    total = hist.sum()
    probs = hist / total if total > 0 else np.full(hist.shape, 1.0 / hist.size)
    u = rng.random()
    return int(min(np.searchsorted(np.cumsum(probs), u, side="right"), hist.size - 1))


def pate(
    train: Dataset,
    num_teachers: int,
    num_queries: int,
    epsilon_per_query: float,
    hyper: LogisticHyper,
    seed: int,
) -> MechanismReport:
    """Teacher-ensemble training with noisy sampled voting.

    Teachers train on disjoint label shards. For each student query every
    teacher samples a label from its predictive distribution, the vote
    histogram gets Laplace(2/eps_query) noise, is clamped and renormalized,
    and the student label is sampled from it. The student trains on the
    answered queries. Accounting is data-independent basic composition:
    total epsilon = num_queries * epsilon_per_query.
    """
    if num_teachers < 2:
        raise ValueError(f"num_teachers must be >= 2, got {num_teachers}")
    if not 1 <= num_queries <= len(train):
        raise ValueError(f"num_queries must be in [1, {len(train)}], got {num_queries}")
    if not epsilon_per_query > 0:
        raise ValueError(f"epsilon_per_query must be > 0, got {epsilon_per_query}")
    if len(train) < num_teachers:
        raise ValueError(f"cannot shard n={len(train)} rows into {num_teachers} teachers")

    k = train.num_classes
    shard_perm = substream(seed, "pate-shards").permutation(len(train))
    shards = np.array_split(shard_perm, num_teachers)
    teachers = [
        train_logistic(train.subset(shard), hyper, seed) for shard in shards
    ]

    query_idx = substream(seed, "pate-queries").permutation(len(train))[:num_queries]
    query_x = train.features[query_idx]

    vote_rng = substream(seed, "pate-votes")
    votes = np.zeros((num_queries, k), dtype=np.float64)
    for teacher in teachers:
        probs = teacher.predict_proba(query_x)
        cdf = np.cumsum(probs, axis=1)
        u = vote_rng.random(num_queries)
        sampled = np.minimum((cdf < u[:, None]).sum(axis=1), k - 1)
        votes[np.arange(num_queries), sampled] += 1.0

    agg_rng = substream(seed, "pate-aggregate")
    student_labels = np.array(
        [aggregate_votes(votes[i], epsilon_per_query, agg_rng) for i in range(num_queries)],
        dtype=np.int64,
    )
    student = train_logistic(
        Dataset(query_x, student_labels, k), hyper, seed
    )
    spent = account([epsilon_per_query] * num_queries, BASIC)
    diagnostics = {
        "mechanism": "pate",
        "num_teachers": num_teachers,
        "shard_sizes": [int(s.size) for s in shards],
        "query_count": num_queries,
    }
    return MechanismReport(student, spent, student_labels, diagnostics)
