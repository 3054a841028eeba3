"""Rare-interaction discovery: exponential prior, EM fit, and sampling.

A candidate interaction is a small connected subgraph materialized from a
lexicon entry that enough graphs of a cluster contain. Its unnormalized prior
score is exp(-lw * W + ls * N + lf * F): mean edge weight W (low weight =
rare within an object), node count N, and favoritism F (log-product of the
candidate's similarity to every graph in the population). The three rates are
fitted by EM over the finite candidate pool, treating the prior as a discrete
Gibbs distribution whose normalizer is summed over the pool.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import (
    Edge,
    InteractionGraph,
    TemplateLabel,
    from_dict as graph_from_dict,
    induced_subgraph,
    to_dict as graph_to_dict,
)
from .lexicon import Lexicon, encode, iter_bits
from .similarity import graph_similarity


class NoCandidates(ValueError):
    """EM needs at least one candidate interpretation."""


class NonFiniteScore(ValueError):
    """A candidate score came out NaN or infinite (check the epsilon floor)."""


class DegenerateAffinity(UserWarning):
    """All pairwise similarities identical; clustering falls back to one cluster."""


@dataclass(frozen=True)
class PriorParams:
    """Non-negative rates of the exponential prior components."""

    lambda_weight: float = 0.1
    lambda_size: float = 0.1
    lambda_favoritism: float = 0.1

    def __post_init__(self) -> None:
        for name, value in (
            ("lambda_weight", self.lambda_weight),
            ("lambda_size", self.lambda_size),
            ("lambda_favoritism", self.lambda_favoritism),
        ):
            if value < 0 or not math.isfinite(value):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.lambda_weight, self.lambda_size, self.lambda_favoritism]
        )


@dataclass
class Candidate:
    """A scored candidate interaction subgraph (one interpretation)."""

    subgraph: InteractionGraph
    entry_index: int
    mean_weight: float
    node_count: int
    favoritism: float
    pattern_id: str = ""

    def __post_init__(self) -> None:
        if self.node_count < 2:
            raise ValueError("scored candidates need at least two nodes")
        if self.mean_weight < 1:
            raise ValueError(f"mean edge weight must be >= 1, got {self.mean_weight}")

    @property
    def labels(self) -> frozenset[TemplateLabel]:
        return self.subgraph.labels()

    def config_key(self) -> tuple[tuple[str, str, str, int], ...]:
        return tuple(
            sorted(
                (str(e.src), str(e.dst), e.relation.value, e.weight)
                for e in self.subgraph.edges
            )
        )

    def to_dict(self) -> dict:
        return {
            "pattern_id": self.pattern_id,
            "entry_index": self.entry_index,
            "subgraph": graph_to_dict(self.subgraph),
            "mean_weight": self.mean_weight,
            "node_count": self.node_count,
            "favoritism": self.favoritism,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Candidate":
        return cls(
            subgraph=graph_from_dict(payload["subgraph"]),
            entry_index=payload["entry_index"],
            mean_weight=payload["mean_weight"],
            node_count=payload["node_count"],
            favoritism=payload["favoritism"],
            pattern_id=payload["pattern_id"],
        )


@dataclass
class DiscoveryResult:
    ranked: list[tuple[Candidate, float]]
    params: PriorParams
    trace: list[float]
    clusters: dict[str, int]
    seed: int
    lexicon_n: int

    @property
    def candidates(self) -> list[Candidate]:
        return [candidate for candidate, _ in self.ranked]

    def to_dict(self) -> dict:
        return {
            "params": {
                "lambda_weight": self.params.lambda_weight,
                "lambda_size": self.params.lambda_size,
                "lambda_favoritism": self.params.lambda_favoritism,
            },
            "trace": self.trace,
            "clusters": self.clusters,
            "seed": self.seed,
            "lexicon_n": self.lexicon_n,
            "ranked": [
                dict(candidate.to_dict(), posterior=posterior)
                for candidate, posterior in self.ranked
            ],
            "prevalence": {"positive": None, "negative": None},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DiscoveryResult":
        ranked = [
            (Candidate.from_dict(entry), entry["posterior"])
            for entry in payload["ranked"]
        ]
        params = PriorParams(**payload["params"])
        return cls(
            ranked=ranked,
            params=params,
            trace=list(payload["trace"]),
            clusters={k: int(v) for k, v in payload["clusters"].items()},
            seed=payload["seed"],
            lexicon_n=payload["lexicon_n"],
        )

    def save(self, path) -> None:
        with open(path, "w") as handle:
            json.dump(self.to_dict(), handle, sort_keys=True)
            handle.write("\n")

    @classmethod
    def load(cls, path) -> "DiscoveryResult":
        with open(path) as handle:
            return cls.from_dict(json.load(handle))


def favoritism(
    subgraph: InteractionGraph,
    population: Sequence[InteractionGraph],
    lexicon: Lexicon,
    population_fps: Sequence[int] | None = None,
    epsilon: float = 1e-9,
) -> float:
    """Log-product of the subgraph's similarity to every population graph,
    with similarities floored at ``epsilon`` so empty overlaps stay finite."""
    if not population:
        raise ValueError("population must be non-empty")
    fp_sub = encode(subgraph, lexicon)
    if population_fps is None:
        population_fps = [encode(g, lexicon) for g in population]
    terms = []
    for other, fp_other in zip(population, population_fps):
        s = graph_similarity(subgraph, other, lexicon, fp_sub, fp_other)
        terms.append(math.log(max(s, epsilon)))
    # fsum: candidates with identical per-graph similarity multisets get
    # bit-identical favoritism, so posterior ties break on weight as intended.
    return math.fsum(terms)


def log_prior_score(candidate: Candidate, params: PriorParams) -> float:
    return (
        -params.lambda_weight * candidate.mean_weight
        + params.lambda_size * candidate.node_count
        + params.lambda_favoritism * candidate.favoritism
    )


def prior_score(candidate: Candidate, params: PriorParams) -> float:
    """Unnormalized prior mass exp(-lw*W + ls*N + lf*F); normalization happens
    over the finite candidate pool in the E-step."""
    return math.exp(log_prior_score(candidate, params))


def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded k-means++ on row-normalized spectral embeddings."""
    m = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(m)]
    dist2 = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = dist2.sum()
        if total <= 0:
            centers[j] = points[rng.integers(m)]
        else:
            centers[j] = points[rng.choice(m, p=dist2 / total)]
        dist2 = np.minimum(dist2, np.sum((points - centers[j]) ** 2, axis=1))
    labels = np.zeros(m, dtype=int)
    for _ in range(100):
        dists = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
        new_labels = dists.argmin(axis=1)
        if np.array_equal(new_labels, labels) and _ > 0:
            break
        labels = new_labels
        for j in range(k):
            member = points[labels == j]
            if len(member):
                centers[j] = member.mean(axis=0)
    return labels


def cluster_population(
    similarity_matrix: np.ndarray,
    knn_k: int = 7,
    max_clusters: int = 10,
    seed: int = 0,
) -> np.ndarray:
    """Self-tuning spectral clustering of a cohort similarity matrix.

    Distances are 1 - S (S symmetrized by averaging), the affinity is locally
    scaled by each point's k-th nearest-neighbor distance, and the cluster
    count is picked by the largest eigengap of the normalized Laplacian,
    capped at ``max_clusters``.
    """
    m = similarity_matrix.shape[0]
    if m < 2:
        return np.zeros(m, dtype=int)
    sym = (similarity_matrix + similarity_matrix.T) / 2.0
    dist = 1.0 - sym
    np.fill_diagonal(dist, 0.0)
    off_diag = sym[~np.eye(m, dtype=bool)]
    if np.ptp(off_diag) < 1e-12:
        warnings.warn(
            "all pairwise similarities are identical; returning one cluster",
            DegenerateAffinity,
        )
        return np.zeros(m, dtype=int)

    k = min(knn_k, m - 1)
    sigma = np.empty(m)
    for i in range(m):
        row = np.delete(dist[i], i)
        row.sort()
        sigma[i] = max(row[k - 1], 1e-12)
    affinity = np.exp(-(dist**2) / np.outer(sigma, sigma))
    np.fill_diagonal(affinity, 0.0)

    degree = affinity.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(np.maximum(degree, 1e-12))
    laplacian = np.eye(m) - inv_sqrt[:, None] * affinity * inv_sqrt[None, :]
    eigvals, eigvecs = np.linalg.eigh(laplacian)

    c_max = min(max_clusters, m - 1)
    gaps = [eigvals[c] - eigvals[c - 1] for c in range(1, c_max + 1)]
    n_clusters = 1 + int(np.argmax(gaps))
    if n_clusters == 1:
        return np.zeros(m, dtype=int)

    embedding = eigvecs[:, :n_clusters]
    norms = np.linalg.norm(embedding, axis=1, keepdims=True)
    embedding = embedding / np.maximum(norms, 1e-12)
    rng = np.random.default_rng(seed)
    return _kmeans(embedding, n_clusters, rng)


def generate_candidates(
    cluster_graphs: Sequence[InteractionGraph],
    lexicon: Lexicon,
    min_support: float,
    population: Sequence[InteractionGraph],
    cluster_fps: Sequence[int] | None = None,
    population_fps: Sequence[int] | None = None,
    epsilon: float = 1e-9,
) -> list[Candidate]:
    """Materialize one candidate per well-supported lexicon entry.

    An entry of size >= 2 qualifies when at least ``min_support`` of the
    cluster's graphs contain it; the candidate carries the modal induced
    edge configuration across those graphs (ties to lower total weight) and
    is scored against the full population.
    """
    if not 0 < min_support <= 1:
        raise ValueError(f"min_support must be in (0, 1], got {min_support}")
    if cluster_fps is None:
        cluster_fps = [encode(g, lexicon) for g in cluster_graphs]
    if population_fps is None:
        population_fps = [encode(g, lexicon) for g in population]

    support_mask = 0
    counts: dict[int, int] = {}
    for fp in cluster_fps:
        support_mask |= fp
    for k in iter_bits(support_mask):
        counts[k] = 0
    for fp in cluster_fps:
        for k in iter_bits(fp):
            counts[k] += 1

    threshold = min_support * len(cluster_graphs) - 1e-9
    out: list[Candidate] = []
    for k in sorted(counts):
        entry = lexicon.entries[k]
        if len(entry.labels) < 2 or counts[k] < threshold:
            continue
        configs: dict[tuple, tuple[int, list[Edge]]] = {}
        bit = 1 << k
        for graph, fp in zip(cluster_graphs, cluster_fps):
            if not fp & bit:
                continue
            induced = induced_subgraph(graph, entry.labels)
            key = tuple(
                sorted(
                    (str(e.src), str(e.dst), e.relation.value, e.weight)
                    for e in induced.edges
                )
            )
            seen, edges = configs.get(key, (0, induced.edges))
            configs[key] = (seen + 1, edges)
        modal_key = min(
            configs,
            key=lambda key: (
                -configs[key][0],
                sum(item[3] for item in key),
                key,
            ),
        )
        edges = configs[modal_key][1]
        subgraph = InteractionGraph(
            f"candidate-{k}",
            {label: () for label in sorted(entry.labels)},
            sorted(edges, key=lambda e: (e.src, e.dst, e.relation.value)),
        )
        weights = [e.weight for e in edges]
        out.append(
            Candidate(
                subgraph=subgraph,
                entry_index=k,
                mean_weight=float(np.mean(weights)),
                node_count=len(entry.labels),
                favoritism=favoritism(
                    subgraph, population, lexicon, population_fps, epsilon
                ),
            )
        )
    return out


def _pool_candidates(
    candidates: Sequence[Candidate] | Sequence[Sequence[Candidate]],
) -> list[Candidate]:
    if candidates and isinstance(candidates[0], Candidate):
        flat = list(candidates)  # type: ignore[arg-type]
    else:
        flat = [c for group in candidates for c in group]  # type: ignore[union-attr]
    unique: dict[tuple, Candidate] = {}
    for candidate in flat:
        unique.setdefault((candidate.entry_index, candidate.config_key()), candidate)
    pooled = sorted(
        unique.values(), key=lambda c: (c.entry_index, c.config_key())
    )
    by_entry: dict[int, int] = {}
    for candidate in pooled:
        by_entry[candidate.entry_index] = by_entry.get(candidate.entry_index, 0) + 1
    ordinal: dict[int, int] = {}
    for candidate in pooled:
        j = ordinal.get(candidate.entry_index, 0)
        ordinal[candidate.entry_index] = j + 1
        if by_entry[candidate.entry_index] == 1:
            candidate.pattern_id = f"p{candidate.entry_index:06d}"
        else:
            candidate.pattern_id = f"p{candidate.entry_index:06d}.{j}"
    return pooled


def _golden_max(f, lo: float, hi: float, iters: int = 90) -> float:
    """Golden-section maximizer for a unimodal objective on [lo, hi]."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - inv_phi * (b - a)
    x2 = a + inv_phi * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if b - a < 1e-12:
            break
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + inv_phi * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - inv_phi * (b - a)
            f1 = f(x1)
    mid = (a + b) / 2.0
    best = max(((lo, f(lo)), (mid, f(mid))), key=lambda p: p[1])
    return best[0]


def run_em(
    candidates: Sequence[Candidate] | Sequence[Sequence[Candidate]],
    population: Sequence[InteractionGraph],
    population_fps: Sequence[int],
    lexicon_n: int,
    clusters: dict[str, int],
    init: PriorParams = PriorParams(),
    tol: float = 1e-6,
    max_iter: int = 200,
    lambda_cap: float = 100.0,
    seed: int = 0,
) -> DiscoveryResult:
    """Fit the prior rates by EM over the pooled candidate set.

    E-step: responsibilities over the candidates each graph contains,
    proportional to the prior score at the current rates (uniform when a
    graph contains none). M-step: coordinate ascent with bounded
    golden-section search on each rate; the expected complete log-likelihood
    Q is concave in the rates thanks to the summed Gibbs normalizer.
    """
    pooled = _pool_candidates(candidates)
    if not pooled:
        raise NoCandidates("no candidate interpretations to fit")
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")

    u = np.array(
        [[-c.mean_weight, c.node_count, c.favoritism] for c in pooled]
    )
    if not np.all(np.isfinite(u)):
        raise NonFiniteScore(
            "candidate scores contain non-finite values; check the epsilon floor"
        )
    contained = np.array(
        [
            [bool(fp & (1 << c.entry_index)) for c in pooled]
            for fp in population_fps
        ],
        dtype=bool,
    )
    m = len(population)

    def _lse(values: np.ndarray) -> float:
        peak = values.max()
        return float(peak + math.log(np.exp(values - peak).sum()))

    def log_z(lam: np.ndarray) -> float:
        return _lse(u @ lam)

    def log_likelihood(lam: np.ndarray) -> float:
        """Observed-data log-likelihood: per graph, the log prior mass of the
        candidates it contains. This is the quantity EM provably never
        decreases, so it is what the trace records. Graphs containing no
        candidate contribute a constant and are skipped."""
        logits = u @ lam
        lz = log_z(lam)
        total = 0.0
        for row in range(m):
            mask = contained[row]
            if mask.any():
                total += _lse(logits[mask]) - lz
        return total

    def responsibilities(lam: np.ndarray) -> np.ndarray:
        logits = u @ lam
        gamma = np.zeros((m, len(pooled)))
        for row in range(m):
            mask = contained[row]
            if mask.any():
                local = logits[mask]
                local = np.exp(local - local.max())
                gamma[row, mask] = local / local.sum()
            else:
                gamma[row, :] = 1.0 / len(pooled)
        return gamma

    lam = init.as_array().astype(float)
    trace: list[float] = []
    for _ in range(max_iter):
        gamma = responsibilities(lam)
        moments = (gamma @ u).sum(axis=0)

        def q_of(vec: np.ndarray) -> float:
            return float(vec @ moments) - m * log_z(vec)

        new_lam = lam.copy()
        previous_q = q_of(new_lam)
        for _sweep in range(12):
            for coord in range(3):

                def objective(value: float) -> float:
                    trial = new_lam.copy()
                    trial[coord] = value
                    return q_of(trial)

                new_lam[coord] = _golden_max(objective, 0.0, lambda_cap)
            swept_q = q_of(new_lam)
            if swept_q - previous_q < 1e-12:
                break
            previous_q = swept_q
        lam = new_lam
        trace.append(log_likelihood(lam))
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) < tol:
            break

    params = PriorParams(*[float(v) for v in lam])
    logits = u @ lam
    posterior = np.exp(logits - logits.max())
    posterior = posterior / posterior.sum()
    order = sorted(
        range(len(pooled)),
        key=lambda i: (
            -posterior[i],
            pooled[i].mean_weight,
            pooled[i].config_key(),
        ),
    )
    ranked = [(pooled[i], float(posterior[i])) for i in order]
    return DiscoveryResult(
        ranked=ranked,
        params=params,
        trace=trace,
        clusters=clusters,
        seed=seed,
        lexicon_n=lexicon_n,
    )


def sample_significant(result: DiscoveryResult, rate: float) -> list[Candidate]:
    """Top ceil(rate * pool size) interpretations by posterior; ties broken by
    lower mean weight, then canonical edge order."""
    if not 0 < rate <= 1:
        raise ValueError(f"rate must be in (0, 1], got {rate}")
    count = math.ceil(rate * len(result.ranked))
    return [candidate for candidate, _ in result.ranked[:count]]
