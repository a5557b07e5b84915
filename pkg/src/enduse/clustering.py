"""Signature extraction: k-medoids over DTW similarities plus smoothing.

Per fixture, labeled events are normalized, compared pairwise with DTW,
partitioned with PAM-style k-medoids (cluster count chosen by silhouette),
and each cluster's lowest-total-dissimilarity member becomes a prototype
signature. Intermittent appliances additionally keep one full operating
cycle and the burst sub-patterns inside it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dtw import SimilarityMatrix, dtw_distance, similarity_matrix
from .errors import InvalidInput, MissingFixtureData
from .timeseries import (
    INTERMITTENT_FIXTURES,
    EventRecord,
    FlowSeries,
    extract_events,
    z_normalize,
)

LIBRARY_FORMAT_VERSION = 1

KIND_REGULAR = "regular"
KIND_FULL_CYCLE = "full_cycle"
KIND_SUB_PATTERN = "sub_pattern"


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    medoid_indices: np.ndarray   # k event indices
    membership: np.ndarray       # event index -> cluster id
    sizes: np.ndarray            # events per cluster

    def cluster_members(self, cluster_id: int) -> np.ndarray:
        return np.flatnonzero(self.membership == cluster_id)


@dataclass(frozen=True)
class Signature:
    """A normalized prototype pattern for one fixture."""

    values: np.ndarray
    fixture: str
    duration_s: float
    kind: str = KIND_REGULAR

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.size == 0:
            raise InvalidInput("signature cannot be empty")


@dataclass
class SignatureLibrary:
    """Per-fixture prototype signatures plus provenance metadata."""

    fixtures: dict[str, list[Signature]]
    resolution_s: float = 1.0
    provenance: dict = field(default_factory=dict)

    def signatures(self, fixture: str, kind: str | None = None) -> list[Signature]:
        found = self.fixtures.get(fixture, [])
        if kind is not None:
            found = [s for s in found if s.kind == kind]
        return found

    def full_cycle(self, fixture: str) -> Signature | None:
        cycles = self.signatures(fixture, KIND_FULL_CYCLE)
        return cycles[0] if cycles else None

    def to_document(self) -> dict:
        return {
            "version": LIBRARY_FORMAT_VERSION,
            "resolution_s": self.resolution_s,
            "provenance": self.provenance,
            "fixtures": [
                {
                    "name": name,
                    "signatures": [
                        {
                            "kind": sig.kind,
                            "duration_s": round(float(sig.duration_s), 6),
                            "values": [float(f"{v:.9g}") for v in sig.values],
                        }
                        for sig in sigs
                    ],
                }
                for name, sigs in sorted(self.fixtures.items())
            ],
        }

    @classmethod
    def from_document(cls, doc: dict) -> "SignatureLibrary":
        fixtures = {}
        for entry in doc["fixtures"]:
            fixtures[entry["name"]] = [
                Signature(
                    values=np.asarray(sig["values"], dtype=float),
                    fixture=entry["name"],
                    duration_s=float(sig["duration_s"]),
                    kind=sig["kind"],
                )
                for sig in entry["signatures"]
            ]
        return cls(fixtures=fixtures, resolution_s=float(doc["resolution_s"]),
                   provenance=doc.get("provenance", {}))

    def save(self, path) -> None:
        with open(path, "w") as handle:
            json.dump(self.to_document(), handle, indent=2, sort_keys=True)
            handle.write("\n")

    @classmethod
    def load(cls, path) -> "SignatureLibrary":
        with open(path) as handle:
            return cls.from_document(json.load(handle))


@dataclass(frozen=True)
class CalibrationConfig:
    k_min: int = 2
    k_max: int = 10
    smooth_degree: int | None = None
    seed: int = 0
    dedup_eps: float = 1e-9
    # Pairwise DTW grows quadratically; large fixtures are deterministically
    # subsampled before clustering.
    max_events_per_fixture: int = 150
    zero_eps: float = 0.0


def k_medoids(matrix: SimilarityMatrix, k: int, seed: int = 0,
              max_iter: int = 100) -> ClusterAssignment:
    """PAM-style search on a precomputed distance matrix.

    Seeding is greedy farthest-first from the seeded RNG's first pick, which
    keeps small-sample runs reproducible. The alternation (assign to nearest
    medoid, update each medoid to its cluster's min-total-distance member)
    runs to a fixed point; whenever it stalls, the best strictly improving
    medoid/non-medoid swap restarts it, so the total cost is non-increasing
    throughout. Medoids always claim themselves; other points go to the
    nearest medoid (ties to the lower cluster id).
    """
    dist = matrix.values
    a = matrix.size
    if not 1 <= k <= a:
        raise InvalidInput(f"k must be in [1, {a}], got {k}")

    rng = np.random.default_rng(seed)
    medoids = [int(rng.integers(a))]
    while len(medoids) < k:
        nearest = np.min(dist[:, medoids], axis=1)
        nearest[medoids] = -1.0  # already chosen
        medoids.append(int(np.argmax(nearest)))
    medoids = np.asarray(sorted(medoids))

    for _ in range(max_iter):
        membership = np.argmin(dist[:, medoids], axis=1)
        membership[medoids] = np.arange(k)
        updated = medoids.copy()
        for c in range(k):
            members = np.flatnonzero(membership == c)
            totals = dist[np.ix_(members, members)].sum(axis=1)
            updated[c] = members[int(np.argmin(totals))]
        updated = np.sort(updated)
        if not np.array_equal(updated, medoids):
            medoids = updated
            continue
        swapped = _best_swap(dist, medoids)
        if swapped is None:
            break
        medoids = swapped

    membership = np.argmin(dist[:, medoids], axis=1)
    membership[medoids] = np.arange(k)
    sizes = np.bincount(membership, minlength=k)
    return ClusterAssignment(k=k, medoid_indices=medoids, membership=membership, sizes=sizes)


def _best_swap(dist: np.ndarray, medoids: np.ndarray) -> np.ndarray | None:
    """Best strictly cost-reducing medoid/non-medoid swap, if any."""
    current = dist[:, medoids].min(axis=1).sum()
    best_cost = current - 1e-12
    best = None
    others = [x for x in range(dist.shape[0]) if x not in set(medoids.tolist())]
    for position in range(medoids.size):
        candidate = medoids.copy()
        for x in others:
            candidate[position] = x
            cost = dist[:, candidate].min(axis=1).sum()
            if cost < best_cost:
                best_cost = cost
                best = np.sort(candidate.copy())
        candidate[position] = medoids[position]
    return best


def k_medoids_cost(matrix: SimilarityMatrix, assignment: ClusterAssignment) -> float:
    return float(matrix.values[np.arange(matrix.size),
                               assignment.medoid_indices[assignment.membership]].sum())


def silhouette(matrix: SimilarityMatrix, assignment: ClusterAssignment) -> float:
    """Mean silhouette score over all events, in [-1, 1].

    Singleton clusters contribute 0, as does the fully degenerate case where
    both the intra and nearest-other distances vanish.
    """
    if assignment.k < 2:
        raise InvalidInput("silhouette requires at least two clusters")
    dist = matrix.values
    a = matrix.size
    scores = np.zeros(a)
    members = [assignment.cluster_members(c) for c in range(assignment.k)]
    for idx in range(a):
        own = assignment.membership[idx]
        own_members = members[own]
        if own_members.size <= 1:
            continue
        intra = dist[idx, own_members].sum() / (own_members.size - 1)
        other = min(
            dist[idx, members[c]].mean()
            for c in range(assignment.k)
            if c != own and members[c].size
        )
        denom = max(intra, other)
        scores[idx] = 0.0 if denom == 0 else (other - intra) / denom
    return float(scores.mean())


def select_k(matrix: SimilarityMatrix, k_range=range(2, 11), seed: int = 0) -> ClusterAssignment:
    """Cluster for each k in range and keep the best-silhouette assignment."""
    candidates = [k for k in k_range if 2 <= k <= matrix.size]
    if not candidates:
        raise InvalidInput("k_range contains no feasible cluster count")
    best = None
    best_score = -np.inf
    for k in sorted(candidates):
        assignment = k_medoids(matrix, k, seed=seed)
        score = silhouette(matrix, assignment)
        if score > best_score:  # ties keep the smaller k
            best, best_score = assignment, score
    return best


def medoid_signature(matrix: SimilarityMatrix, assignment: ClusterAssignment,
                     cluster_id: int) -> int:
    """Index of the cluster member with the lowest mean dissimilarity."""
    members = assignment.cluster_members(cluster_id)
    if members.size == 0:
        raise InvalidInput(f"cluster {cluster_id} is empty")
    totals = matrix.values[np.ix_(members, members)].sum(axis=1) / members.size
    return int(members[int(np.argmin(totals))])


def smooth_values(values: np.ndarray, degree: int) -> np.ndarray:
    """Least-squares polynomial fit sampled back at the input points.

    Negative fitted values are clamped to zero; flow patterns are
    nonnegative and the fit may undershoot near steep edges.
    """
    values = np.asarray(values, dtype=float)
    if degree < 0:
        raise InvalidInput("polynomial degree must be nonnegative")
    if degree >= values.size:
        raise InvalidInput(f"degree {degree} requires more than {degree} samples")
    x = np.arange(values.size, dtype=float)
    # Polynomial.fit maps x onto [-1, 1] first, keeping high degrees on long
    # signatures well conditioned.
    fitted = np.polynomial.Polynomial.fit(x, values, degree)(x)
    return np.maximum(fitted, 0.0)


def smooth_signature(sig: Signature, degree: int) -> Signature:
    return Signature(values=smooth_values(sig.values, degree), fixture=sig.fixture,
                     duration_s=sig.duration_s, kind=sig.kind)


def extract_signatures(labeled: dict[str, list[EventRecord]],
                       config: CalibrationConfig | None = None,
                       resolution_s: float = 1.0) -> SignatureLibrary:
    """Run the full calibration pipeline over per-fixture labeled events.

    Intermittent fixtures are expected to provide full operating cycles
    (bursts with their pauses); the library stores the medoid cycle as the
    single full-cycle pattern and clusters the bursts into sub-patterns.
    """
    config = config or CalibrationConfig()
    if not labeled:
        raise MissingFixtureData("no labeled fixtures provided")
    fixtures: dict[str, list[Signature]] = {}
    for fixture in sorted(labeled):
        events = labeled[fixture]
        if not events:
            raise MissingFixtureData(f"fixture '{fixture}' has no labeled events")
        raw = [np.asarray(e.flows.samples, dtype=float) for e in events]
        if fixture in INTERMITTENT_FIXTURES:
            fixtures[fixture] = _intermittent_signatures(fixture, raw, config, resolution_s)
        else:
            fixtures[fixture] = _cluster_signatures(fixture, raw, config, resolution_s,
                                                    KIND_REGULAR)
    return SignatureLibrary(
        fixtures=fixtures,
        resolution_s=resolution_s,
        provenance={
            "seed": config.seed,
            "smoothing_degree": config.smooth_degree,
            "k_range": [config.k_min, config.k_max],
        },
    )


def _prepare(values: np.ndarray, config: CalibrationConfig) -> np.ndarray:
    if config.smooth_degree is not None and config.smooth_degree < values.size:
        values = smooth_values(values, config.smooth_degree)
    return z_normalize(values)[0]


def subsample_events(raw: list[np.ndarray], config: CalibrationConfig) -> list[np.ndarray]:
    """Deterministic cap on the events entering the pairwise comparison."""
    if len(raw) <= config.max_events_per_fixture:
        return raw
    rng = np.random.default_rng(config.seed)
    keep = np.sort(rng.choice(len(raw), size=config.max_events_per_fixture, replace=False))
    return [raw[i] for i in keep]


def _cluster_signatures(fixture: str, raw: list[np.ndarray], config: CalibrationConfig,
                        resolution_s: float, kind: str) -> list[Signature]:
    raw = subsample_events(raw, config)
    if len(raw) == 1:
        return [Signature(values=_prepare(raw[0], config), fixture=fixture,
                          duration_s=raw[0].size * resolution_s, kind=kind)]

    matrix = similarity_matrix(raw)
    assignment = select_k(matrix, range(config.k_min, config.k_max + 1), seed=config.seed)
    chosen = [medoid_signature(matrix, assignment, c) for c in range(assignment.k)]

    signatures: list[Signature] = []
    for idx in chosen:
        candidate = Signature(values=_prepare(raw[idx], config), fixture=fixture,
                              duration_s=raw[idx].size * resolution_s, kind=kind)
        duplicate = any(
            dtw_distance(candidate.values, kept.values) <= config.dedup_eps
            for kept in signatures
        )
        if not duplicate:
            signatures.append(candidate)
    return signatures


def _intermittent_signatures(fixture: str, cycles: list[np.ndarray],
                             config: CalibrationConfig,
                             resolution_s: float) -> list[Signature]:
    # One full-cycle prototype: the global medoid over all labeled cycles.
    if len(cycles) == 1:
        cycle_idx = 0
    else:
        matrix = similarity_matrix(cycles)
        whole = ClusterAssignment(k=1, medoid_indices=np.array([0]),
                                  membership=np.zeros(len(cycles), dtype=int),
                                  sizes=np.array([len(cycles)]))
        cycle_idx = medoid_signature(matrix, whole, 0)
    cycle = cycles[cycle_idx]
    full = Signature(values=z_normalize(cycle)[0], fixture=fixture,
                     duration_s=cycle.size * resolution_s, kind=KIND_FULL_CYCLE)

    bursts: list[np.ndarray] = []
    for raw in cycles:
        series = FlowSeries(raw, resolution_s)
        for burst in extract_events(series, zero_eps=config.zero_eps):
            bursts.append(burst.flows.samples)
    if not bursts:
        raise MissingFixtureData(f"fixture '{fixture}' cycles contain no flow")
    subs = _cluster_signatures(fixture, bursts, config, resolution_s, KIND_SUB_PATTERN)
    return [full] + subs
