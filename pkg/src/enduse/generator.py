"""Calibrated stochastic generation of labeled household consumption.

Per day and fixture the generator samples an event count, then for each
event a start time, duration, and volume; a prototype signature is scaled to
match and placed on the fixture's series. The total trace is the exact
sample-wise sum of the fixture traces, and a ledger records the ground truth
for every placed event.

Randomness is fully splittable: every (day, fixture, event ordinal) gets its
own stream derived from the master seed, so reruns are byte-identical and
changing one day's draws cannot disturb any other day.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .clustering import KIND_FULL_CYCLE, KIND_REGULAR, Signature, SignatureLibrary
from .errors import InvalidInput, ModelStateError, VolumeInfeasible
from .timeseries import FlowSeries, resample, write_trace_csv

MODEL_FORMAT_VERSION = 1
SECONDS_PER_DAY = 86400

_TAG_COUNTS = 0
_TAG_EVENT = 1


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent deterministic generator for a (seed, key...) address."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass
class CountDistribution:
    """Events-per-day model: Poisson(lam) or NegativeBinomial(r, p)."""

    kind: str
    lam: float = 0.0
    r: float = 1.0
    p: float = 0.5

    def __post_init__(self):
        if self.kind not in ("poisson", "negative_binomial"):
            raise InvalidInput(f"unknown count distribution '{self.kind}'")
        if self.kind == "poisson" and (not math.isfinite(self.lam) or self.lam < 0):
            raise InvalidInput("poisson rate must be finite and nonnegative")
        if self.kind == "negative_binomial" and not (self.r > 0 and 0 < self.p <= 1):
            raise InvalidInput("negative binomial requires r > 0 and 0 < p <= 1")

    def sample(self, rng: np.random.Generator) -> int:
        if self.kind == "poisson":
            return int(rng.poisson(self.lam))
        return int(rng.negative_binomial(self.r, self.p))

    def mean(self) -> float:
        if self.kind == "poisson":
            return self.lam
        return self.r * (1 - self.p) / self.p

    def to_document(self) -> dict:
        if self.kind == "poisson":
            return {"kind": self.kind, "lam": self.lam}
        return {"kind": self.kind, "r": self.r, "p": self.p}

    @classmethod
    def from_document(cls, doc: dict) -> "CountDistribution":
        return cls(**doc)


@dataclass
class StartTimeProfile:
    """Kernel-smoothed seconds-of-day start distribution.

    The stored histogram is expanded to one bin per second, circularly
    convolved with a Gaussian kernel, and sampled by inverse CDF, which is
    reproducible and honors wrap-around at midnight.
    """

    weights: np.ndarray
    bin_seconds: int = 300
    bandwidth_s: float = 600.0
    _cdf: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        self.weights = weights
        if weights.size * self.bin_seconds != SECONDS_PER_DAY:
            raise InvalidInput("start-time bins must tile the day exactly")
        if weights.min() < 0 or weights.sum() <= 0:
            raise InvalidInput("start-time weights must be nonnegative with positive mass")

    def _density(self) -> np.ndarray:
        per_second = np.repeat(self.weights / self.bin_seconds, self.bin_seconds)
        if self.bandwidth_s <= 0:
            return per_second
        offsets = np.arange(SECONDS_PER_DAY)
        wrapped = np.minimum(offsets, SECONDS_PER_DAY - offsets)
        kernel = np.exp(-0.5 * (wrapped / self.bandwidth_s) ** 2)
        kernel /= kernel.sum()
        smoothed = np.fft.irfft(np.fft.rfft(per_second) * np.fft.rfft(kernel),
                                n=SECONDS_PER_DAY)
        return np.maximum(smoothed, 0.0)

    def cdf(self) -> np.ndarray:
        if self._cdf is None:
            density = self._density()
            cdf = np.cumsum(density)
            self._cdf = cdf / cdf[-1]
        return self._cdf

    def sample(self, rng: np.random.Generator) -> int:
        """Second-of-day in [0, 86400)."""
        return int(np.searchsorted(self.cdf(), rng.random(), side="left"))

    def to_document(self) -> dict:
        return {
            "bin_seconds": self.bin_seconds,
            "bandwidth_s": self.bandwidth_s,
            "weights": [float(f"{w:.9g}") for w in self.weights],
        }

    @classmethod
    def from_document(cls, doc: dict) -> "StartTimeProfile":
        return cls(weights=np.asarray(doc["weights"], dtype=float),
                   bin_seconds=int(doc["bin_seconds"]),
                   bandwidth_s=float(doc["bandwidth_s"]))


@dataclass
class DurationVolumeMixture:
    """Two-component bivariate Gaussian over (duration s, volume L)."""

    weights: np.ndarray
    means: np.ndarray   # (k, 2)
    covs: np.ndarray    # (k, 2, 2)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        self.covs = np.asarray(self.covs, dtype=float)
        if abs(self.weights.sum() - 1.0) > 1e-9 or self.weights.min() < 0:
            raise InvalidInput("mixture weights must be nonnegative and sum to 1")
        if not np.all(np.isfinite(self.means)) or not np.all(np.isfinite(self.covs)):
            raise InvalidInput("mixture parameters must be finite")
        for cov in self.covs:
            if np.min(np.linalg.eigvalsh(cov)) < -1e-9:
                raise InvalidInput("mixture covariances must be positive semi-definite")

    def sample(self, rng: np.random.Generator) -> tuple[float, float]:
        component = int(rng.choice(self.weights.size, p=self.weights))
        duration, volume = rng.multivariate_normal(self.means[component],
                                                   self.covs[component])
        return float(duration), float(volume)

    def to_document(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covs": self.covs.tolist(),
        }

    @classmethod
    def from_document(cls, doc: dict) -> "DurationVolumeMixture":
        return cls(weights=np.asarray(doc["weights"]), means=np.asarray(doc["means"]),
                   covs=np.asarray(doc["covs"]))


@dataclass
class FixturePriors:
    """Sampling distributions plus flow-rate bounds for one fixture."""

    events_per_day: CountDistribution
    start_time: StartTimeProfile
    duration_volume: DurationVolumeMixture
    flow_bounds: tuple[float, float]
    # Achievable mean-flow range implied by the fixture's signatures; filled
    # in when the priors join a UsageModel.
    mean_flow_envelope: tuple[float, float] | None = None

    def __post_init__(self):
        lo, hi = self.flow_bounds
        if not (math.isfinite(lo) and math.isfinite(hi) and 0 <= lo < hi):
            raise InvalidInput(f"flow bounds must satisfy 0 <= min < max, got {self.flow_bounds}")

    def to_document(self) -> dict:
        return {
            "events_per_day": self.events_per_day.to_document(),
            "start_time": self.start_time.to_document(),
            "duration_volume": self.duration_volume.to_document(),
            "flow_bounds": list(self.flow_bounds),
        }

    @classmethod
    def from_document(cls, doc: dict) -> "FixturePriors":
        return cls(
            events_per_day=CountDistribution.from_document(doc["events_per_day"]),
            start_time=StartTimeProfile.from_document(doc["start_time"]),
            duration_volume=DurationVolumeMixture.from_document(doc["duration_volume"]),
            flow_bounds=tuple(doc["flow_bounds"]),
        )


def shift_to_nonnegative(values: np.ndarray) -> np.ndarray:
    """Raise a pattern so its minimum is zero (normalized patterns dip below)."""
    low = values.min()
    return values - low if low < 0 else values.copy()


def signature_flow_ratio(sig: Signature) -> float:
    """Mean/peak flow ratio of a signature's nonnegative shape."""
    shape = shift_to_nonnegative(np.asarray(sig.values, dtype=float))
    peak = shape.max()
    if peak <= 0:
        raise InvalidInput("signature has no positive flow after shifting")
    return float(shape.mean() / peak)


@dataclass
class UsageModel:
    """Everything `generate` needs: priors, signatures, and metadata."""

    priors: dict[str, FixturePriors]
    library: SignatureLibrary
    resolution_s: float = 1.0
    occupants: int = 2
    efficiency: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.resolution_s <= 0:
            raise InvalidInput("resolution must be positive")
        for fixture, priors in self.priors.items():
            signatures = self.library.signatures(fixture)
            if not signatures:
                raise ModelStateError(f"fixture '{fixture}' has priors but no signatures")
            if priors.mean_flow_envelope is None:
                ratios = [
                    signature_flow_ratio(sig)
                    for sig in signatures
                    if sig.kind in (KIND_REGULAR, KIND_FULL_CYCLE)
                ]
                lo, hi = priors.flow_bounds
                priors.mean_flow_envelope = (lo * min(ratios), hi * max(ratios))

    def generating_signatures(self, fixture: str) -> list[Signature]:
        """Patterns that seed whole events: full cycles for intermittent
        fixtures, regular prototypes otherwise."""
        cycles = self.library.signatures(fixture, KIND_FULL_CYCLE)
        return cycles if cycles else self.library.signatures(fixture, KIND_REGULAR)

    def to_document(self) -> dict:
        return {
            "version": MODEL_FORMAT_VERSION,
            "resolution_s": self.resolution_s,
            "occupants": self.occupants,
            "efficiency": dict(sorted(self.efficiency.items())),
            "fixtures": {
                name: priors.to_document() for name, priors in sorted(self.priors.items())
            },
            "library": self.library.to_document(),
        }

    @classmethod
    def from_document(cls, doc: dict) -> "UsageModel":
        return cls(
            priors={name: FixturePriors.from_document(entry)
                    for name, entry in doc["fixtures"].items()},
            library=SignatureLibrary.from_document(doc["library"]),
            resolution_s=float(doc["resolution_s"]),
            occupants=int(doc.get("occupants", 2)),
            efficiency=doc.get("efficiency", {}),
        )

    def save(self, path) -> None:
        with open(path, "w") as handle:
            json.dump(self.to_document(), handle, indent=2, sort_keys=True)
            handle.write("\n")

    @classmethod
    def load(cls, path) -> "UsageModel":
        with open(path) as handle:
            return cls.from_document(json.load(handle))


@dataclass
class LedgerEntry:
    """Ground truth for one placed event."""

    event_id: str
    fixture: str
    start_index: int
    length: int
    resolution_s: float
    volume_l: float
    sampled_duration_s: float
    sampled_volume_l: float
    signature_id: int
    overlap_group: str = ""
    active_intervals: list[tuple[int, int]] = field(default_factory=list)

    @property
    def start_s(self) -> float:
        return self.start_index * self.resolution_s

    @property
    def duration_s(self) -> float:
        return self.length * self.resolution_s

    @property
    def end_index(self) -> int:
        return self.start_index + self.length


@dataclass
class GeneratedDataset:
    """Synthetic household consumption with ground-truth ledger."""

    fixture_series: dict[str, np.ndarray]
    total: np.ndarray
    ledger: list[LedgerEntry]
    resolution_s: float
    days: int
    seed: int
    skipped_events: int = 0

    def series(self, fixture: str | None = None) -> FlowSeries:
        values = self.total if fixture is None else self.fixture_series[fixture]
        return FlowSeries(values, self.resolution_s, origin=0.0)

    def dominant_labels(self) -> np.ndarray:
        """Per-sample label of the highest-flow fixture, '' when idle."""
        names = sorted(self.fixture_series)
        best = np.zeros_like(self.total)
        winner = np.full(self.total.size, -1, dtype=np.int8)
        for idx, name in enumerate(names):
            values = self.fixture_series[name]
            better = values > best
            winner[better] = idx
            np.maximum(best, values, out=best)
        labels = np.full(self.total.size, "", dtype=object)
        for idx, name in enumerate(names):
            labels[winner == idx] = name
        labels[best <= 0] = ""
        return labels

    def ledger_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "event_id": [e.event_id for e in self.ledger],
            "fixture": [e.fixture for e in self.ledger],
            "start_s": [e.start_s for e in self.ledger],
            "duration_s": [e.duration_s for e in self.ledger],
            "volume_l": [e.volume_l for e in self.ledger],
            "overlap_group": [e.overlap_group for e in self.ledger],
        })

    def export(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths: dict[str, Path] = {}
        for fixture in sorted(self.fixture_series):
            path = out / f"{fixture}.csv"
            write_trace_csv(path, self.series(fixture))
            paths[fixture] = path
        paths["total"] = out / "total.csv"
        write_trace_csv(paths["total"], self.series())
        paths["total_labeled"] = out / "total_labeled.csv"
        write_trace_csv(paths["total_labeled"], self.series(), labels=self.dominant_labels())
        paths["ledger"] = out / "ledger.csv"
        self.ledger_frame().to_csv(paths["ledger"], index=False, float_format="%.9g")
        return paths


def sample_daily_counts(priors: dict[str, FixturePriors], day: int,
                        seed: int) -> dict[str, int]:
    """Independent per-fixture event counts for one day."""
    counts = {}
    for fx_index, fixture in enumerate(sorted(priors)):
        rng = substream(seed, _TAG_COUNTS, day, fx_index)
        counts[fixture] = priors[fixture].events_per_day.sample(rng)
    return counts


def sample_event_params(priors: FixturePriors, rng: np.random.Generator,
                        resolution_s: float = 1.0,
                        max_tries: int = 100) -> tuple[int, float, float]:
    """Draw (start second-of-day, duration s, volume L) for one event.

    Draws are rejected until the duration covers at least one sample, the
    volume is positive, and the implied mean flow sits within [0.25x, 4x] of
    the fixture's signature mean-flow envelope; after `max_tries` the last
    draw is clamped into range instead.
    """
    envelope = priors.mean_flow_envelope
    start = priors.start_time.sample(rng)
    duration = volume = 0.0
    for _ in range(max_tries):
        duration, volume = priors.duration_volume.sample(rng)
        if duration < resolution_s or volume <= 0:
            continue
        if envelope is not None:
            mean_flow = volume / duration
            if not (0.25 * envelope[0] <= mean_flow <= 4.0 * envelope[1]):
                continue
        return start, float(duration), float(volume)

    duration = max(duration, resolution_s)
    volume = max(volume, 1e-6)
    if envelope is not None:
        mean_flow = volume / duration
        low, high = 0.25 * envelope[0], 4.0 * envelope[1]
        if mean_flow < low:
            volume = low * duration
        elif mean_flow > high:
            volume = high * duration
    return start, float(duration), float(volume)


def scale_signature(sig: Signature, duration_s: float, volume_l: float,
                    resolution_s: float, flow_bounds: tuple[float, float]) -> np.ndarray:
    """Scale a prototype to a requested duration and volume.

    The pattern is resampled to round(duration / resolution) samples, shifted
    to nonnegative, and amplitude-scaled for an exact volume. A peak outside
    `flow_bounds` is clamped and the duration re-stretched once to recover
    the volume; combinations that still violate the bounds raise
    VolumeInfeasible.
    """
    if duration_s < resolution_s:
        raise InvalidInput("duration must cover at least one sample")
    if volume_l <= 0:
        raise InvalidInput("volume must be positive")
    fmin, fmax = flow_bounds

    def build(length: int) -> tuple[np.ndarray, float]:
        shape = shift_to_nonnegative(resample(sig.values, length))
        per_unit = shape.sum() * resolution_s  # volume at amplitude 1
        if per_unit <= 0:
            raise VolumeInfeasible("signature carries no flow after shifting")
        return shape, per_unit

    length = max(1, round(duration_s / resolution_s))
    shape, per_unit = build(length)
    alpha = volume_l / per_unit
    peak = alpha * shape.max()

    if fmin <= peak <= fmax:
        return alpha * shape

    bound = fmax if peak > fmax else fmin
    alpha_clamped = bound / shape.max()
    volume_per_sample = alpha_clamped * per_unit / length
    target = volume_l / volume_per_sample
    length2 = max(1, math.ceil(target) if peak > fmax else math.floor(target))
    shape2, per_unit2 = build(length2)
    alpha2 = volume_l / per_unit2
    peak2 = alpha2 * shape2.max()
    if fmin * (1 - 1e-9) <= peak2 <= fmax * (1 + 1e-9):
        return alpha2 * shape2
    # Exact volume is out of reach; accept the clamped amplitude when the
    # volume error stays inside the 0.5% contract.
    realized = alpha_clamped * per_unit2
    if abs(realized - volume_l) <= 0.005 * volume_l:
        return alpha_clamped * shape2
    raise VolumeInfeasible(
        f"volume {volume_l:.3f} L not realizable within flow bounds {flow_bounds}")


def _active_intervals(flows: np.ndarray, offset: int) -> list[tuple[int, int]]:
    active = flows > 0
    padded = np.concatenate(([False], active, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [(offset + int(s), offset + int(e)) for s, e in zip(edges[0::2], edges[1::2])]


def generate(model: UsageModel, days: int, seed: int) -> GeneratedDataset:
    """Run the per-day, per-fixture sampling loop and place every event.

    Same-fixture overlapping draws are re-placed at a fresh start time (an
    appliance cannot run twice at once); cross-fixture overlaps stand and are
    recorded as overlap groups. Events near the end of the dataset are moved
    back to fit whole. Infeasible volume draws are skipped and counted.
    """
    if days < 1:
        raise InvalidInput("days must be at least 1")
    res = model.resolution_s
    samples_per_day = SECONDS_PER_DAY / res
    if abs(samples_per_day - round(samples_per_day)) > 1e-9:
        raise InvalidInput("resolution must divide the day evenly")
    samples_per_day = round(samples_per_day)
    total_samples = days * samples_per_day

    fixtures = sorted(model.priors)
    series = {fixture: np.zeros(total_samples) for fixture in fixtures}
    placed_spans: dict[str, list[tuple[int, int]]] = {fixture: [] for fixture in fixtures}
    entries: list[LedgerEntry] = []
    skipped = 0

    for day in range(days):
        counts = sample_daily_counts(model.priors, day, seed)
        for fx_index, fixture in enumerate(fixtures):
            priors = model.priors[fixture]
            signatures = model.generating_signatures(fixture)
            for ordinal in range(counts[fixture]):
                rng = substream(seed, _TAG_EVENT, day, fx_index, ordinal)
                start_s, duration_s, volume_l = sample_event_params(
                    priors, rng, resolution_s=res)
                sig_id = int(rng.integers(len(signatures)))
                try:
                    flows = scale_signature(signatures[sig_id], duration_s, volume_l,
                                            res, priors.flow_bounds)
                except VolumeInfeasible:
                    skipped += 1
                    continue
                length = flows.size
                if length > total_samples:
                    skipped += 1
                    continue

                start_index = None
                candidate_s = start_s
                for _ in range(100):
                    candidate = day * samples_per_day + round(candidate_s / res)
                    candidate = min(candidate, total_samples - length)
                    span = (candidate, candidate + length)
                    clash = any(span[0] < e and s < span[1] for s, e in placed_spans[fixture])
                    if not clash:
                        start_index = candidate
                        break
                    candidate_s = priors.start_time.sample(rng)
                if start_index is None:
                    skipped += 1
                    continue

                series[fixture][start_index:start_index + length] += flows
                placed_spans[fixture].append((start_index, start_index + length))
                entries.append(LedgerEntry(
                    event_id="",
                    fixture=fixture,
                    start_index=start_index,
                    length=length,
                    resolution_s=res,
                    volume_l=float(flows.sum()) * res,
                    sampled_duration_s=duration_s,
                    sampled_volume_l=volume_l,
                    signature_id=sig_id,
                    active_intervals=_active_intervals(flows, start_index),
                ))

    entries.sort(key=lambda e: (e.start_index, e.fixture))
    for number, entry in enumerate(entries, start=1):
        entry.event_id = f"evt{number:05d}"
    _assign_overlap_groups(entries)

    total = np.zeros(total_samples)
    for fixture in fixtures:
        total += series[fixture]
    return GeneratedDataset(fixture_series=series, total=total, ledger=entries,
                            resolution_s=res, days=days, seed=seed,
                            skipped_events=skipped)


def _assign_overlap_groups(entries: list[LedgerEntry]) -> None:
    """Union events whose active (nonzero-flow) intervals intersect.

    Interval intersection on the active samples, not the whole span: another
    appliance running during an intermittent cycle's pause is not an overlap
    because the flows never mix.
    """
    parent = list(range(len(entries)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    intervals = sorted(
        (s, e, idx)
        for idx, entry in enumerate(entries)
        for s, e in entry.active_intervals
    )
    active: list[tuple[int, int]] = []  # (end, idx)
    for start, end, idx in intervals:
        active = [(e, i) for e, i in active if e > start]
        for _, other in active:
            if other != idx:
                union(idx, other)
        active.append((end, idx))

    groups: dict[int, list[int]] = {}
    for idx in range(len(entries)):
        groups.setdefault(find(idx), []).append(idx)
    number = 0
    for root in sorted(groups, key=lambda r: entries[r].start_index):
        members = groups[root]
        if len(members) < 2:
            continue
        number += 1
        for idx in members:
            entries[idx].overlap_group = f"g{number:04d}"
