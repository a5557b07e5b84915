"""Flow-trace representation, event segmentation, and normalization.

A trace is a uniformly sampled sequence of flow values in L/s. Events are
maximal runs of above-threshold flow separated by zero-flow gaps; each event
carries duration, volume, and peak features used throughout the pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import InputFormatError, InvalidInput

FIXTURES = ("toilet", "shower", "faucet", "clothes_washer", "dishwasher")
INTERMITTENT_FIXTURES = ("clothes_washer", "dishwasher")

UNLABELED = "unclassified"


@dataclass(frozen=True)
class FlowSeries:
    """Uniformly sampled flow trace in L/s.

    `resolution` is the sampling period in seconds; `origin` optionally
    anchors the first sample on an absolute time axis (seconds).
    """

    samples: np.ndarray
    resolution: float = 1.0
    origin: float | None = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1:
            raise InvalidInput("flow samples must be one-dimensional")
        if self.resolution <= 0:
            raise InvalidInput(f"resolution must be positive, got {self.resolution}")
        if samples.size and (not np.all(np.isfinite(samples)) or samples.min() < 0):
            raise InvalidInput("flow samples must be finite and nonnegative")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size * self.resolution


@dataclass(frozen=True)
class NormalizationStats:
    """Mean and population standard deviation removed by `z_normalize`."""

    mean: float
    std: float


@dataclass(frozen=True)
class EventFeatures:
    duration_s: float
    volume_l: float
    peak_lps: float

    def as_dict(self) -> dict[str, float]:
        return {
            "duration_s": self.duration_s,
            "volume_l": self.volume_l,
            "peak_lps": self.peak_lps,
        }


FEATURE_NAMES = ("duration_s", "volume_l", "peak_lps")


@dataclass(frozen=True)
class EventRecord:
    """A contiguous above-threshold segment of a parent trace."""

    flows: FlowSeries
    start_index: int
    label: str | None = None
    features: EventFeatures = field(init=False)

    def __post_init__(self):
        if len(self.flows) == 0:
            raise InvalidInput("an event cannot be empty")
        object.__setattr__(self, "features", compute_features_from_values(
            self.flows.samples, self.flows.resolution))

    def __len__(self) -> int:
        return len(self.flows)

    @property
    def end_index(self) -> int:
        return self.start_index + len(self.flows)

    @property
    def start_s(self) -> float:
        return self.start_index * self.flows.resolution


def z_normalize(series) -> tuple[np.ndarray, NormalizationStats]:
    """Normalize a sequence to zero mean and unit population std.

    A constant input (std 0) maps to the all-zero sequence; the recorded
    stats preserve std = 0 so the degenerate case stays recognizable.
    """
    values = series.samples if isinstance(series, FlowSeries) else np.asarray(series, dtype=float)
    if values.size == 0:
        raise InvalidInput("cannot normalize an empty series")
    mean = float(values.mean())
    std = float(values.std())  # population form, 1/n
    if std == 0.0:
        return np.zeros_like(values), NormalizationStats(mean, 0.0)
    return (values - mean) / std, NormalizationStats(mean, std)


def compute_features_from_values(values: np.ndarray, resolution: float) -> EventFeatures:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise InvalidInput("cannot compute features of an empty event")
    return EventFeatures(
        duration_s=values.size * resolution,
        volume_l=float(values.sum()) * resolution,
        peak_lps=float(values.max()),
    )


def compute_features(event: EventRecord) -> EventFeatures:
    """Duration (s), volume (L), and peak flow (L/s) of an event."""
    return compute_features_from_values(event.flows.samples, event.flows.resolution)


def extract_events(series: FlowSeries, zero_eps: float = 0.0, min_gap: int = 1,
                   labels: np.ndarray | None = None) -> list[EventRecord]:
    """Segment a trace into events separated by zero-flow gaps.

    An event is a maximal run of samples above `zero_eps`; runs separated by
    fewer than `min_gap` consecutive at-or-below-threshold samples are merged
    (the short gap is kept inside the event). With `labels` given, each event
    is tagged with the label occurring most often among its active samples.
    """
    if zero_eps < 0:
        raise InvalidInput("zero_eps must be nonnegative")
    if min_gap < 1:
        raise InvalidInput("min_gap must be at least 1")
    values = series.samples
    if values.size == 0:
        return []

    active = values > zero_eps
    padded = np.concatenate(([False], active, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    starts, ends = edges[0::2], edges[1::2]  # half-open runs

    merged: list[tuple[int, int]] = []
    for start, end in zip(starts, ends):
        if merged and start - merged[-1][1] < min_gap:
            merged[-1] = (merged[-1][0], end)
        else:
            merged.append((start, end))

    events = []
    for start, end in merged:
        label = None
        if labels is not None:
            window = labels[start:end]
            tags = window[(values[start:end] > zero_eps) & (window != "")]
            if tags.size:
                uniques, counts = np.unique(tags, return_counts=True)
                label = str(uniques[np.argmax(counts)])
        events.append(EventRecord(
            flows=FlowSeries(values[start:end].copy(), series.resolution),
            start_index=int(start),
            label=label,
        ))
    return events


def resample(values: np.ndarray, length: int) -> np.ndarray:
    """Linear-interpolation resampling to `length` samples."""
    values = np.asarray(values, dtype=float)
    if length < 1:
        raise InvalidInput("target length must be at least 1")
    if values.size == 0:
        raise InvalidInput("cannot resample an empty sequence")
    if values.size == 1:
        return np.full(length, values[0])
    if length == values.size:
        return values.copy()
    positions = np.linspace(0.0, values.size - 1, length)
    return np.interp(positions, np.arange(values.size), values)


# ---------------------------------------------------------------------------
# CSV trace format: header `timestamp_s,flow_lps[,label]`, one row per sample.


def write_trace_csv(path, series: FlowSeries, labels: np.ndarray | None = None) -> None:
    origin = series.origin if series.origin is not None else 0.0
    timestamps = origin + np.arange(len(series)) * series.resolution
    frame = pd.DataFrame({"timestamp_s": timestamps, "flow_lps": series.samples})
    if labels is not None:
        frame["label"] = labels
    frame.to_csv(path, index=False, float_format="%.9g")


def read_trace_csv(path) -> tuple[FlowSeries, np.ndarray | None]:
    """Load a flow trace, validating uniform sampling and nonnegative flows."""
    try:
        frame = pd.read_csv(path, dtype={"timestamp_s": float, "flow_lps": float},
                            keep_default_na=False)
    except (ValueError, pd.errors.ParserError) as exc:
        raise InputFormatError(f"could not parse trace: {exc}", path=str(path)) from exc
    for column in ("timestamp_s", "flow_lps"):
        if column not in frame.columns:
            raise InputFormatError(f"missing required column '{column}'", path=str(path), line=1)
    if len(frame) == 0:
        raise InputFormatError("trace contains no samples", path=str(path), line=1)

    timestamps = frame["timestamp_s"].to_numpy()
    flows = frame["flow_lps"].to_numpy()
    bad = np.flatnonzero(~np.isfinite(flows) | (flows < 0))
    if bad.size:
        raise InputFormatError("flow value must be finite and nonnegative",
                               path=str(path), line=int(bad[0]) + 2)
    if len(frame) > 1:
        steps = np.diff(timestamps)
        resolution = steps[0]
        uneven = np.flatnonzero(np.abs(steps - resolution) > 1e-6 * max(resolution, 1.0))
        if resolution <= 0 or uneven.size:
            line = int(uneven[0]) + 3 if uneven.size else 2
            raise InputFormatError("timestamps must increase by a constant resolution",
                                   path=str(path), line=line)
    else:
        resolution = 1.0
    series = FlowSeries(flows, float(resolution), origin=float(timestamps[0]))
    labels = frame["label"].astype(str).to_numpy() if "label" in frame.columns else None
    return series, labels


def load_labeled_events(path, zero_eps: float = 0.0,
                        cycle_gap_s: float = 900.0) -> dict[str, list[EventRecord]]:
    """Build per-fixture event sets from a labeled trace CSV.

    For intermittent fixtures, same-label events separated by pauses up to
    `cycle_gap_s` are merged (pauses included) so each entry is a full
    operating cycle rather than an isolated burst.
    """
    series, labels = read_trace_csv(path)
    if labels is None:
        raise InputFormatError("labeled trace requires a 'label' column", path=str(path), line=1)
    events = extract_events(series, zero_eps=zero_eps, labels=labels)

    by_fixture: dict[str, list[EventRecord]] = {}
    for event in events:
        if event.label:
            by_fixture.setdefault(event.label, []).append(event)

    gap_samples = int(math.ceil(cycle_gap_s / series.resolution))
    for fixture in INTERMITTENT_FIXTURES:
        bursts = by_fixture.get(fixture)
        if not bursts:
            continue
        cycles: list[EventRecord] = []
        group = [bursts[0]]
        for burst in bursts[1:]:
            if burst.start_index - group[-1].end_index <= gap_samples:
                group.append(burst)
            else:
                cycles.append(_merge_cycle(series, group, fixture))
                group = [burst]
        cycles.append(_merge_cycle(series, group, fixture))
        by_fixture[fixture] = cycles
    return by_fixture


def _merge_cycle(series: FlowSeries, bursts: list[EventRecord], fixture: str) -> EventRecord:
    start = bursts[0].start_index
    end = bursts[-1].end_index
    # Keep only this fixture's bursts; anything else active during a pause
    # belongs to another appliance and must not leak into the cycle pattern.
    values = np.zeros(end - start)
    for burst in bursts:
        lo = burst.start_index - start
        values[lo:lo + len(burst)] = burst.flows.samples
    return EventRecord(
        flows=FlowSeries(values, series.resolution),
        start_index=start,
        label=fixture,
    )
