"""Event classification over a whole-house flow trace.

Pipeline: segment events on zero-flow gaps, detect intermittent-appliance
cycle windows with a sliding DTW comparison, label single events by nearest
signature under feature-bounds screening, triage the leftovers with the
filtered variation vector, and decompose combined events into sub-events
(edge overlaps first, then nested ones), classifying every piece.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .clustering import KIND_REGULAR, KIND_SUB_PATTERN, SignatureLibrary
from .dtw import dtw_distance_with_steps
from .errors import InvalidInput
from .features import FeatureStats
from .generator import shift_to_nonnegative
from .timeseries import (
    INTERMITTENT_FIXTURES,
    UNLABELED,
    EventRecord,
    FlowSeries,
    extract_events,
    resample,
    z_normalize,
)

# Tie order for equal DTW costs; regular fixtures before intermittent ones.
LABEL_ORDER = ("toilet", "shower", "faucet", "clothes_washer", "dishwasher")


@dataclass(frozen=True)
class ClassifierConfig:
    # Flow steps below this never indicate another appliance switching.
    variation_threshold: float = 0.01
    # Max difference between matching rise/drop magnitudes at an event edge.
    edge_split_threshold: float = 0.005
    # Acceptance ceiling on DTW cost per aligned step (normalized inputs).
    # Calibrated on the bundled generator: correct matches concentrate well
    # below 0.12 while cross-fixture claims start around 0.11; a mediocre
    # best match is better routed to the combined-event path than accepted.
    dtw_accept_threshold: float = 0.12
    # Sliding-window stride as a fraction of the full cycle length.
    window_stride_frac: float = 0.1
    full_sliding: bool = False
    max_decomposition_depth: int = 5
    zero_eps: float = 0.0
    min_gap: int = 1
    # Sequences longer than this are resampled before DTW comparisons.
    max_compare_len: int = 256
    # Very short events are upsampled to this length first; per-step costs
    # on a handful of samples are dominated by resampling noise otherwise.
    min_compare_len: int = 24
    # Warping band for event-vs-signature comparisons (fraction of length).
    # Signatures are resampled to the event length, so genuine matches stay
    # near the diagonal; the band stops a distorted event from warping its
    # features onto a signature's differently placed ones.
    compare_band_frac: float = 0.15
    # Slack applied to learned peak bounds when screening cycle windows.
    window_peak_slack: float = 0.1
    # Warping band for the cycle-window comparison, as a fraction of the
    # compared length. Unconstrained DTW aligns any burst with any burst;
    # the band makes burst timing within the cycle count.
    window_dtw_band_frac: float = 0.1
    # Multiple of the DTW threshold applied to window flagging. Masked
    # interference degrades true-cycle matches well past the single-event
    # ceiling, so windows need headroom; false windows are contained
    # downstream because events inside them still compete against the
    # regular candidates.
    window_threshold_frac: float = 3.0

    def __post_init__(self):
        for name in ("variation_threshold", "edge_split_threshold", "dtw_accept_threshold"):
            if getattr(self, name) <= 0:
                raise InvalidInput(f"{name} must be positive")

    def to_document(self) -> dict:
        return {
            "variation_threshold": self.variation_threshold,
            "edge_split_threshold": self.edge_split_threshold,
            "dtw_accept_threshold": self.dtw_accept_threshold,
            "window_stride_frac": self.window_stride_frac,
            "full_sliding": self.full_sliding,
            "max_decomposition_depth": self.max_decomposition_depth,
            "zero_eps": self.zero_eps,
            "min_gap": self.min_gap,
            "max_compare_len": self.max_compare_len,
            "min_compare_len": self.min_compare_len,
            "compare_band_frac": self.compare_band_frac,
            "window_peak_slack": self.window_peak_slack,
            "window_dtw_band_frac": self.window_dtw_band_frac,
            "window_threshold_frac": self.window_threshold_frac,
        }

    @classmethod
    def from_document(cls, doc: dict) -> "ClassifierConfig":
        return cls(**doc)


@dataclass(frozen=True)
class VariationVector:
    """First differences of an event's flow, thresholded (Eq.-style filter)."""

    raw: np.ndarray
    filtered: np.ndarray
    threshold: float


def variation_vector(event: EventRecord, threshold: float) -> VariationVector:
    flows = event.flows.samples
    if flows.size < 2:
        raise InvalidInput("variation vector requires at least two samples")
    raw = np.diff(flows)
    filtered = np.where(np.abs(raw) < threshold, 0.0, raw)
    return VariationVector(raw=raw, filtered=filtered, threshold=threshold)


def _nonzero_runs(values: np.ndarray) -> list[tuple[int, int]]:
    active = values != 0
    padded = np.concatenate(([False], active, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [(int(s), int(e)) for s, e in zip(edges[0::2], edges[1::2])]  # half-open


def _interior_runs(filtered: np.ndarray) -> list[tuple[int, int]]:
    """Nonzero runs excluding those anchored at the vector boundary.

    A run touching index 0 is the event's own onset ramp and one touching
    the final index is its closing ramp; both mark the start/end of the
    event itself, not another appliance switching.
    """
    runs = _nonzero_runs(filtered)
    return [(s, e) for s, e in runs if s != 0 and e != filtered.size]


def is_single_varying(event: EventRecord, config: ClassifierConfig) -> bool:
    """True when the filtered variation vector shows no interior switching."""
    if len(event) < 2:
        return True
    filtered = variation_vector(event, config.variation_threshold).filtered
    return len(_interior_runs(filtered)) == 0


@dataclass(frozen=True)
class CycleWindow:
    fixture: str
    start: int   # sample index, inclusive
    end: int     # sample index, exclusive
    window_id: str = ""

    def contains(self, event: EventRecord) -> bool:
        return event.start_index >= self.start and event.end_index <= self.end


def detect_cycle_windows(series: FlowSeries, library: SignatureLibrary,
                         stats: FeatureStats,
                         config: ClassifierConfig | None = None) -> list[CycleWindow]:
    """Find stretches where an intermittent appliance ran a full cycle.

    A window the length of the fixture's full cycle slides along the trace;
    flow above the fixture's peak ceiling is treated as another appliance and
    masked out before comparison (the maximum-flow criterion), then the
    masked window must match the cycle signature within the DTW threshold
    and carry an in-bounds peak. Overlapping flagged windows merge.
    """
    config = config or ClassifierConfig()
    values = series.samples
    n = values.size
    windows: list[CycleWindow] = []
    for fixture in INTERMITTENT_FIXTURES:
        cycle = library.full_cycle(fixture)
        if cycle is None or fixture not in stats.bounds:
            continue
        width = round(cycle.duration_s / series.resolution)
        if width < 2 or width > n:
            continue
        flagged = [
            (start, start + width)
            for start, cost in scan_cycle_windows(values, cycle, stats, fixture, config,
                                                  resolution=series.resolution)
            if cost <= config.dtw_accept_threshold * config.window_threshold_frac
        ]
        for start, end in flagged:
            if windows and windows[-1].fixture == fixture and start <= windows[-1].end:
                windows[-1] = CycleWindow(fixture, windows[-1].start, max(end, windows[-1].end))
            else:
                windows.append(CycleWindow(fixture, start, end))

    windows.sort(key=lambda w: (w.start, w.fixture))
    return [replace(w, window_id=f"w{num:04d}") for num, w in enumerate(windows, start=1)]


def scan_cycle_windows(values: np.ndarray, cycle, stats: FeatureStats, fixture: str,
                       config: ClassifierConfig,
                       resolution: float = 1.0) -> list[tuple[int, float]]:
    """Normalized banded DTW cost of each candidate window vs. a full cycle.

    Activity runs whose peak exceeds the fixture's bound are another
    appliance by definition and are masked out whole before the comparison;
    windows with an out-of-bounds residual peak or implausible activity
    share are skipped outright.
    """
    n = values.size
    width = round(cycle.duration_s / resolution)
    peak_lo, peak_hi = stats.interval(fixture, "peak_lps")
    ceiling = peak_hi * (1.0 + config.window_peak_slack)
    floor = peak_lo * (1.0 - config.window_peak_slack)

    cmp_len = min(config.max_compare_len, width)
    band = max(4, round(config.window_dtw_band_frac * cmp_len))
    sig_shape = shift_to_nonnegative(np.asarray(cycle.values, dtype=float))
    sig_active = float(np.mean(sig_shape > 1e-6 * sig_shape.max()))
    sig_norm = z_normalize(resample(cycle.values, cmp_len))[0]

    active = values > config.zero_eps
    masked = values.copy()
    run_edges = np.flatnonzero(np.diff(
        np.concatenate(([False], active, [False])).astype(np.int8)))
    run_starts_all = run_edges[0::2]
    for run_start, run_end in zip(run_starts_all, run_edges[1::2]):
        if masked[run_start:run_end].max() > ceiling:
            masked[run_start:run_end] = 0.0
    masked_active = masked > config.zero_eps
    prefix = np.concatenate(([0], np.cumsum(masked_active)))

    stride = 1 if config.full_sliding else max(1, round(width * config.window_stride_frac))
    candidates = set(range(0, n - width + 1, stride))
    # Cycles open with a burst, so windows anchored at (surviving) activity
    # onsets line up with true cycles regardless of the stride grid.
    anchor_starts = np.flatnonzero(np.diff(
        np.concatenate(([False], masked_active)).astype(np.int8)) == 1)
    for start in anchor_starts:
        candidates.add(int(min(max(int(start), 0), n - width)))

    scanned: list[tuple[int, float]] = []
    for start in sorted(candidates):
        frac = (prefix[start + width] - prefix[start]) / width
        if not 0.4 * sig_active <= frac <= 2.0 * sig_active:
            continue
        window = masked[start:start + width]
        peak = window.max()
        if not floor <= peak <= ceiling:
            continue
        win_norm = z_normalize(resample(window, cmp_len))[0]
        cost, steps = dtw_distance_with_steps(win_norm, sig_norm, window=band)
        scanned.append((start, cost / steps))
    return scanned


@dataclass
class Prediction:
    """Terminal verdict for one (possibly decomposed) event."""

    event_id: str
    start_index: int
    length: int
    resolution_s: float
    label: str
    score: float | None
    provenance: str
    volume_l: float
    parent_id: str = ""
    clamp_mass_l: float = 0.0

    @property
    def start_s(self) -> float:
        return self.start_index * self.resolution_s

    @property
    def duration_s(self) -> float:
        return self.length * self.resolution_s

    @property
    def root_id(self) -> str:
        return self.event_id.split(".")[0]


def _active_span(sig_values: np.ndarray) -> np.ndarray:
    """Signature values trimmed to their active span.

    Extracted events never carry boundary zeros (segmentation trims them),
    so prototypes are aligned on their active part too; interior pauses of
    full cycles are preserved.
    """
    shape = shift_to_nonnegative(np.asarray(sig_values, dtype=float))
    alive = np.flatnonzero(shape > 1e-9 * shape.max())
    if alive.size == 0:
        return shape
    return shape[alive[0]:alive[-1] + 1]


def _comparison_cost(event_values: np.ndarray, sig_values: np.ndarray,
                     config: ClassifierConfig) -> float:
    """Normalized DTW cost; the signature is resampled to the event length.

    Both sides are capped at `max_compare_len` so unconstrained DTW stays
    affordable on long events; the cap applies identically to both inputs.
    """
    length = event_values.size
    if config.max_compare_len and length > config.max_compare_len:
        length = config.max_compare_len
        event_values = resample(event_values, length)
    elif config.min_compare_len and length < config.min_compare_len:
        length = config.min_compare_len
        event_values = resample(event_values, length)
    sig = resample(_active_span(sig_values), length)
    band = None
    if config.compare_band_frac:
        band = max(4, round(config.compare_band_frac * length))
    cost, steps = dtw_distance_with_steps(z_normalize(event_values)[0],
                                          z_normalize(sig)[0], window=band)
    return cost / steps


def classify_single(event: EventRecord, library: SignatureLibrary, stats: FeatureStats,
                    config: ClassifierConfig, use_bounds: bool = True,
                    windows: list[CycleWindow] | None = None,
                    event_id: str = "", parent_id: str = "",
                    allow_intermittent: bool = True) -> Prediction:
    """Label one event by its nearest signature.

    Regular fixtures are always candidates; intermittent fixtures join only
    when the event falls inside one of their detected cycle windows, matched
    against their burst sub-patterns. With `use_bounds` the feature
    screening runs alongside the similarity search: candidates whose learned
    bounds reject the event are out of the running entirely. The winner must
    come in under the DTW threshold; otherwise the event stays unclassified.
    """
    windows = windows or []
    containing = {w.fixture: w for w in windows if w.contains(event)}

    best_label = UNLABELED
    best_cost = float("inf")
    best_window = None
    values = event.flows.samples
    for label in LABEL_ORDER:
        if label in INTERMITTENT_FIXTURES:
            window = containing.get(label)
            if window is None or not allow_intermittent:
                continue
            signatures = library.signatures(label, KIND_SUB_PATTERN)
        else:
            window = None
            signatures = library.signatures(label, KIND_REGULAR)
        if not signatures:
            continue
        if use_bounds and not stats.contains(label, event.features):
            continue
        cost = min(_comparison_cost(values, sig.values, config) for sig in signatures)
        if cost < best_cost:
            best_label, best_cost, best_window = label, cost, window

    accepted = best_label != UNLABELED and best_cost <= config.dtw_accept_threshold
    if not accepted:
        return Prediction(event_id=event_id, start_index=event.start_index,
                          length=len(event), resolution_s=event.flows.resolution,
                          label=UNLABELED,
                          score=None if best_cost == float("inf") else best_cost,
                          provenance="single", volume_l=event.features.volume_l,
                          parent_id=parent_id)
    provenance = f"window:{best_window.window_id}" if best_window is not None else "single"
    return Prediction(event_id=event_id, start_index=event.start_index, length=len(event),
                      resolution_s=event.flows.resolution, label=best_label,
                      score=best_cost, provenance=provenance,
                      volume_l=event.features.volume_l, parent_id=parent_id)


# ---------------------------------------------------------------------------
# Combined-event decomposition


@dataclass
class SplitResult:
    sub: EventRecord
    remainders: list[EventRecord]
    clamp_mass_l: float
    kind: str  # "edge-trailing" | "edge-leading" | "interior"


def _pieces(values: np.ndarray, offset: int, resolution: float,
            zero_eps: float) -> list[EventRecord]:
    parts = extract_events(FlowSeries(values, resolution), zero_eps=zero_eps)
    return [
        EventRecord(flows=part.flows, start_index=offset + part.start_index)
        for part in parts
    ]


def _lower_median(values: np.ndarray) -> float:
    ordered = np.sort(values)
    return float(ordered[(ordered.size - 1) // 2])


def split_edge_subevent(event: EventRecord,
                        config: ClassifierConfig) -> SplitResult | None:
    """Category-1 split: a sub-event aligned with one edge of the event.

    The drop closing the whole event is compared against the last interior
    rise; a near match means one appliance started late and ran through the
    end. Symmetrically for the leading edge. The extracted sub-event keeps
    its observed flow where it ran alone and the median of that stretch
    where it overlapped.
    """
    if len(event) < 3:
        return None
    flows = event.flows.samples
    n = flows.size
    filtered = variation_vector(event, config.variation_threshold).filtered
    rises = _edge_steps(filtered, positive=True)
    falls = _edge_steps(filtered, positive=False)

    # The event's own opening/closing magnitudes include any boundary ramp:
    # a tapered event ends near zero sample-wise, but the drop that closes
    # it is the full height of that taper.
    m = filtered.size
    j = m - 1
    closing = flows[n - 1]
    while j >= 0 and filtered[j] < 0:
        closing -= filtered[j]
        j -= 1
    i = 0
    opening = flows[0]
    while i < m and filtered[i] > 0:
        opening += filtered[i]
        i += 1

    # Trailing edge: last interior rise vs. the event's terminal drop.
    if rises:
        rise_first, rise_last, rise_total = rises[-1]
        if abs(closing - rise_total) < config.edge_split_threshold:
            sub_start = rise_last + 1
            later_falls = [f for f in falls if f[0] >= sub_start]
            exclusive_start = (later_falls[-1][1] + 1) if later_falls else sub_start
            level = _lower_median(flows[exclusive_start:])
            sub_values = np.concatenate([
                np.full(exclusive_start - sub_start, level),
                flows[exclusive_start:],
            ])
            return _build_split(event, sub_start, n - 1, sub_values, config, "edge-trailing")

    # Leading edge: the event's initial rise vs. the first interior drop.
    if falls:
        fall_first, fall_last, fall_total = falls[0]
        if abs(opening + fall_total) < config.edge_split_threshold:
            sub_end = fall_first
            earlier_rises = [r for r in rises if r[0] <= sub_end]
            exclusive_end = (earlier_rises[0][0]) if earlier_rises else sub_end
            level = _lower_median(flows[:exclusive_end + 1])
            sub_values = np.concatenate([
                flows[:exclusive_end + 1],
                np.full(sub_end - exclusive_end, level),
            ])
            return _build_split(event, 0, sub_end, sub_values, config, "edge-leading")
    return None


def _edge_steps(filtered: np.ndarray, positive: bool) -> list[tuple[int, int, float]]:
    """Interior same-sign step groups as (first, last, total magnitude).

    Appliance edges often ramp over a few samples; grouping contiguous
    same-sign entries recovers the full step height instead of its first
    increment. Groups anchored at the vector boundary are the event's own
    onset/closing ramps and are excluded.
    """
    m = filtered.size
    groups: list[tuple[int, int, float]] = []
    i = 0
    while i < m:
        sign_ok = filtered[i] > 0 if positive else filtered[i] < 0
        if not sign_ok:
            i += 1
            continue
        j = i
        while j + 1 < m and ((filtered[j + 1] > 0) if positive else (filtered[j + 1] < 0)):
            j += 1
        if i != 0 and j != m - 1:
            groups.append((i, j, float(filtered[i:j + 1].sum())))
        i = j + 1
    return groups


def _build_split(event: EventRecord, sub_start: int, sub_end: int,
                 sub_values: np.ndarray, config: ClassifierConfig,
                 kind: str) -> SplitResult:
    """Subtract a sub-event spanning [sub_start, sub_end] (inclusive)."""
    flows = event.flows.samples
    resolution = event.flows.resolution
    remainder = flows.copy()
    segment = remainder[sub_start:sub_end + 1] - sub_values
    clamp_mass = float(-segment[segment < 0].sum()) * resolution
    remainder[sub_start:sub_end + 1] = np.maximum(segment, 0.0)
    sub = EventRecord(
        flows=FlowSeries(np.maximum(sub_values, 0.0), resolution),
        start_index=event.start_index + sub_start,
    )
    remainders = _pieces(remainder, event.start_index, resolution, config.zero_eps)
    return SplitResult(sub=sub, remainders=remainders, clamp_mass_l=clamp_mass, kind=kind)


def _first_marker_pair(event: EventRecord,
                       config: ClassifierConfig) -> tuple[tuple[int, int, float],
                                                          tuple[int, int, float]] | None:
    """First (rise, fall) marker pair in the filtered variation vector.

    A start marker is a positive step preceded by a zero entry; a finish
    marker is a negative step followed by a zero entry. The first start is
    matched with the first finish after its ramp completes. Steps are whole
    same-sign groups, so multi-sample ramps carry their full height.
    """
    if len(event) < 3:
        return None
    filtered = variation_vector(event, config.variation_threshold).filtered
    m = filtered.size
    rises = [g for g in _edge_steps(filtered, positive=True)
             if g[0] >= 1 and filtered[g[0] - 1] == 0]
    if not rises:
        return None
    rise = rises[0]
    falls = [g for g in _edge_steps(filtered, positive=False)
             if g[1] + 1 < m and filtered[g[1] + 1] == 0 and g[0] > rise[1]]
    if not falls:
        return None
    return rise, falls[0]


def split_interior_subevents(event: EventRecord, config: ClassifierConfig,
                             budget: int | None = None) -> "InteriorSplit":
    """Category-2 split: carve out fully nested sub-events.

    Repeatedly matches the first start marker with the first finish marker,
    extracts the enclosed sub-event at the lower-median of the two boundary
    step magnitudes, subtracts it, and continues on the remainder until no
    marker pair is left or the extraction budget runs out.
    """
    if budget is None:
        budget = config.max_decomposition_depth
    subs: list[EventRecord] = []
    remainders: list[EventRecord] = []
    clamp_mass = 0.0
    extractions = 0
    exhausted = False
    pending = [event]
    while pending:
        piece = pending.pop(0)
        pair = _first_marker_pair(piece, config)
        if pair is None:
            remainders.append(piece)
            continue
        if extractions >= budget:
            remainders.append(piece)
            exhausted = True
            continue
        (r_first, r_last, r_total), (f_first, f_last, f_total) = pair
        filtered = variation_vector(piece, config.variation_threshold).filtered
        amplitude = min(r_total, -f_total)
        # Sub-event profile: its own rise ramp, a plateau at the boundary
        # amplitude, then its fall ramp; span covers on to off samples.
        span_start, span_end = r_first + 1, f_last
        rise_part = np.clip(np.cumsum(filtered[r_first:r_last + 1]), 0.0, amplitude)
        plateau = np.full(max(0, f_first - r_last - 1), amplitude)
        fall_part = np.clip(amplitude + np.cumsum(filtered[f_first:f_last]), 0.0, amplitude)
        sub_values = np.concatenate([rise_part, plateau, fall_part])
        result = _build_split(piece, span_start, span_end, sub_values, config, "interior")
        subs.append(result.sub)
        clamp_mass += result.clamp_mass_l
        extractions += 1
        pending.extend(result.remainders)
    return InteriorSplit(subs=subs, remainders=remainders, clamp_mass_l=clamp_mass,
                         extractions=extractions, exhausted=exhausted)


@dataclass
class InteriorSplit:
    subs: list[EventRecord]
    remainders: list[EventRecord]
    clamp_mass_l: float
    extractions: int
    exhausted: bool


# ---------------------------------------------------------------------------
# Full pipeline


@dataclass
class ClassifierModel:
    library: SignatureLibrary
    stats: FeatureStats
    config: ClassifierConfig = field(default_factory=ClassifierConfig)


def classify_all(series: FlowSeries, model: ClassifierModel) -> list[Prediction]:
    """Classify every event in a trace, decomposing combined events.

    Every extracted event resolves to exactly one terminal prediction per
    leaf of its decomposition tree; unresolved remainders at the depth cap
    are reported unclassified rather than dropped.
    """
    config = model.config
    events = extract_events(series, zero_eps=config.zero_eps, min_gap=config.min_gap)
    windows = detect_cycle_windows(series, model.library, model.stats, config)
    predictions: list[Prediction] = []
    for number, event in enumerate(events, start=1):
        predictions.extend(_resolve(
            event, model, windows,
            event_id=f"e{number:05d}",
            parent_id="",
            budget=config.max_decomposition_depth,
        ))
    predictions.sort(key=lambda p: (p.start_index, p.event_id))
    return predictions


def _resolve(event: EventRecord, model: ClassifierModel, windows: list[CycleWindow],
             event_id: str, parent_id: str, budget: int,
             top_level: bool = True) -> list[Prediction]:
    config = model.config
    # Intermittent-appliance candidacy is reserved for whole extracted
    # events: cycle bursts arrive at the top level, while decomposition
    # residues inside a window are fragments of something else.
    pred = classify_single(event, model.library, model.stats, config,
                           use_bounds=True, windows=windows,
                           event_id=event_id, parent_id=parent_id,
                           allow_intermittent=top_level)
    if pred.label != UNLABELED:
        return [pred]

    if is_single_varying(event, config):
        # No interior switching: a single event that failed screening.
        return [classify_single(event, model.library, model.stats, config,
                                use_bounds=False, windows=windows,
                                event_id=event_id, parent_id=parent_id,
                                allow_intermittent=top_level)]

    if budget <= 0:
        return [replace(pred, provenance="combined-subevent")]

    edge = split_edge_subevent(event, config)
    if edge is not None:
        return _resolve_split(edge.sub, edge.remainders, edge.clamp_mass_l,
                              model, windows, event_id, budget - 1)

    interior = split_interior_subevents(event, config, budget=budget)
    if interior.extractions == 0:
        # Fluctuating but no valid marker pair: a varying single event;
        # retry with the DTW criterion alone.
        return [classify_single(event, model.library, model.stats, config,
                                use_bounds=False, windows=windows,
                                event_id=event_id, parent_id=parent_id,
                                allow_intermittent=top_level)]

    results: list[Prediction] = []
    child = 0
    remaining = budget - interior.extractions
    for sub in interior.subs:
        child += 1
        results.extend(_tag_combined(_resolve(
            sub, model, windows, f"{event_id}.{child}", event_id, remaining,
            top_level=False)))
    for piece in interior.remainders:
        child += 1
        results.extend(_tag_combined(_resolve(
            piece, model, windows, f"{event_id}.{child}", event_id, remaining,
            top_level=False)))
    if results:
        results[0].clamp_mass_l += interior.clamp_mass_l
    return results


def _resolve_split(sub: EventRecord, remainders: list[EventRecord], clamp_mass: float,
                   model: ClassifierModel, windows: list[CycleWindow], event_id: str,
                   budget: int) -> list[Prediction]:
    results: list[Prediction] = []
    child = 1
    results.extend(_tag_combined(_resolve(
        sub, model, windows, f"{event_id}.{child}", event_id, budget,
        top_level=False)))
    for piece in remainders:
        child += 1
        results.extend(_tag_combined(_resolve(
            piece, model, windows, f"{event_id}.{child}", event_id, budget,
            top_level=False)))
    if results:
        results[0].clamp_mass_l += clamp_mass
    return results


def _tag_combined(preds: list[Prediction]) -> list[Prediction]:
    for pred in preds:
        if pred.provenance == "single":
            pred.provenance = "combined-subevent"
    return preds


# ---------------------------------------------------------------------------
# Prediction CSV format


def predictions_frame(predictions: list[Prediction]) -> pd.DataFrame:
    return pd.DataFrame({
        "event_id": [p.event_id for p in predictions],
        "start_s": [p.start_s for p in predictions],
        "duration_s": [p.duration_s for p in predictions],
        "volume_l": [p.volume_l for p in predictions],
        "predicted": [p.label for p in predictions],
        "score": [("" if p.score is None else p.score) for p in predictions],
        "provenance": [p.provenance for p in predictions],
        "parent_id": [p.parent_id for p in predictions],
    })


def write_predictions_csv(path, predictions: list[Prediction]) -> None:
    predictions_frame(predictions).to_csv(path, index=False, float_format="%.9g")
