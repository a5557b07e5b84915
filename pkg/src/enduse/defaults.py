"""Bundled synthetic usage model.

Since no real regional dataset ships with the toolkit, this module builds a
fully synthetic stand-in: per-fixture prototype shapes with deliberately
distinct geometry, plus priors whose bulk mass matches published per-fixture
duration/volume/peak ranges. Everything is constructed deterministically in
code; the provenance marks it as synthetic.
"""

from __future__ import annotations

import numpy as np

from .clustering import (
    KIND_FULL_CYCLE,
    KIND_REGULAR,
    KIND_SUB_PATTERN,
    Signature,
    SignatureLibrary,
)
from .generator import (
    SECONDS_PER_DAY,
    CountDistribution,
    DurationVolumeMixture,
    FixturePriors,
    StartTimeProfile,
    UsageModel,
)
from .timeseries import z_normalize

BUNDLED_SOURCE = "bundled-synthetic-v1"

# Peak-flow bounds (L/s) the generator enforces per fixture.
FLOW_BOUNDS = {
    "toilet": (0.04, 0.10),
    "shower": (0.09, 0.15),
    "faucet": (0.02, 0.11),
    "clothes_washer": (0.06, 0.13),
    "dishwasher": (0.004, 0.03),
}

EFFICIENCY = {
    "toilet": "standard",
    "shower": "standard",
    "faucet": "standard",
    "clothes_washer": "high_efficiency",
    "dishwasher": "standard",
}


def _edges(t: np.ndarray, rise: float, fall: float) -> np.ndarray:
    return np.clip(t / rise, 0.0, 1.0) * np.clip((1.0 - t) / fall, 0.0, 1.0)


def _toilet_shape(n: int, refill: float, knee: float) -> np.ndarray:
    """Flush spike, gradual settle onto the refill plateau, sharp shutoff.

    The spike-then-plateau profile is unmistakable against flat draws. The
    shutoff is linear so its per-sample steps are uniform: at any event
    scale they are either all above or all below the variation-filter
    threshold, which keeps single flushes from reading as combined events
    while embedded flushes still expose a clean finishing edge.
    """
    t = np.linspace(0.0, 1.0, n)
    rise = np.clip(t / 0.04, 0.0, 1.0)
    settle = refill + (1.0 - refill) * np.exp(-0.5 * (np.maximum(t - 0.12, 0.0) / 0.11) ** 2)
    shutoff = np.clip((1.0 - t) / (1.0 - knee), 0.0, 1.0)
    return rise * settle * np.minimum(shutoff, 1.0)


def _shower_shape(n: int, wobble: float, cycles: float, tilt: float,
                  phase: float) -> np.ndarray:
    """Long plateau with a gentle temperature-adjustment wobble."""
    t = np.linspace(0.0, 1.0, n)
    body = 1.0 + wobble * np.sin(2.0 * np.pi * cycles * t + phase) + tilt * (t - 0.5)
    return _edges(t, 0.04, 0.06) * body


def _faucet_shape(n: int, hump: float, tilt: float) -> np.ndarray:
    """Near-rectangular draw with a slight mid-use adjustment."""
    t = np.linspace(0.0, 1.0, n)
    body = 1.0 + hump * np.sin(np.pi * t) + tilt * (t - 0.5)
    return _edges(t, 0.08, 0.08) * body


def _dishwasher_burst(n: int) -> np.ndarray:
    """Sharp intake then a steady decay while the basin recirculates."""
    t = np.linspace(0.0, 1.0, n)
    rise = np.clip(t / 0.15, 0.0, 1.0)
    decay = 1.0 - 0.45 * np.clip((t - 0.15) / 0.85, 0.0, 1.0)
    return rise * decay


def _washer_burst(n: int) -> np.ndarray:
    """Double-fill profile: main fill, a deep mid-burst dip, then a top-up.

    Clearly non-monotone so it cannot be confused with the declining toilet
    plateau; the dip ramps stay gradual enough to pass the variation filter.
    """
    t = np.linspace(0.0, 1.0, n)
    dip = 1.0 - 0.32 * np.exp(-0.5 * ((t - 0.5) / 0.24) ** 2)
    body = dip * (1.0 + 0.04 * (t - 0.5))
    return _edges(t, 0.06, 0.06) * body


def _cycle(length: int, bursts: list[tuple[int, int, float]], shape_fn) -> np.ndarray:
    values = np.zeros(length)
    for offset, duration, amplitude in bursts:
        values[offset:offset + duration] = amplitude * shape_fn(duration)
    return values


# (offset s, duration s, relative amplitude); gaps stay under the 900 s
# cycle-merge threshold used when loading labeled data.
DISHWASHER_CYCLE_LENGTH = 2793
DISHWASHER_BURSTS = [
    (0, 55, 1.00),
    (700, 60, 0.85),
    (1280, 45, 0.95),
    (1840, 70, 1.00),
    (2753, 40, 0.80),
]

WASHER_CYCLE_LENGTH = 3540
WASHER_BURSTS = [
    (0, 130, 1.00),
    (900, 100, 0.75),
    (1700, 110, 0.80),
    (2600, 120, 0.90),
    (3480, 60, 0.65),
]


def _normalized(values: np.ndarray, fixture: str, kind: str) -> Signature:
    return Signature(values=z_normalize(values)[0], fixture=fixture,
                     duration_s=float(values.size), kind=kind)


def build_default_library() -> SignatureLibrary:
    fixtures = {
        "toilet": [
            _normalized(_toilet_shape(60, 0.72, 0.95), "toilet", KIND_REGULAR),
            _normalized(_toilet_shape(75, 0.65, 0.93), "toilet", KIND_REGULAR),
        ],
        "shower": [
            _normalized(_shower_shape(300, 0.035, 6.0, 0.00, 0.0), "shower", KIND_REGULAR),
            _normalized(_shower_shape(300, 0.030, 4.0, -0.08, 1.6), "shower", KIND_REGULAR),
            _normalized(_shower_shape(300, 0.040, 7.0, 0.06, 3.1), "shower", KIND_REGULAR),
        ],
        "faucet": [
            _normalized(_faucet_shape(30, 0.10, 0.00), "faucet", KIND_REGULAR),
            _normalized(_faucet_shape(30, 0.00, -0.04), "faucet", KIND_REGULAR),
        ],
        "dishwasher": [
            _normalized(_cycle(DISHWASHER_CYCLE_LENGTH, DISHWASHER_BURSTS, _dishwasher_burst),
                        "dishwasher", KIND_FULL_CYCLE),
            _normalized(_dishwasher_burst(55), "dishwasher", KIND_SUB_PATTERN),
        ],
        "clothes_washer": [
            _normalized(_cycle(WASHER_CYCLE_LENGTH, WASHER_BURSTS, _washer_burst),
                        "clothes_washer", KIND_FULL_CYCLE),
            _normalized(_washer_burst(130), "clothes_washer", KIND_SUB_PATTERN),
        ],
    }
    return SignatureLibrary(fixtures=fixtures, resolution_s=1.0,
                            provenance={"source": BUNDLED_SOURCE, "smoothing_degree": None})


def _start_profile(bumps: list[tuple[float, float, float]], baseline: float,
                   bin_seconds: int = 300) -> StartTimeProfile:
    bins = SECONDS_PER_DAY // bin_seconds
    centers = (np.arange(bins) + 0.5) * bin_seconds
    weights = np.full(bins, baseline)
    for center_h, sigma_h, weight in bumps:
        center, sigma = center_h * 3600.0, sigma_h * 3600.0
        delta = np.abs(centers - center)
        delta = np.minimum(delta, SECONDS_PER_DAY - delta)
        weights += weight * np.exp(-0.5 * (delta / sigma) ** 2)
    return StartTimeProfile(weights=weights, bin_seconds=bin_seconds)


def _mixture(spec: list[tuple[float, float, float, float, float, float]]) -> DurationVolumeMixture:
    """Rows of (weight, mean_dur, mean_vol, sd_dur, sd_vol, correlation)."""
    weights = np.array([row[0] for row in spec])
    means = np.array([[row[1], row[2]] for row in spec])
    covs = np.array([
        [[row[3] ** 2, row[5] * row[3] * row[4]],
         [row[5] * row[3] * row[4], row[4] ** 2]]
        for row in spec
    ])
    return DurationVolumeMixture(weights=weights / weights.sum(), means=means, covs=covs)


def build_default_model(resolution_s: float = 1.0) -> UsageModel:
    library = build_default_library()
    priors = {
        "toilet": FixturePriors(
            events_per_day=CountDistribution("negative_binomial", r=12, p=12 / 28),
            start_time=_start_profile(
                [(7.0, 1.2, 3.0), (12.5, 2.5, 2.0), (19.0, 2.0, 2.5), (23.0, 1.5, 1.0)],
                baseline=0.15),
            duration_volume=_mixture([
                (0.65, 60.0, 2.4, 10.0, 0.35, 0.7),
                (0.35, 110.0, 5.0, 15.0, 0.60, 0.7),
            ]),
            flow_bounds=FLOW_BOUNDS["toilet"],
        ),
        "shower": FixturePriors(
            events_per_day=CountDistribution("negative_binomial", r=6, p=6 / 8.2),
            start_time=_start_profile([(7.3, 0.8, 5.0), (21.5, 1.2, 3.0)], baseline=0.02),
            duration_volume=_mixture([
                (0.6, 240.0, 24.0, 45.0, 3.5, 0.85),
                (0.4, 430.0, 45.0, 90.0, 8.0, 0.85),
            ]),
            flow_bounds=FLOW_BOUNDS["shower"],
        ),
        "faucet": FixturePriors(
            events_per_day=CountDistribution("poisson", lam=42.0),
            start_time=_start_profile(
                [(7.5, 1.5, 3.0), (13.0, 2.0, 3.0), (19.5, 2.5, 4.0)], baseline=0.3),
            duration_volume=_mixture([
                (0.7, 25.0, 1.0, 6.0, 0.25, 0.6),
                (0.3, 60.0, 2.8, 14.0, 0.70, 0.6),
            ]),
            flow_bounds=FLOW_BOUNDS["faucet"],
        ),
        "clothes_washer": FixturePriors(
            events_per_day=CountDistribution("poisson", lam=0.55),
            start_time=_start_profile([(10.0, 1.5, 4.0), (15.0, 2.0, 2.0)], baseline=0.02),
            duration_volume=_mixture([
                (0.6, 3600.0, 40.0, 120.0, 4.0, 0.5),
                (0.4, 3300.0, 34.0, 100.0, 3.5, 0.5),
            ]),
            flow_bounds=FLOW_BOUNDS["clothes_washer"],
        ),
        "dishwasher": FixturePriors(
            events_per_day=CountDistribution("poisson", lam=0.75),
            start_time=_start_profile([(14.0, 1.0, 3.0), (21.5, 1.0, 4.0)], baseline=0.02),
            duration_volume=_mixture([
                (0.65, 2793.0, 4.5, 90.0, 0.45, 0.4),
                (0.35, 2650.0, 3.8, 80.0, 0.40, 0.4),
            ]),
            flow_bounds=FLOW_BOUNDS["dishwasher"],
        ),
    }
    return UsageModel(priors=priors, library=library, resolution_s=resolution_s,
                      occupants=2, efficiency=dict(EFFICIENCY))
