"""Offline feature learning: robust per-fixture bounds on event features.

Feature sets from real usage are skewed, so instead of parametric intervals
the bounds drop the 1% of points farthest from the mean (by absolute
distance) and keep the min/max of the remainder.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, MissingFixtureData
from .timeseries import FEATURE_NAMES, EventRecord

STATS_FORMAT_VERSION = 1


def robust_retained(values) -> np.ndarray:
    """Indices kept after dropping the ceil(1% N) most mean-distant points.

    Distance ties drop the larger value first, then the lower index; at
    least one point is always retained.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise InvalidInput("cannot compute bounds of an empty feature set")
    n = values.size
    drop = min(math.ceil(0.01 * n), n - 1)
    if drop == 0:
        return np.arange(n)
    distances = np.abs(values - values.mean())
    order = sorted(range(n), key=lambda i: (-distances[i], -values[i], i))
    dropped = set(order[:drop])
    return np.array([i for i in range(n) if i not in dropped])


def robust_interval(values) -> tuple[float, float]:
    """(min, max) of the values surviving the 1% outlier filter."""
    values = np.asarray(values, dtype=float)
    kept = values[robust_retained(values)]
    return float(kept.min()), float(kept.max())


@dataclass
class FeatureStats:
    """Per-fixture robust bounds on duration, volume, and peak flow."""

    bounds: dict[str, dict[str, tuple[float, float]]]
    counts: dict[str, int] = field(default_factory=dict)
    retained: dict[str, int] = field(default_factory=dict)

    def contains(self, fixture: str, features) -> bool:
        """True when every feature of an event lies inside the bounds."""
        if fixture not in self.bounds:
            return False
        table = self.bounds[fixture]
        values = features.as_dict()
        return all(table[name][0] <= values[name] <= table[name][1] for name in FEATURE_NAMES)

    def interval(self, fixture: str, feature: str) -> tuple[float, float]:
        return self.bounds[fixture][feature]

    def to_document(self) -> dict:
        return {
            "version": STATS_FORMAT_VERSION,
            "features": list(FEATURE_NAMES),
            "fixtures": {
                name: {
                    "counts": self.counts.get(name, 0),
                    "retained": self.retained.get(name, 0),
                    "bounds": {feat: list(self.bounds[name][feat]) for feat in FEATURE_NAMES},
                }
                for name in sorted(self.bounds)
            },
        }

    @classmethod
    def from_document(cls, doc: dict) -> "FeatureStats":
        bounds, counts, retained = {}, {}, {}
        for name, entry in doc["fixtures"].items():
            bounds[name] = {feat: tuple(entry["bounds"][feat]) for feat in FEATURE_NAMES}
            counts[name] = int(entry["counts"])
            retained[name] = int(entry["retained"])
        return cls(bounds=bounds, counts=counts, retained=retained)

    def save(self, path) -> None:
        with open(path, "w") as handle:
            json.dump(self.to_document(), handle, indent=2, sort_keys=True)
            handle.write("\n")

    @classmethod
    def load(cls, path) -> "FeatureStats":
        with open(path) as handle:
            return cls.from_document(json.load(handle))


def learn_bounds(events_by_fixture: dict[str, list[EventRecord]]) -> FeatureStats:
    """Apply the robust interval per (fixture, feature).

    Intermittent-appliance callers must pass burst-level sub-events (the
    zero-gap splits of full cycles), not whole cycles.
    """
    if not events_by_fixture:
        raise MissingFixtureData("no fixtures to learn bounds from")
    bounds: dict[str, dict[str, tuple[float, float]]] = {}
    counts: dict[str, int] = {}
    retained: dict[str, int] = {}
    for fixture in sorted(events_by_fixture):
        events = events_by_fixture[fixture]
        if not events:
            raise MissingFixtureData(f"fixture '{fixture}' has no events")
        table = {}
        for feature in FEATURE_NAMES:
            values = np.array([e.features.as_dict()[feature] for e in events])
            table[feature] = robust_interval(values)
            retained[fixture] = robust_retained(values).size
        bounds[fixture] = table
        counts[fixture] = len(events)
    return FeatureStats(bounds=bounds, counts=counts, retained=retained)
