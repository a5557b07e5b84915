"""Scoring predictions against the ground-truth ledger.

Predicted events are greedily matched to truth events by temporal overlap,
then per-class precision/recall/F1 are computed both count-weighted and
volume-weighted, alongside a confusion matrix and a single-vs-combined
detection table.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass

import pandas as pd

from .errors import InputFormatError, ModelStateError
from .timeseries import UNLABELED


@dataclass(frozen=True)
class EventInterval:
    """Minimal event view used on both sides of the matching."""

    ident: str
    label: str
    start_s: float
    duration_s: float
    volume_l: float
    combined: bool = False

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s


@dataclass
class MatchResult:
    pairs: list[tuple[EventInterval, EventInterval]]
    unmatched_predictions: list[EventInterval]
    unmatched_truths: list[EventInterval]


def _overlap(a: EventInterval, b: EventInterval) -> float:
    return min(a.end_s, b.end_s) - max(a.start_s, b.start_s)


def match_events(predictions: list[EventInterval], truths: list[EventInterval],
                 overlap_frac: float = 0.5) -> MatchResult:
    """Greedy one-to-one interval matching by maximal temporal overlap.

    A prediction claims the truth event it overlaps most, provided the
    overlap covers at least `overlap_frac` of the shorter of the two
    intervals. Overlap ranks by intersection-over-union and assignment runs
    over all candidate pairs in descending rank, so neither list order nor
    a long interval swallowing short ones can distort the pairing.
    """
    truths_sorted = sorted(range(len(truths)), key=lambda i: truths[i].start_s)
    starts = [truths[i].start_s for i in truths_sorted]
    preds_sorted = sorted(range(len(predictions)),
                          key=lambda i: (predictions[i].start_s, predictions[i].ident))

    candidates: list[tuple[float, int, int]] = []
    for p_idx in preds_sorted:
        pred = predictions[p_idx]
        # Only truths starting before the prediction ends can overlap it.
        hi = bisect.bisect_right(starts, pred.end_s)
        for pos in range(hi):
            t_idx = truths_sorted[pos]
            truth = truths[t_idx]
            if truth.end_s <= pred.start_s:
                continue
            overlap = _overlap(pred, truth)
            shorter = min(pred.duration_s, truth.duration_s)
            if overlap < overlap_frac * shorter or overlap <= 0:
                continue
            union = pred.duration_s + truth.duration_s - overlap
            score = overlap / union if union > 0 else 1.0
            candidates.append((score, p_idx, t_idx))

    candidates.sort(key=lambda c: (-c[0], predictions[c[1]].start_s, truths[c[2]].start_s,
                                   predictions[c[1]].ident))
    pred_taken = [False] * len(predictions)
    truth_taken = [False] * len(truths)
    pairs: list[tuple[EventInterval, EventInterval]] = []
    for _, p_idx, t_idx in candidates:
        if pred_taken[p_idx] or truth_taken[t_idx]:
            continue
        pred_taken[p_idx] = True
        truth_taken[t_idx] = True
        pairs.append((predictions[p_idx], truths[t_idx]))

    pairs.sort(key=lambda pair: (pair[0].start_s, pair[0].ident))
    unmatched_predictions = [predictions[i] for i in preds_sorted if not pred_taken[i]]
    unmatched_truths = [truths[i] for i in range(len(truths)) if not truth_taken[i]]
    return MatchResult(pairs=pairs, unmatched_predictions=unmatched_predictions,
                       unmatched_truths=unmatched_truths)


def prf1(tp: float, fp: float, fn: float) -> tuple[float, float, float]:
    """Precision, recall, F1 with zero denominators defined as 0."""
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = (2 * precision * recall / (precision + recall)) if precision + recall > 0 else 0.0
    return precision, recall, f1


@dataclass
class ClassMetrics:
    tp: float
    fp: float
    fn: float
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: float, fp: float, fn: float) -> "ClassMetrics":
        precision, recall, f1 = prf1(tp, fp, fn)
        return cls(tp=tp, fp=fp, fn=fn, precision=precision, recall=recall, f1=f1)

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
        }


def score(matched: list[tuple[EventInterval, EventInterval]],
          unmatched_predictions: list[EventInterval],
          unmatched_truths: list[EventInterval],
          weighting: str = "count") -> dict[str, ClassMetrics]:
    """Per-class metrics from a matching, weighted by count or volume.

    With volume weighting a correct pair contributes the truth volume to TP,
    wrong or unmatched predictions contribute their predicted volume to FP,
    and missed truths their volume to FN.
    """
    if weighting not in ("count", "volume"):
        raise InputFormatError(f"unknown weighting '{weighting}'")

    def pred_weight(event: EventInterval) -> float:
        return 1.0 if weighting == "count" else event.volume_l

    def truth_weight(event: EventInterval) -> float:
        return 1.0 if weighting == "count" else event.volume_l

    classes = sorted(
        {t.label for _, t in matched}
        | {t.label for t in unmatched_truths}
        | {p.label for p, _ in matched if p.label != UNLABELED}
        | {p.label for p in unmatched_predictions if p.label != UNLABELED}
    )
    table: dict[str, ClassMetrics] = {}
    for cls_name in classes:
        tp = fp = fn = 0.0
        for pred, truth in matched:
            if truth.label == cls_name and pred.label == cls_name:
                tp += truth_weight(truth)
            elif pred.label == cls_name and truth.label != cls_name:
                fp += pred_weight(pred)
            elif truth.label == cls_name and pred.label != cls_name:
                fn += truth_weight(truth)
        for pred in unmatched_predictions:
            if pred.label == cls_name:
                fp += pred_weight(pred)
        for truth in unmatched_truths:
            if truth.label == cls_name:
                fn += truth_weight(truth)
        table[cls_name] = ClassMetrics.from_counts(tp, fp, fn)
    return table


def macro_f1(table: dict[str, ClassMetrics]) -> float:
    if not table:
        return 0.0
    return sum(m.f1 for m in table.values()) / len(table)


@dataclass
class ClassificationReport:
    by_count: dict[str, ClassMetrics]
    by_volume: dict[str, ClassMetrics]
    macro_f1_count: float
    macro_f1_volume: float
    confusion: pd.DataFrame
    detection: dict
    matched: int
    unmatched_predictions: int
    unmatched_truths: int

    def to_document(self) -> dict:
        return {
            "by_count": {k: m.as_dict() for k, m in self.by_count.items()},
            "by_volume": {k: m.as_dict() for k, m in self.by_volume.items()},
            "macro_f1_count": self.macro_f1_count,
            "macro_f1_volume": self.macro_f1_volume,
            "confusion": {
                str(row): {str(col): int(self.confusion.loc[row, col])
                           for col in self.confusion.columns}
                for row in self.confusion.index
            },
            "detection": self.detection,
            "matched": self.matched,
            "unmatched_predictions": self.unmatched_predictions,
            "unmatched_truths": self.unmatched_truths,
        }

    def save(self, path) -> None:
        with open(path, "w") as handle:
            json.dump(self.to_document(), handle, indent=2, sort_keys=True)
            handle.write("\n")


def prediction_units(frame: pd.DataFrame,
                     coalesce_gap_s: float = 1800.0) -> list[EventInterval]:
    """Collapse predictions into scoreable units.

    Burst-level predictions attributed to one detected cycle window (same
    window id and fixture) merge into a single unit spanning them, since the
    ledger records one entry per appliance cycle. Bursts separated by more
    than `coalesce_gap_s` cannot belong to one cycle and start a new unit
    even inside one window; the gap allows for one burst lost to an overlap.
    Everything else scores individually.
    """
    units: list[EventInterval] = []
    windowed: dict[tuple[str, str], list[pd.Series]] = {}
    for _, row in frame.iterrows():
        provenance = str(row["provenance"])
        if provenance.startswith("window:"):
            windowed.setdefault((provenance, str(row["predicted"])), []).append(row)
        else:
            units.append(EventInterval(
                ident=str(row["event_id"]),
                label=str(row["predicted"]),
                start_s=float(row["start_s"]),
                duration_s=float(row["duration_s"]),
                volume_l=float(row["volume_l"]),
                combined="." in str(row["event_id"]),
            ))
    for (provenance, label), rows in sorted(windowed.items()):
        rows.sort(key=lambda r: float(r["start_s"]))
        chains: list[list[pd.Series]] = [[rows[0]]]
        for row in rows[1:]:
            last = chains[-1][-1]
            gap = float(row["start_s"]) - (float(last["start_s"]) + float(last["duration_s"]))
            if gap > coalesce_gap_s:
                chains.append([row])
            else:
                chains[-1].append(row)
        for chain_no, chain in enumerate(chains, start=1):
            start = min(float(r["start_s"]) for r in chain)
            end = max(float(r["start_s"]) + float(r["duration_s"]) for r in chain)
            units.append(EventInterval(
                ident=f"{provenance}:{label}:{chain_no}",
                label=label,
                start_s=start,
                duration_s=end - start,
                volume_l=sum(float(r["volume_l"]) for r in chain),
                combined=False,
            ))
    units.sort(key=lambda u: (u.start_s, u.ident))
    return units


def truth_units(ledger: pd.DataFrame) -> list[EventInterval]:
    return [
        EventInterval(
            ident=str(row["event_id"]),
            label=str(row["fixture"]),
            start_s=float(row["start_s"]),
            duration_s=float(row["duration_s"]),
            volume_l=float(row["volume_l"]),
            combined=bool(str(row.get("overlap_group", "") or "")),
        )
        for _, row in ledger.iterrows()
    ]


def detection_units(ledger: pd.DataFrame) -> list[EventInterval]:
    """Truth units for the single-vs-combined table: overlap groups fuse."""
    units: list[EventInterval] = []
    groups: dict[str, list[pd.Series]] = {}
    for _, row in ledger.iterrows():
        group = str(row.get("overlap_group", "") or "")
        if group:
            groups.setdefault(group, []).append(row)
        else:
            units.append(EventInterval(
                ident=str(row["event_id"]), label="single",
                start_s=float(row["start_s"]), duration_s=float(row["duration_s"]),
                volume_l=float(row["volume_l"]), combined=False,
            ))
    for group, rows in sorted(groups.items()):
        start = min(float(r["start_s"]) for r in rows)
        end = max(float(r["start_s"]) + float(r["duration_s"]) for r in rows)
        units.append(EventInterval(
            ident=group, label="combined", start_s=start, duration_s=end - start,
            volume_l=sum(float(r["volume_l"]) for r in rows), combined=True,
        ))
    units.sort(key=lambda u: u.start_s)
    return units


def confusion_matrix(match: MatchResult) -> pd.DataFrame:
    """Predicted x actual counts; unmatched predictions land in 'none'."""
    predicted_labels = sorted({p.label for p, _ in match.pairs}
                              | {p.label for p in match.unmatched_predictions})
    actual_labels = sorted({t.label for _, t in match.pairs})
    columns = actual_labels + ["none"]
    frame = pd.DataFrame(0, index=predicted_labels or [UNLABELED], columns=columns)
    for pred, truth in match.pairs:
        frame.loc[pred.label, truth.label] += 1
    for pred in match.unmatched_predictions:
        frame.loc[pred.label, "none"] += 1
    return frame


def detection_table(predictions: list[EventInterval],
                    truths: list[EventInterval],
                    overlap_frac: float = 0.5) -> dict:
    """Binary single-vs-combined detection metrics (incl. TN)."""

    def is_combined_prediction(unit: EventInterval) -> bool:
        return unit.combined

    match = match_events(predictions, truths, overlap_frac=overlap_frac)
    counts = {"single": {"tp": 0, "fp": 0, "fn": 0}, "combined": {"tp": 0, "fp": 0, "fn": 0}}
    tn = 0
    for pred, truth in match.pairs:
        predicted = "combined" if is_combined_prediction(pred) else "single"
        actual = truth.label
        if predicted == actual:
            counts[actual]["tp"] += 1
            if actual == "single":
                tn += 1  # true negative of the combined detector
        else:
            counts[predicted]["fp"] += 1
            counts[actual]["fn"] += 1
    for pred in match.unmatched_predictions:
        predicted = "combined" if is_combined_prediction(pred) else "single"
        counts[predicted]["fp"] += 1
    for truth in match.unmatched_truths:
        counts[truth.label]["fn"] += 1

    table = {}
    for category in ("single", "combined"):
        c = counts[category]
        precision, recall, f1 = prf1(c["tp"], c["fp"], c["fn"])
        table[category] = {
            "tp": c["tp"], "fp": c["fp"], "fn": c["fn"],
            "precision": precision, "recall": recall, "f1": f1,
        }
    table["combined"]["tn"] = tn
    return table


def evaluate(predictions_frame: pd.DataFrame, ledger_frame: pd.DataFrame,
             overlap_frac: float = 0.5) -> ClassificationReport:
    """Full scoring pipeline from prediction and ledger tables."""
    _validate_ids(predictions_frame)
    preds = prediction_units(predictions_frame)
    truths = truth_units(ledger_frame)

    match = match_events(preds, truths, overlap_frac=overlap_frac)
    by_count = score(match.pairs, match.unmatched_predictions, match.unmatched_truths,
                     weighting="count")
    by_volume = score(match.pairs, match.unmatched_predictions, match.unmatched_truths,
                      weighting="volume")

    # The binary table groups truth events per overlap group; a predicted
    # unit counts as combined when it came from decomposition.
    roots: dict[str, list[EventInterval]] = {}
    for unit in preds:
        roots.setdefault(unit.ident.split(".")[0], []).append(unit)
    binary_preds = []
    for root, members in sorted(roots.items()):
        start = min(u.start_s for u in members)
        end = max(u.end_s for u in members)
        binary_preds.append(EventInterval(
            ident=root, label="combined" if any(u.combined for u in members) else "single",
            start_s=start, duration_s=end - start,
            volume_l=sum(u.volume_l for u in members),
            combined=any(u.combined for u in members),
        ))
    detection = detection_table(binary_preds, detection_units(ledger_frame),
                                overlap_frac=overlap_frac)

    return ClassificationReport(
        by_count=by_count,
        by_volume=by_volume,
        macro_f1_count=macro_f1(by_count),
        macro_f1_volume=macro_f1(by_volume),
        confusion=confusion_matrix(match),
        detection=detection,
        matched=len(match.pairs),
        unmatched_predictions=len(match.unmatched_predictions),
        unmatched_truths=len(match.unmatched_truths),
    )


def _validate_ids(frame: pd.DataFrame) -> None:
    ids = set(frame["event_id"].astype(str))
    for parent in frame["parent_id"].astype(str):
        if parent and not parent.startswith("w") and parent not in ids:
            # Parents are intermediate decomposition nodes; require at least
            # a consistent root.
            root = parent.split(".")[0]
            if not any(i.startswith(root) for i in ids):
                raise ModelStateError(f"prediction parent id '{parent}' has no matching events")


def per_class_frame(report: ClassificationReport, weighting: str = "count") -> pd.DataFrame:
    table = report.by_count if weighting == "count" else report.by_volume
    return pd.DataFrame({
        "class": list(table),
        "tp": [m.tp for m in table.values()],
        "fp": [m.fp for m in table.values()],
        "fn": [m.fn for m in table.values()],
        "precision": [m.precision for m in table.values()],
        "recall": [m.recall for m in table.values()],
        "f1": [m.f1 for m in table.values()],
    })
