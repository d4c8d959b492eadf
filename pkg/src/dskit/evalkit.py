"""Validation battery: confusion metrics, Cohen's kappa, and a brute-force
reconstruction oracle that recovers integer confusion matrices consistent
with a published two-decimal metric row.

AUC here is the hard-prediction AUC, identically (sensitivity +
specificity) / 2 (rank AUC with ties for a binary predictor).  Degenerate
denominators never fail silently: the affected metric takes its policy value
and the row carries a flag naming the degeneracy.
"""

from __future__ import annotations

import csv
import io
import itertools
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np


class LengthMismatch(ValueError):
    pass


class UncoveredDisagreement(ValueError):
    pass


class SpuriousAdjudication(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("counts must be nonnegative")
        if self.n < 1:
            raise ValueError("need at least one observation")

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricRow:
    accuracy: float
    sensitivity: float
    specificity: float
    precision: float
    f1: float
    auc: float
    flags: tuple[str, ...] = ()

    def as_tuple(self) -> tuple[float, float, float, float, float, float]:
        return (self.accuracy, self.sensitivity, self.specificity,
                self.precision, self.f1, self.auc)


METRIC_NAMES = ("accuracy", "sensitivity", "specificity", "precision", "f1", "auc")


def confusion(pred: Sequence, truth: Sequence, positive=True) -> ConfusionCounts:
    """Standard binary counts; ``positive`` names the positive label value."""
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(truth)} truths")
    if len(pred) == 0:
        raise LengthMismatch("need at least one observation")
    tp = fp = fn = tn = 0
    for p, t in zip(pred, truth):
        if p == positive:
            if t == positive:
                tp += 1
            else:
                fp += 1
        else:
            if t == positive:
                fn += 1
            else:
                tn += 1
    return ConfusionCounts(tp, fp, fn, tn)


def metric_row(c: ConfusionCounts) -> MetricRow:
    """The six-metric battery with explicit degenerate-cell policy.

    No positives in truth: sensitivity reports 1 (flag "no_positives");
    no negatives: specificity reports 1 (flag "no_negatives"); no positive
    predictions: precision reports 1 (flag "no_positive_predictions");
    f1 with a zero denominator reports 0 (flag "f1_undefined").
    """
    flags: list[str] = []
    accuracy = (c.tp + c.tn) / c.n
    if c.tp + c.fn > 0:
        sensitivity = c.tp / (c.tp + c.fn)
    else:
        sensitivity = 1.0
        flags.append("no_positives")
    if c.tn + c.fp > 0:
        specificity = c.tn / (c.tn + c.fp)
    else:
        specificity = 1.0
        flags.append("no_negatives")
    if c.tp + c.fp > 0:
        precision = c.tp / (c.tp + c.fp)
    else:
        precision = 1.0
        flags.append("no_positive_predictions")
    if precision + sensitivity > 0:
        f1 = 2 * precision * sensitivity / (precision + sensitivity)
    else:
        f1 = 0.0
        flags.append("f1_undefined")
    auc = (sensitivity + specificity) / 2
    return MetricRow(accuracy, sensitivity, specificity, precision, f1, auc,
                     tuple(flags))


def cohen_kappa(a: Sequence[Hashable], b: Sequence[Hashable]) -> float:
    """Chance-corrected agreement between two categorical raters.

    kappa = (p_o - p_e) / (1 - p_e) with p_e from the marginal products.
    When both raters put all their mass on one shared category, p_e = 1 and
    the ratio is indeterminate; observed agreement is then perfect and the
    policy value is 1.
    """
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)} ratings")
    n = len(a)
    if n == 0:
        raise LengthMismatch("need at least one rating")
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    ca, cb = Counter(a), Counter(b)
    cats = set(ca) | set(cb)
    p_e = sum((ca.get(k, 0) / n) * (cb.get(k, 0) / n) for k in cats)
    if p_e >= 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


def reconcile_table_row(target: MetricRow | Sequence[float], n: int,
                        tolerance: float = 0.01) -> list[ConfusionCounts]:
    """All integer confusion matrices of size ``n`` consistent with a
    two-decimal reported metric row.

    A candidate matches when each of its six raw metrics lies within
    ``tolerance`` of the reported value.  The default 0.01 admits any value
    that displays as the reported one under either rounding or truncation to
    two decimals; published tables mix both.  Candidates with degenerate
    cells (any flag) are excluded, as a row with an undefined metric is not
    evidence of anything.  An empty result is a finding, not an error.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    wanted = np.asarray(target.as_tuple() if isinstance(target, MetricRow)
                        else tuple(target), dtype=np.float64)
    cells = [(tp, fp, fn, n - tp - fp - fn)
             for tp, fp, fn in itertools.product(range(n + 1), repeat=3)
             if tp + fp + fn <= n]
    arr = np.array(cells, dtype=np.float64)
    tp, fp, fn, tn = arr.T
    pos = tp + fn
    neg = tn + fp
    predpos = tp + fp
    # tp > 0 keeps f1 defined (pre + sen > 0 iff tp > 0)
    ok = (pos > 0) & (neg > 0) & (predpos > 0) & (tp > 0)
    arr, tp, fp, fn, tn = arr[ok], tp[ok], fp[ok], fn[ok], tn[ok]
    pos, neg, predpos = pos[ok], neg[ok], predpos[ok]
    acc = (tp + tn) / n
    sen = tp / pos
    spec = tn / neg
    pre = tp / predpos
    f1 = 2 * tp / (2 * tp + fp + fn)  # same as 2*pre*sen/(pre+sen), no 0/0
    auc = (sen + spec) / 2
    metrics = np.stack([acc, sen, spec, pre, f1, auc], axis=1)
    hit = np.all(np.abs(metrics - wanted[None, :]) <= tolerance + 1e-12, axis=1)
    return [ConfusionCounts(int(a), int(b), int(c), int(d))
            for a, b, c, d in arr[hit]]


# --- two-rater annotations ------------------------------------------------------

Cell = tuple[str, str]  # (doc_id, feature)


@dataclass(frozen=True)
class AnnotationSet:
    """Per-(doc, feature) YES/NO labels from two raters over the same cells."""

    doc_ids: tuple[str, ...]
    features: tuple[str, ...]
    rater1: Mapping[Cell, str]
    rater2: Mapping[Cell, str]

    def __post_init__(self):
        expected = {(d, f) for d in self.doc_ids for f in self.features}
        if set(self.rater1) != expected or set(self.rater2) != expected:
            raise ValueError("both raters must cover exactly the same cells")


def resolve_ground_truth(ann: AnnotationSet,
                         adjudication: Mapping[Cell, str] | None = None,
                         ) -> dict[str, list[str]]:
    """Collapse two raters into one truth vector per feature.

    Agreement cells pass through; every disagreement cell must appear in
    ``adjudication`` (UncoveredDisagreement otherwise), and adjudicating an
    agreement cell is rejected as SpuriousAdjudication.
    """
    adjudication = dict(adjudication or {})
    disagreements = {cell for cell in ann.rater1
                     if ann.rater1[cell] != ann.rater2[cell]}
    spurious = set(adjudication) - disagreements
    if spurious:
        raise SpuriousAdjudication(f"adjudication for agreement cells: {sorted(spurious)}")
    uncovered = disagreements - set(adjudication)
    if uncovered:
        raise UncoveredDisagreement(f"unresolved disagreements: {sorted(uncovered)}")
    out: dict[str, list[str]] = {}
    for feat in ann.features:
        vec = []
        for doc in ann.doc_ids:
            cell = (doc, feat)
            vec.append(adjudication.get(cell, ann.rater1[cell]))
        out[feat] = vec
    return out


def load_annotations(payload: bytes) -> tuple[AnnotationSet, dict[Cell, str]]:
    """Read an annotation CSV (doc_id, feature, rater1, rater2[, adjudicated]).

    Returns the annotation set plus whatever adjudications the file carries.
    """
    reader = csv.DictReader(io.StringIO(payload.decode("utf-8"), newline=""))
    r1: dict[Cell, str] = {}
    r2: dict[Cell, str] = {}
    adj: dict[Cell, str] = {}
    docs: list[str] = []
    feats: list[str] = []
    for row in reader:
        cell = (row["doc_id"], row["feature"])
        if row["doc_id"] not in docs:
            docs.append(row["doc_id"])
        if row["feature"] not in feats:
            feats.append(row["feature"])
        r1[cell] = row["rater1"].upper()
        r2[cell] = row["rater2"].upper()
        if row.get("adjudicated"):
            adj[cell] = row["adjudicated"].upper()
    ann = AnnotationSet(doc_ids=tuple(docs), features=tuple(feats),
                        rater1=r1, rater2=r2)
    return ann, adj


def validation_report_csv(rows: Mapping[str, MetricRow]) -> bytes:
    """Feature-by-feature report mirroring the six-metric column order, with
    degeneracy flags appended."""
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(("feature",) + tuple(METRIC_NAMES) + ("flags",))
    for feature, row in rows.items():
        writer.writerow([feature] + [f"{v:.6f}" for v in row.as_tuple()]
                        + [";".join(row.flags)])
    return buf.getvalue().encode("utf-8")
