"""The validation battery: confusion metrics, Cohen's kappa, and the
confusion-matrix reconstruction oracle.

For hard yes/no predictions the AUC is identically (sensitivity +
specificity) / 2, which is how a published two-decimal metric row can be
searched for integer confusion matrices that reproduce it.
"""

from dskit.evalkit import (AnnotationSet, ConfusionCounts, cohen_kappa,
                           confusion, metric_row, reconcile_table_row,
                           resolve_ground_truth)

# two raters, one disagreement, resolved by an explicit adjudication
ann = AnnotationSet(
    doc_ids=("d1", "d2", "d3", "d4"),
    features=("ventilator",),
    rater1={("d1", "ventilator"): "YES", ("d2", "ventilator"): "NO",
            ("d3", "ventilator"): "NO", ("d4", "ventilator"): "YES"},
    rater2={("d1", "ventilator"): "YES", ("d2", "ventilator"): "NO",
            ("d3", "ventilator"): "YES", ("d4", "ventilator"): "YES"},
)
r1 = [ann.rater1[("d%d" % i, "ventilator")] for i in range(1, 5)]
r2 = [ann.rater2[("d%d" % i, "ventilator")] for i in range(1, 5)]
print(f"inter-rater kappa: {cohen_kappa(r1, r2):.3f}")
truth = resolve_ground_truth(ann, {("d3", "ventilator"): "NO"})
print("adjudicated truth:", truth["ventilator"])

pred = [True, False, False, True]
actual = [v == "YES" for v in truth["ventilator"]]
row = metric_row(confusion(pred, actual))
print(f"\nmetrics: acc {row.accuracy:.2f}  sen {row.sensitivity:.2f}  "
      f"spec {row.specificity:.2f}  pre {row.precision:.2f}  "
      f"f1 {row.f1:.2f}  auc {row.auc:.2f}")

# which integer confusion matrices over 48 cases display as this row?
published = (0.96, 0.5, 1.0, 1.0, 0.67, 0.75)
solutions = reconcile_table_row(published, 48)
print(f"\nreported row {published} over n=48 is consistent with:")
for c in solutions:
    print(f"  tp={c.tp} fp={c.fp} fn={c.fn} tn={c.tn}")

# the oracle always re-finds the counts a row came from
c = ConfusionCounts(5, 3, 2, 38)
assert any((s.tp, s.fp, s.fn, s.tn) == (5, 3, 2, 38)
           for s in reconcile_table_row(metric_row(c), c.n))
print("\nself-consistency: reconciliation re-finds the source counts")
