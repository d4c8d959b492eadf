"""Weak supervision end to end: apply the shipped labeling functions, look
at their coverage/conflict profile, then jointly train the reliability model
and the feature model and compare against a plain majority vote.

Only 20 of the 200 documents carry gold labels; everything else is learned
from the votes themselves plus the KL agreement between the two models.
"""

import numpy as np

from dskit import docmodel, labelmodel, lfkit
from dskit.docmodel import ClassLabel
from dskit.labelmodel import TrainingConfig
from dskit.lfkit import ABSTAIN
from dskit.synthcorpus import CorpusSpec, generate_corpus

payloads, truths = generate_corpus(CorpusSpec(n_docs=200, seed=7))
docs = [docmodel.parse_ocr_document(p) for p in payloads]
lfs = lfkit.default_lfset()

gold = {gt.doc_id: dict(enumerate(gt.labels)) for gt in truths[:20]}
matrix = lfkit.build_label_matrix(lfs, docs, gold=gold)
print(f"vote matrix: {matrix.n_rows} tokens x {matrix.n_lfs} LFs, "
      f"{int((matrix.gold >= 0).sum())} gold rows")

print("\nLF diagnostics:")
for lf_id, s in lfkit.coverage_stats(matrix).items():
    print(f"  {lf_id:22s} coverage {s.coverage:6.3f}  overlap {s.overlap:6.3f}"
          f"  conflict {s.conflict:6.3f}")

feats = np.concatenate([labelmodel.featurize_document(d) for d in docs])
cfg = TrainingConfig(epochs=20, lr_feature=0.1, lr_graphical=0.01,
                     kl_weight=0.1, seed=0)
params = labelmodel.train(matrix, feats, cfg)
print(f"\nloss: {params.loss_trace[0]:.4f} -> {params.loss_trace[-1]:.4f} "
      f"over {cfg.epochs} epochs")

print("\nlearned target-class reliabilities (bigger = more trusted):")
for j, lf in enumerate(lfs):
    print(f"  {lf.lf_id:22s} {params.graphical.theta[j, int(lf.target)]:+7.3f}")

# the deliberately crude header LF gets discounted relative to the anchored
# ones; a majority vote cannot make that distinction
truth = np.concatenate([[int(l) for l in gt.labels] for gt in truths])
pred = labelmodel.predict_rows(params, matrix.votes, feats)


def majority(row):
    vals = row[row != ABSTAIN]
    if len(vals) == 0:
        return int(ClassLabel.OTHER)
    counts = np.bincount(vals, minlength=4)
    winners = np.flatnonzero(counts == counts.max())
    return int(ClassLabel.OTHER) if int(ClassLabel.OTHER) in winners \
        else int(winners[0])


baseline = np.array([majority(r) for r in matrix.votes])
print(f"\ntoken accuracy: trained model {(pred == truth).mean():.4f} "
      f"vs majority vote {(baseline == truth).mean():.4f}")
