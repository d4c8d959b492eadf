"""The whole pipeline as a batch run: synthesize a corpus (with one
deliberately corrupted payload and some empty course sections), train the
label model on a 10-document gold slice, then anonymize, extract fields,
extract features under the mock transport, and validate.

Per-document failures quarantine the document with a reason and never abort
the batch; the run report carries per-stage populations and timings.
"""

import tempfile
from pathlib import Path

from dskit.labelmodel import TrainingConfig
from dskit.orchestrator import (PipelineConfig, build_runtime, intra_model_kappa,
                                load_answers_csv, read_input_dir, run_pipeline,
                                train_label_model, validate_answers)
from dskit.synthcorpus import CorpusSpec, load_flags_csv, write_corpus

root = Path(tempfile.mkdtemp())
corpus = root / "corpus"
write_corpus(CorpusSpec(n_docs=30, seed=1, empty_course_rate=0.1), corpus)

checkpoint = root / "model.json"
train_label_model(corpus, checkpoint, gold_docs=10,
                  cfg=TrainingConfig(epochs=15, lr_feature=0.1,
                                     kl_weight=0.1, seed=0))

(corpus / "synth-0007.json").write_bytes(b"garbage")  # plant a format error

cfg = PipelineConfig(
    output_dir=root / "out",
    input_dir=corpus,
    checkpoint=checkpoint,
    registry_file=root / "registry.tsv",
    flags_csv=corpus / "ground_truth" / "flags.csv",
)
report = run_pipeline(build_runtime(cfg), read_input_dir(corpus))

print("stage populations:")
for stage, sr in report.stages.items():
    print(f"  {stage:10s} processed {len(sr.processed):3d}  "
          f"quarantined {len(sr.failures):2d}  {sr.total_ms:7.1f} ms")
    for name, reason in sr.failures[:3]:
        print(f"      {name}: {reason[:60]}")

answers = load_answers_csv(cfg.output_dir / "answers.csv")
truth = load_flags_csv(cfg.flags_csv)
rows = validate_answers(answers, truth)
kappas = intra_model_kappa(answers, 12)
print(f"\nintra-model kappa across questions: "
      f"{sorted(set(kappas.values()))}")
print("validation rows all exact:",
      all(r.as_tuple() == (1.0,) * 6 for r in rows.values()))
print(f"\nartifacts under {cfg.output_dir}")
