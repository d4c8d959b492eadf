"""Command-line entry points for the pipeline stages and the service.

The batch commands (`anonymize`, `run-all`) drive prefix runs of the
pipeline; `extract-fields` and `extract-features` re-run a single stage on
the previous stage's persisted artifacts; `synth` generates the test corpus;
`train-labelmodel` fits and saves a checkpoint; `serve` starts the HTTP
service; `validate` scores an answers CSV against ground truth.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import docmodel, evalkit, fieldex, orchestrator, promptex, synthcorpus
from .labelmodel import TrainingConfig
from .orchestrator import PipelineConfig, build_runtime, read_input_dir, run_pipeline


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _pipeline_config(args, stages) -> PipelineConfig:
    raw = _load_config_file(getattr(args, "config", None))
    llm = promptex.LlmConfig(**raw.get("llm", {}))
    input_dir = Path(args.input) if getattr(args, "input", None) else None
    flags_csv = raw.get("flags_csv")
    if flags_csv is None and input_dir is not None:
        candidate = input_dir / "ground_truth" / "flags.csv"
        if candidate.exists():
            flags_csv = candidate
    return PipelineConfig(
        output_dir=Path(args.output),
        input_dir=input_dir,
        registry_file=raw.get("registry_file",
                              Path(args.output) / "registry.tsv"),
        checkpoint=getattr(args, "checkpoint", None) or raw.get("checkpoint"),
        lfset_path=raw.get("lfset"),
        headings_path=raw.get("headings"),
        template_path=raw.get("template"),
        llm=llm,
        stages=stages,
        workers=int(raw.get("workers", 4)),
        mock_llm=bool(getattr(args, "mock_llm", False) or raw.get("mock_llm", False)),
        flags_csv=flags_csv,
    )


def _cmd_synth(args) -> int:
    spec = synthcorpus.CorpusSpec(
        n_docs=args.n_docs, seed=args.seed, phi_density=args.phi_density,
        feature_prevalence=args.prevalence, empty_course_rate=args.empty_course_rate)
    doc_paths, gt_dir = synthcorpus.write_corpus(spec, args.output)
    if args.malformed:
        # corrupt the last N non-empty-course docs so quarantine paths can be
        # demonstrated without hand-editing files
        corrupted = 0
        for path in reversed(doc_paths):
            if corrupted == args.malformed:
                break
            path.write_bytes(b"{ not valid json")
            corrupted += 1
    print(f"wrote {len(doc_paths)} documents to {args.output} "
          f"(ground truth in {gt_dir})")
    return 0


def _cmd_train(args) -> int:
    cfg = TrainingConfig(epochs=args.epochs, seed=args.seed,
                         lr_feature=args.lr_feature,
                         lr_graphical=args.lr_graphical,
                         kl_weight=args.kl_weight)
    params = orchestrator.train_label_model(
        args.input, args.output, gold_docs=args.gold_docs, cfg=cfg)
    print(f"checkpoint written to {args.output} "
          f"(final loss {params.loss_trace[-1]:.4f})")
    return 0


def _run_stages(args, stages) -> int:
    cfg = _pipeline_config(args, stages)
    rt = build_runtime(cfg)
    docs = read_input_dir(cfg.input_dir)
    report = run_pipeline(rt, docs)
    for stage, sr in report.stages.items():
        print(f"{stage}: {len(sr.processed)} processed, "
              f"{len(sr.failures)} quarantined, {sr.total_ms:.0f} ms")
    return 0


def _cmd_anonymize(args) -> int:
    return _run_stages(args, ("anonymize",))


def _cmd_run_all(args) -> int:
    return _run_stages(args, ("anonymize", "fields", "features"))


def _cmd_extract_fields(args) -> int:
    headings = (fieldex.load_heading_config(args.headings)
                if args.headings else fieldex.default_heading_config())
    records = []
    for name, payload in read_input_dir(args.input).items():
        doc = docmodel.parse_ocr_document(payload)
        rec = fieldex.extract_fields(docmodel.render_text(doc), headings)
        records.append(fieldex.ExtractionRecord(doc_id=doc.doc_id, values=rec.values))
    out = Path(args.output)
    orchestrator.atomic_write(out, fieldex.records_to_csv(records, headings))
    print(f"extracted {len(records)} records to {out}")
    return 0


def _cmd_extract_features(args) -> int:
    headings = fieldex.default_heading_config()
    template = (promptex.load_template(args.template)
                if args.template else promptex.default_template())
    llm = promptex.LlmConfig(**_load_config_file(args.config).get("llm", {}))
    if args.mock_llm:
        flags = synthcorpus.load_flags_csv(args.flags_csv)
        scripts = {doc_id: promptex.format_answers(
            ["YES" if f[k] else "NO" for k in synthcorpus.FEATURE_KEYS])
            for doc_id, f in flags.items()}
        transport: promptex.Transport = promptex.MockTransport(scripts)
    else:
        transport = promptex.HttpTransport(llm)
    fields_csv = Path(args.input)
    records = fieldex.csv_to_records(fields_csv.read_bytes(), headings)
    results = {}
    skipped = 0
    for rec in records:
        course = rec["course_in_hospital"]
        if not course.strip():
            skipped += 1
            continue
        results[rec.doc_id] = promptex.extract_features(
            rec.doc_id, course, template, llm, transport)
    rows = ["doc_id,question,run1,run2,agree"]
    for doc_id in sorted(results):
        run1, run2, agreement = results[doc_id]
        for q, (a1, a2, ok) in enumerate(zip(run1.answers, run2.answers, agreement),
                                         start=1):
            rows.append(f"{doc_id},{q},{a1},{a2},{1 if ok else 0}")
    orchestrator.atomic_write(Path(args.output),
                              ("\r\n".join(rows) + "\r\n").encode("utf-8"))
    print(f"extracted features for {len(results)} documents "
          f"({skipped} skipped for empty course) to {args.output}")
    return 0


def _cmd_validate(args) -> int:
    answers = orchestrator.load_answers_csv(args.input)
    if not args.annotations and not args.flags_csv:
        print("validate needs --flags-csv or --annotations", file=sys.stderr)
        return 2
    if args.annotations:
        ann, adj = evalkit.load_annotations(Path(args.annotations).read_bytes())
        resolved = evalkit.resolve_ground_truth(ann, adj)
        truth = {doc_id: {feat: resolved[feat][i] == "YES"
                          for feat in ann.features}
                 for i, doc_id in enumerate(ann.doc_ids)}
    else:
        truth = synthcorpus.load_flags_csv(args.flags_csv)
    rows = orchestrator.validate_answers(answers, truth)
    kappas = orchestrator.intra_model_kappa(answers,
                                            len(synthcorpus.FEATURE_KEYS))
    out = Path(args.output)
    orchestrator.atomic_write(out, evalkit.validation_report_csv(rows))
    print(f"validation report written to {out}")
    for q, key in enumerate(synthcorpus.FEATURE_KEYS, start=1):
        row = rows[key]
        print(f"  {key}: acc {row.accuracy:.3f} auc {row.auc:.3f} "
              f"intra-run kappa {kappas[q]:.3f}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = _pipeline_config(args, ("anonymize", "fields", "features"))
    app = create_app(cfg)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="dskit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--output", required=True)
    p.add_argument("--n-docs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--phi-density", type=float, default=8.0)
    p.add_argument("--prevalence", type=float, default=0.3)
    p.add_argument("--empty-course-rate", type=float, default=0.0)
    p.add_argument("--malformed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train-labelmodel", help="train and save a checkpoint")
    p.add_argument("--input", required=True, help="corpus dir from `synth`")
    p.add_argument("--output", required=True, help="checkpoint path")
    # calibrated for the from-scratch linear feature model; the library
    # defaults keep the published fine-tuning rates
    p.add_argument("--gold-docs", type=int, default=20)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr-feature", type=float, default=0.1)
    p.add_argument("--lr-graphical", type=float, default=0.01)
    p.add_argument("--kl-weight", type=float, default=0.1)
    p.set_defaults(func=_cmd_train)

    for name, fn in (("anonymize", _cmd_anonymize), ("run-all", _cmd_run_all)):
        p = sub.add_parser(name)
        p.add_argument("--input", required=True)
        p.add_argument("--output", required=True)
        p.add_argument("--config")
        p.add_argument("--checkpoint")
        p.add_argument("--mock-llm", action="store_true")
        p.set_defaults(func=fn)

    p = sub.add_parser("extract-fields",
                       help="fields CSV from a dir of (anonymized) OCR-JSON")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--headings")
    p.set_defaults(func=_cmd_extract_fields)

    p = sub.add_parser("extract-features",
                       help="answers CSV from a fields CSV")
    p.add_argument("--input", required=True, help="fields.csv path")
    p.add_argument("--output", required=True)
    p.add_argument("--template")
    p.add_argument("--config")
    p.add_argument("--mock-llm", action="store_true")
    p.add_argument("--flags-csv", help="oracle flags for the mock transport")
    p.set_defaults(func=_cmd_extract_features)

    p = sub.add_parser("validate", help="score answers against ground truth")
    p.add_argument("--input", required=True, help="answers.csv path")
    p.add_argument("--flags-csv", help="planted flags as truth")
    p.add_argument("--annotations",
                   help="two-rater annotation CSV (doc_id, feature, rater1, "
                        "rater2, adjudicated); features must use the pipeline "
                        "feature keys")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--input", help="dir whose ground_truth feeds the mock")
    p.add_argument("--output", required=True)
    p.add_argument("--config")
    p.add_argument("--checkpoint")
    p.add_argument("--mock-llm", action="store_true")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8520)
    p.set_defaults(func=_cmd_serve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
