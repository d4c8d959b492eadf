"""End-to-end pipeline: anonymize, extract regular fields, extract clinical
features, validate; plus the batch bookkeeping the stages share.

A document that fails a stage is quarantined: recorded with its reason,
excluded from every later stage, and never allowed to abort the batch.
Stage artifacts (anonymized OCR-JSON and text, fields CSV, answers CSV) are
persisted after each stage and written atomically, so any stage can be
re-run in isolation.
"""

from __future__ import annotations

import json
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from . import anonymizer, docmodel, evalkit, fieldex, labelmodel, promptex, synthcorpus
from .anonymizer import SerialRegistry
from .docmodel import Document
from .lfkit import LFSet, default_lfset, load_lfset

STAGE_ORDER = ("anonymize", "fields", "features")


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    output_dir: Path
    input_dir: Path | None = None
    registry_file: Path | None = None
    checkpoint: Path | None = None
    lfset_path: Path | None = None
    headings_path: Path | None = None
    template_path: Path | None = None
    llm: promptex.LlmConfig = field(default_factory=promptex.LlmConfig)
    stages: tuple[str, ...] = STAGE_ORDER
    workers: int = 4
    mock_llm: bool = True
    flags_csv: Path | None = None  # oracle answers for the mock transport

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        self.stages = tuple(self.stages)
        if self.stages != STAGE_ORDER[: len(self.stages)]:
            raise ConfigError(
                f"enabled stages must be a prefix of {STAGE_ORDER}, got {self.stages}")
        for name in ("input_dir", "registry_file", "checkpoint", "lfset_path",
                     "headings_path", "template_path", "flags_csv"):
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, Path(value))
        for name in ("input_dir", "checkpoint", "lfset_path", "headings_path",
                     "template_path", "flags_csv"):
            value = getattr(self, name)
            if value is not None and not value.exists():
                raise ConfigError(f"{name} does not exist: {value}")


@dataclass
class StageReport:
    processed: list[str] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)
    per_doc_ms: dict[str, float] = field(default_factory=dict)

    @property
    def total_ms(self) -> float:
        return sum(self.per_doc_ms.values())


@dataclass
class RunReport:
    stages: dict[str, StageReport] = field(default_factory=dict)

    def survivors(self, stage: str) -> list[str]:
        return self.stages[stage].processed

    def to_dict(self) -> dict:
        return {
            name: {
                "processed": sr.processed,
                "failures": sr.failures,
                "per_doc_ms": sr.per_doc_ms,
                "total_ms": sr.total_ms,
            }
            for name, sr in self.stages.items()
        }


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class Runtime:
    """Resolved configuration: parsed configs, model, transport, registry."""

    cfg: PipelineConfig
    lfs: LFSet
    headings: fieldex.HeadingConfig
    template: promptex.PromptTemplate
    params: labelmodel.LabelModelParams | None
    transport: promptex.Transport | None
    registry: SerialRegistry


def build_runtime(cfg: PipelineConfig,
                  transport: promptex.Transport | None = None) -> Runtime:
    lfs = load_lfset(cfg.lfset_path) if cfg.lfset_path else default_lfset()
    headings = (fieldex.load_heading_config(cfg.headings_path)
                if cfg.headings_path else fieldex.default_heading_config())
    template = (promptex.load_template(cfg.template_path)
                if cfg.template_path else promptex.default_template())
    params = None
    if "anonymize" in cfg.stages:
        if cfg.checkpoint is None:
            raise ConfigError("anonymize stage requires a model checkpoint")
        params = labelmodel.load_checkpoint(cfg.checkpoint)
    if transport is None and "features" in cfg.stages:
        if cfg.mock_llm:
            if cfg.flags_csv is None:
                raise ConfigError("mock transport requires flags_csv with oracle answers")
            flags = synthcorpus.load_flags_csv(cfg.flags_csv)
            scripts = {
                doc_id: promptex.format_answers(
                    ["YES" if f[key] else "NO" for key in synthcorpus.FEATURE_KEYS])
                for doc_id, f in flags.items()
            }
            transport = promptex.MockTransport(scripts)
        else:
            transport = promptex.HttpTransport(cfg.llm)
    registry = SerialRegistry(cfg.registry_file)
    return Runtime(cfg=cfg, lfs=lfs, headings=headings, template=template,
                   params=params, transport=transport, registry=registry)


def read_input_dir(input_dir: str | Path) -> dict[str, bytes]:
    """All .json payloads in a directory, keyed by file stem, sorted."""
    docs = {}
    for path in sorted(Path(input_dir).glob("*.json")):
        docs[path.stem] = path.read_bytes()
    return docs


def run_pipeline(rt: Runtime, docs: Mapping[str, bytes]) -> RunReport:
    """Flow every document through the enabled stages.

    ``docs`` maps an input name (used for quarantine reporting when parsing
    fails) to an OCR-JSON payload.  Artifacts land under the configured
    output directory; the report records per-stage outcomes and timings.
    """
    cfg = rt.cfg
    report = RunReport()
    names = sorted(docs)

    # -- anonymize ---------------------------------------------------------
    anonymized: dict[str, Document] = {}
    if "anonymize" in cfg.stages:
        sr = StageReport()
        report.stages["anonymize"] = sr
        assert rt.params is not None
        predictions: dict[str, tuple[Document, list]] = {}

        def _predict(name: str):
            doc = docmodel.parse_ocr_document(docs[name])
            return doc, labelmodel.predict(rt.params, doc, rt.lfs)

        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = {name: pool.submit(_predict, name) for name in names}
        for name in names:
            t0 = time.perf_counter()
            try:
                predictions[name] = futures[name].result()
            except Exception as exc:
                sr.failures.append((name, f"{type(exc).__name__}: {exc}"))
                sr.per_doc_ms[name] = (time.perf_counter() - t0) * 1000.0
        # registry assignment runs in input order so fresh registries get
        # deterministic serials regardless of worker scheduling
        for name in names:
            if name not in predictions:
                continue
            t0 = time.perf_counter()
            doc, labels = predictions[name]
            anon = anonymizer.anonymize(doc, labels, rt.registry)
            anon_doc = anon.to_document()
            anonymized[name] = anon_doc
            atomic_write(cfg.output_dir / "anonymized" / f"{doc.doc_id}.json",
                         docmodel.serialize_document(anon_doc))
            atomic_write(cfg.output_dir / "anonymized" / f"{doc.doc_id}.txt",
                         docmodel.render_text(anon_doc).encode("utf-8"))
            sr.per_doc_ms[name] = sr.per_doc_ms.get(name, 0.0) \
                + (time.perf_counter() - t0) * 1000.0
            sr.processed.append(name)
        survivors = sr.processed
    else:
        survivors = names

    # -- regular fields ----------------------------------------------------
    records: dict[str, fieldex.ExtractionRecord] = {}
    if "fields" in cfg.stages:
        sr = StageReport()
        report.stages["fields"] = sr
        for name in survivors:
            t0 = time.perf_counter()
            try:
                if name in anonymized:
                    doc = anonymized[name]
                else:
                    doc = docmodel.parse_ocr_document(docs[name])
                text = docmodel.render_text(doc)
                rec = fieldex.extract_fields(text, rt.headings)
                records[name] = fieldex.ExtractionRecord(doc_id=doc.doc_id,
                                                         values=rec.values)
                sr.processed.append(name)
            except Exception as exc:
                sr.failures.append((name, f"{type(exc).__name__}: {exc}"))
            sr.per_doc_ms[name] = (time.perf_counter() - t0) * 1000.0
        atomic_write(cfg.output_dir / "fields.csv",
                     fieldex.records_to_csv([records[n] for n in sr.processed],
                                            rt.headings))
        survivors = sr.processed

    # -- clinical features ---------------------------------------------------
    if "features" in cfg.stages:
        sr = StageReport()
        report.stages["features"] = sr
        assert rt.transport is not None
        eligible = []
        for name in survivors:
            course = records[name]["course_in_hospital"] if name in records else ""
            if course.strip():
                eligible.append((name, course))
            else:
                sr.failures.append((name, "empty course_in_hospital"))

        results: dict[str, tuple] = {}

        def _extract(name: str, course: str):
            return promptex.extract_features(
                records[name].doc_id, course, rt.template, cfg.llm, rt.transport)

        max_workers = max(1, min(cfg.workers, cfg.llm.max_concurrency))
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = {name: pool.submit(_extract, name, course)
                       for name, course in eligible}
        for name, _course in eligible:
            t0 = time.perf_counter()
            try:
                results[name] = futures[name].result()
                sr.processed.append(name)
            except Exception as exc:
                sr.failures.append((name, f"{type(exc).__name__}: {exc}"))
            sr.per_doc_ms[name] = (time.perf_counter() - t0) * 1000.0

        atomic_write(cfg.output_dir / "answers.csv",
                     _answers_csv(rt, results, sr.processed))

    atomic_write(cfg.output_dir / "report.json",
                 json.dumps(report.to_dict(), indent=2).encode("utf-8"))
    return report


def _answers_csv(rt: Runtime, results: Mapping[str, tuple],
                 order: list[str]) -> bytes:
    import csv
    import io

    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["doc_id", "question", "run1", "run2", "agree"])
    for name in order:
        run1, run2, agreement = results[name]
        for q, (a1, a2, ok) in enumerate(zip(run1.answers, run2.answers, agreement),
                                         start=1):
            writer.writerow([run1.doc_id, q, a1, a2, "1" if ok else "0"])
    return buf.getvalue().encode("utf-8")


def load_answers_csv(path: str | Path) -> dict[str, dict[int, tuple[str, str]]]:
    """answers.csv back into {doc_id: {question: (run1, run2)}}."""
    import csv

    out: dict[str, dict[int, tuple[str, str]]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["doc_id"], {})[int(row["question"])] = \
                (row["run1"], row["run2"])
    return out


def intra_model_kappa(answers: Mapping[str, Mapping[int, tuple[str, str]]],
                      n_questions: int) -> dict[int, float]:
    """Between-run agreement (kappa) per question across the batch."""
    out = {}
    docs = sorted(answers)
    for q in range(1, n_questions + 1):
        run1 = [answers[d][q][0] for d in docs]
        run2 = [answers[d][q][1] for d in docs]
        out[q] = evalkit.cohen_kappa(run1, run2)
    return out


def validate_answers(answers: Mapping[str, Mapping[int, tuple[str, str]]],
                     truth: Mapping[str, Mapping[str, bool]],
                     ) -> dict[str, evalkit.MetricRow]:
    """Score run-1 answers against per-feature truth flags.

    Only documents present in both mappings are scored; question order
    follows the default feature key order.
    """
    docs = sorted(set(answers) & set(truth))
    rows: dict[str, evalkit.MetricRow] = {}
    for q, key in enumerate(synthcorpus.FEATURE_KEYS, start=1):
        pred = [answers[d][q][0] == "YES" for d in docs]
        actual = [truth[d][key] for d in docs]
        rows[key] = evalkit.metric_row(evalkit.confusion(pred, actual))
    return rows


# --- label-model training entry -------------------------------------------------

def train_label_model(corpus_dir: str | Path, out_checkpoint: str | Path,
                      lfs: LFSet | None = None, gold_docs: int = 20,
                      cfg: labelmodel.TrainingConfig | None = None,
                      ) -> labelmodel.LabelModelParams:
    """Train on an on-disk corpus using gold labels for the first
    ``gold_docs`` documents (ground_truth/labels.csv must exist)."""
    from .lfkit import build_label_matrix

    corpus_dir = Path(corpus_dir)
    lfs = lfs or default_lfset()
    docs = []
    for p in sorted(corpus_dir.glob("*.json")):
        try:
            docs.append(docmodel.parse_ocr_document(p.read_bytes()))
        except (docmodel.MalformedPayload, docmodel.EmptyDocument,
                docmodel.BadBBox):
            continue  # unparseable docs are quarantined from training too
    labels = synthcorpus.load_labels_csv(corpus_dir / "ground_truth" / "labels.csv")
    gold_ids = [d.doc_id for d in docs[:gold_docs]]
    gold = {doc_id: labels[doc_id] for doc_id in gold_ids if doc_id in labels}
    matrix = build_label_matrix(lfs, docs, gold=gold)
    import numpy as np

    feats = np.concatenate([labelmodel.featurize_document(d) for d in docs], axis=0)
    params = labelmodel.train(matrix, feats, cfg)
    labelmodel.save_checkpoint(params, out_checkpoint)
    return params
