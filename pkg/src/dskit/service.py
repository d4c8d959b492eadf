"""REST service backing the operator console: document upload, template
editing, asynchronous batch jobs with progress, per-document results, and a
validation-metrics view.

All state is in-process (one-deployment footprint): an upload store, a
versioned template store with a read-only default, a job table, and a result
store.  Jobs run on a bounded worker pool; a document that fails a stage is
quarantined into the job report while the batch continues.
"""

from __future__ import annotations

import itertools
import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from typing import Any

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import docmodel, evalkit, fieldex, labelmodel, promptex, synthcorpus
from .anonymizer import anonymize
from .orchestrator import PipelineConfig, Runtime, build_runtime

JOB_QUEUED = "QUEUED"
JOB_RUNNING = "RUNNING"
JOB_DONE = "DONE"
JOB_FAILED = "FAILED"


class TemplateBody(BaseModel):
    preamble: str
    questions: list[str]
    answer_instruction: str
    version: int | None = None


class JobBody(BaseModel):
    doc_ids: list[str]
    stages: list[str] | None = None
    template_id: str = "default"


class _State:
    def __init__(self, rt: Runtime, job_workers: int):
        self.rt = rt
        self.lock = threading.Lock()
        self.documents: dict[str, bytes] = {}
        self.results: dict[str, dict] = {}
        self.jobs: dict[str, dict] = {}
        self.templates: dict[str, dict] = {}
        self._job_counter = itertools.count(1)
        self.executor = ThreadPoolExecutor(max_workers=job_workers)
        t = rt.template
        self.templates["default"] = {
            "template_id": "default",
            "version": 1,
            "preamble": t.preamble,
            "questions": list(t.questions),
            "answer_instruction": t.answer_instruction,
        }

    def next_job_id(self) -> str:
        return f"job-{next(self._job_counter):04d}"


def _template_from_store(entry: dict) -> promptex.PromptTemplate:
    return promptex.PromptTemplate(preamble=entry["preamble"],
                                   questions=tuple(entry["questions"]),
                                   answer_instruction=entry["answer_instruction"])


def _run_job(state: _State, job_id: str) -> None:
    with state.lock:
        job = state.jobs[job_id]
        job["status"] = JOB_RUNNING
        doc_ids = list(job["doc_ids"])
        template = _template_from_store(state.templates[job["template_id"]])
    rt = state.rt
    processed: list[str] = []
    failures: list[tuple[str, str]] = []
    try:
        for i, doc_id in enumerate(doc_ids):
            try:
                result = _process_document(state, rt, doc_id, template)
                with state.lock:
                    state.results[doc_id] = result
                processed.append(doc_id)
            except Exception as exc:
                failures.append((doc_id, f"{type(exc).__name__}: {exc}"))
            with state.lock:
                state.jobs[job_id]["progress"] = (i + 1) / len(doc_ids)
        with state.lock:
            job = state.jobs[job_id]
            job["status"] = JOB_DONE
            job["progress"] = 1.0
            job["report"] = {"processed": processed, "failures": failures}
    except Exception as exc:  # infrastructure failure, not a per-doc error
        with state.lock:
            job = state.jobs[job_id]
            job["status"] = JOB_FAILED
            job["report"] = {"processed": processed,
                             "failures": failures + [("*", str(exc))]}


def _process_document(state: _State, rt: Runtime, doc_id: str,
                      template: promptex.PromptTemplate) -> dict:
    with state.lock:
        payload = state.documents[doc_id]
    doc = docmodel.parse_ocr_document(payload)
    result: dict[str, Any] = {"doc_id": doc.doc_id}

    assert rt.params is not None
    labels = labelmodel.predict(rt.params, doc, rt.lfs)
    anon = anonymize(doc, labels, rt.registry)
    anon_doc = anon.to_document()
    result["anonymized_text"] = docmodel.render_text(anon_doc)
    result["serial"] = anon.serial

    record = fieldex.extract_fields(result["anonymized_text"], rt.headings)
    result["fields"] = record.as_dict()

    course = record["course_in_hospital"]
    if course.strip():
        assert rt.transport is not None
        run1, run2, agreement = promptex.extract_features(
            doc.doc_id, course, template, rt.cfg.llm, rt.transport)
        result["answers"] = {
            "questions": list(template.questions),
            "run1": run1.answers,
            "run2": run2.answers,
            "agreement": agreement,
        }
    else:
        result["answers"] = None
        result["skipped_features"] = "empty course_in_hospital"
    return result


def create_app(cfg: PipelineConfig,
               transport: promptex.Transport | None = None,
               job_workers: int = 2) -> FastAPI:
    """Build the service around one resolved pipeline runtime.

    ``transport`` overrides the configured one (tests inject scripted
    mocks).  The anonymize stage is always on, so the config must name a
    model checkpoint.
    """
    rt = build_runtime(cfg, transport=transport)
    state = _State(rt, job_workers)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        state.executor.shutdown(wait=True)  # finish in-flight jobs

    app = FastAPI(title="dskit service", lifespan=lifespan)
    app.state.store = state

    @app.exception_handler(docmodel.MalformedPayload)
    @app.exception_handler(docmodel.EmptyDocument)
    @app.exception_handler(docmodel.BadBBox)
    async def _bad_payload(request: Request, exc: Exception):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/documents")
    async def upload_document(request: Request):
        payload = await request.body()
        doc = docmodel.parse_ocr_document(payload)
        with state.lock:
            state.documents[doc.doc_id] = payload
        return {"doc_id": doc.doc_id, "pages": doc.pages,
                "tokens": len(doc.tokens)}

    @app.get("/templates/{template_id}")
    def get_template(template_id: str):
        with state.lock:
            entry = state.templates.get(template_id)
        if entry is None:
            raise HTTPException(status_code=404, detail="unknown template")
        return entry

    @app.put("/templates/{template_id}")
    def put_template(template_id: str, body: TemplateBody):
        if template_id == "default":
            raise HTTPException(status_code=409,
                                detail="default template is read-only; clone to edit")
        if not body.questions or any(not q.strip() for q in body.questions):
            raise HTTPException(status_code=422,
                                detail="a template needs at least one non-empty question")
        if not body.preamble.strip() or not body.answer_instruction.strip():
            raise HTTPException(status_code=422,
                                detail="preamble and answer_instruction must be non-empty")
        with state.lock:
            current = state.templates.get(template_id)
            if current is not None and body.version is not None \
                    and body.version != current["version"]:
                raise HTTPException(status_code=409,
                                    detail="stale template version; reload and retry")
            version = 1 if current is None else current["version"] + 1
            state.templates[template_id] = {
                "template_id": template_id,
                "version": version,
                "preamble": body.preamble,
                "questions": list(body.questions),
                "answer_instruction": body.answer_instruction,
            }
        return {"template_id": template_id, "version": version}

    @app.post("/jobs")
    def create_job(body: JobBody):
        if not body.doc_ids:
            raise HTTPException(status_code=400, detail="doc_ids must be non-empty")
        with state.lock:
            unknown = [d for d in body.doc_ids if d not in state.documents]
            if unknown:
                raise HTTPException(status_code=404,
                                    detail=f"unknown doc_ids: {unknown}")
            if body.template_id not in state.templates:
                raise HTTPException(status_code=404, detail="unknown template")
            job_id = state.next_job_id()
            state.jobs[job_id] = {"job_id": job_id, "status": JOB_QUEUED,
                                  "progress": 0.0, "doc_ids": list(body.doc_ids),
                                  "template_id": body.template_id, "report": None}
        state.executor.submit(_run_job, state, job_id)
        return {"job_id": job_id}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        with state.lock:
            job = state.jobs.get(job_id)
            if job is None:
                raise HTTPException(status_code=404, detail="unknown job")
            return {k: job[k] for k in
                    ("job_id", "status", "progress", "report")}

    @app.get("/results/{doc_id}")
    def get_result(doc_id: str):
        with state.lock:
            result = state.results.get(doc_id)
        if result is None:
            raise HTTPException(status_code=404, detail="no result for this document")
        return result

    @app.get("/metrics/validation")
    def validation_metrics():
        if cfg.flags_csv is None:
            raise HTTPException(status_code=404,
                                detail="no ground-truth flags configured")
        truth = synthcorpus.load_flags_csv(cfg.flags_csv)
        with state.lock:
            scored = {doc_id: r for doc_id, r in state.results.items()
                      if r.get("answers") and doc_id in truth}
        if not scored:
            raise HTTPException(status_code=404, detail="no scored results yet")
        rows = {}
        for q, key in enumerate(synthcorpus.FEATURE_KEYS, start=1):
            pred = [r["answers"]["run1"][q - 1] == "YES" for r in scored.values()]
            actual = [truth[d][key] for d in scored]
            row = evalkit.metric_row(evalkit.confusion(pred, actual))
            rows[key] = {"accuracy": row.accuracy, "sensitivity": row.sensitivity,
                         "specificity": row.specificity, "precision": row.precision,
                         "f1": row.f1, "auc": row.auc, "flags": list(row.flags)}
        return {"n_documents": len(scored), "rows": rows}

    return app
