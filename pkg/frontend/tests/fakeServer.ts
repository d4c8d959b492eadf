// In-memory stand-in for the pipeline service, faithful to its REST
// contract (status codes, payload shapes, template versioning rules).
// Jobs advance one step per status poll so progress rendering is
// observable; results are scripted per document.

import type { FetchLike } from "../src/api";
import type { DocResult, JobReport, TemplatePayload } from "../src/types";

interface FakeJob {
  job_id: string;
  status: string;
  progress: number;
  report: JobReport | null;
  docIds: string[];
  templateId: string;
  pollsLeft: number;
}

const DEFAULT_QUESTIONS = Array.from(
  { length: 12 },
  (_, i) => `Default clinical question ${i + 1}`,
);

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export class FakeServer {
  documents = new Map<string, string>();
  results = new Map<string, DocResult>();
  jobs = new Map<string, FakeJob>();
  templates = new Map<string, TemplatePayload>();
  /** docs that should fail inside the job with a quarantine reason */
  failDocs = new Map<string, string>();
  /** docs whose second run flips the given 0-based question index */
  divergeDocs = new Map<string, number>();
  /** docs whose result should omit run 2 entirely */
  singleRunDocs = new Set<string>();
  pollsPerJob = 2;
  private jobCounter = 0;

  constructor() {
    this.templates.set("default", {
      template_id: "default",
      version: 1,
      preamble: "Read the summary and answer yes or no.",
      questions: DEFAULT_QUESTIONS,
      answer_instruction: "Only return the answers next to indices.",
    });
  }

  fetch: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const body = typeof init?.body === "string" ? init.body : "";

    if (method === "GET" && path === "/healthz") {
      return json(200, { status: "ok" });
    }
    if (method === "POST" && path === "/documents") {
      return this.uploadDocument(body);
    }
    if (method === "POST" && path === "/jobs") {
      return this.createJob(body);
    }
    let m = path.match(/^\/jobs\/([^/]+)$/);
    if (method === "GET" && m) {
      return this.pollJob(decodeURIComponent(m[1]));
    }
    m = path.match(/^\/results\/([^/]+)$/);
    if (method === "GET" && m) {
      const result = this.results.get(decodeURIComponent(m[1]));
      return result
        ? json(200, result)
        : json(404, { detail: "no result for this document" });
    }
    m = path.match(/^\/templates\/([^/]+)$/);
    if (m && method === "GET") {
      const t = this.templates.get(decodeURIComponent(m[1]));
      return t ? json(200, t) : json(404, { detail: "unknown template" });
    }
    if (m && method === "PUT") {
      return this.putTemplate(decodeURIComponent(m[1]), body);
    }
    return json(404, { detail: `no route for ${method} ${path}` });
  };

  private uploadDocument(body: string): Response {
    let parsed: { doc_id?: string; pages?: { words?: unknown[] }[] };
    try {
      parsed = JSON.parse(body);
    } catch {
      return json(400, { detail: "payload is not valid JSON" });
    }
    if (!parsed.doc_id || !Array.isArray(parsed.pages)) {
      return json(400, { detail: "doc_id and pages are required" });
    }
    const tokens = parsed.pages.reduce(
      (acc, p) => acc + (p.words?.length ?? 0),
      0,
    );
    if (tokens === 0) {
      return json(400, { detail: `document ${parsed.doc_id} has no tokens` });
    }
    this.documents.set(parsed.doc_id, body);
    return json(200, {
      doc_id: parsed.doc_id,
      pages: parsed.pages.length,
      tokens,
    });
  }

  private createJob(body: string): Response {
    const parsed = JSON.parse(body) as {
      doc_ids?: string[];
      template_id?: string;
    };
    const docIds = parsed.doc_ids ?? [];
    const templateId = parsed.template_id ?? "default";
    if (docIds.length === 0) {
      return json(400, { detail: "doc_ids must be non-empty" });
    }
    const unknown = docIds.filter((d) => !this.documents.has(d));
    if (unknown.length > 0) {
      return json(404, { detail: `unknown doc_ids: ${unknown.join(",")}` });
    }
    if (!this.templates.has(templateId)) {
      return json(404, { detail: "unknown template" });
    }
    const jobId = `job-${++this.jobCounter}`;
    this.jobs.set(jobId, {
      job_id: jobId,
      status: "QUEUED",
      progress: 0,
      report: null,
      docIds,
      templateId,
      pollsLeft: this.pollsPerJob,
    });
    return json(200, { job_id: jobId });
  }

  private pollJob(jobId: string): Response {
    const job = this.jobs.get(jobId);
    if (!job) return json(404, { detail: "unknown job" });
    if (job.status !== "DONE") {
      if (job.pollsLeft > 0) {
        job.status = "RUNNING";
        job.progress = 1 - job.pollsLeft / (this.pollsPerJob + 1);
        job.pollsLeft -= 1;
      } else {
        this.finishJob(job);
      }
    }
    return json(200, {
      job_id: job.job_id,
      status: job.status,
      progress: job.progress,
      report: job.report,
    });
  }

  private finishJob(job: FakeJob): void {
    const processed: string[] = [];
    const failures: [string, string][] = [];
    const template = this.templates.get(job.templateId)!;
    for (const docId of job.docIds) {
      const reason = this.failDocs.get(docId);
      if (reason) {
        failures.push([docId, reason]);
        continue;
      }
      this.results.set(docId, this.buildResult(docId, template));
      processed.push(docId);
    }
    job.status = "DONE";
    job.progress = 1;
    job.report = { processed, failures };
  }

  private buildResult(docId: string, template: TemplatePayload): DocResult {
    const n = template.questions.length;
    const run1 = Array.from({ length: n }, (_, i) =>
      i % 3 === 0 ? "YES" : "NO",
    );
    let run2: string[] | null = [...run1];
    const flip = this.divergeDocs.get(docId);
    if (flip !== undefined && run2) {
      run2[flip] = run2[flip] === "YES" ? "NO" : "YES";
    }
    if (this.singleRunDocs.has(docId)) {
      run2 = null;
    }
    return {
      doc_id: docId,
      anonymized_text:
        `DISCHARGE SUMMARY DS-000001\n` +
        `Patient Name: [REDACTED] [REDACTED]\n` +
        `DIAGNOSIS viral fever`,
      serial: 1,
      fields: { diagnosis: "viral fever", course_in_hospital: "stable stay" },
      answers: {
        questions: template.questions,
        run1,
        run2,
        agreement: run2 ? run1.map((a, i) => a === run2![i]) : null,
      },
    };
  }

  private putTemplate(id: string, body: string): Response {
    if (id === "default") {
      return json(409, { detail: "default template is read-only; clone to edit" });
    }
    const parsed = JSON.parse(body) as {
      preamble?: string;
      questions?: string[];
      answer_instruction?: string;
      version?: number;
    };
    if (!parsed.questions || parsed.questions.length === 0) {
      return json(422, { detail: "a template needs at least one question" });
    }
    if (!parsed.preamble?.trim() || !parsed.answer_instruction?.trim()) {
      return json(422, { detail: "preamble and answer_instruction must be non-empty" });
    }
    const current = this.templates.get(id);
    if (
      current &&
      parsed.version !== undefined &&
      parsed.version !== current.version
    ) {
      return json(409, { detail: "stale template version; reload and retry" });
    }
    const version = current ? current.version + 1 : 1;
    this.templates.set(id, {
      template_id: id,
      version,
      preamble: parsed.preamble!,
      questions: parsed.questions,
      answer_instruction: parsed.answer_instruction!,
    });
    return json(200, { template_id: id, version });
  }
}

export function docPayload(docId: string, words = ["alpha", "beta"]): string {
  return JSON.stringify({
    doc_id: docId,
    pages: [
      {
        words: words.map((text, i) => ({
          text,
          bbox: [0.05 + i * 0.1, 0.1, 0.12 + i * 0.1, 0.12],
        })),
      },
    ],
  });
}
