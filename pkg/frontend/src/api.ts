// The single typed client module: every server call in the console goes
// through here, so tests can intercept the whole API surface by injecting
// a fetch function.

import type {
  DocResult,
  JobCreated,
  JobView,
  TemplatePayload,
  UploadResponse,
  ValidationPayload,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

function requireFields(obj: Record<string, unknown>, fields: string[]): void {
  for (const f of fields) {
    if (obj[f] === undefined) {
      throw new ApiError(0, `malformed server response: missing "${f}"`);
    }
  }
}

export interface TemplateBody {
  preamble: string;
  questions: string[];
  answer_instruction: string;
  version?: number;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request(
    method: string,
    path: string,
    body?: string | object,
  ): Promise<unknown> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.body = typeof body === "string" ? body : JSON.stringify(body);
      init.headers = { "Content-Type": "application/json" };
    }
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    let payload: unknown = null;
    try {
      payload = await resp.json();
    } catch {
      payload = null;
    }
    if (!resp.ok) {
      const detail =
        payload && typeof payload === "object" && "detail" in payload
          ? String((payload as { detail: unknown }).detail)
          : resp.statusText || "request failed";
      throw new ApiError(resp.status, detail);
    }
    return payload;
  }

  async health(): Promise<boolean> {
    const data = (await this.request("GET", "/healthz")) as { status?: string };
    return data?.status === "ok";
  }

  async uploadDocument(payload: string): Promise<UploadResponse> {
    const data = (await this.request("POST", "/documents", payload)) as Record<
      string,
      unknown
    >;
    requireFields(data, ["doc_id"]);
    return data as unknown as UploadResponse;
  }

  async createJob(docIds: string[], templateId = "default"): Promise<string> {
    const data = (await this.request("POST", "/jobs", {
      doc_ids: docIds,
      template_id: templateId,
    })) as Record<string, unknown>;
    requireFields(data, ["job_id"]);
    return (data as unknown as JobCreated).job_id;
  }

  async getJob(jobId: string): Promise<JobView> {
    const data = (await this.request(
      "GET",
      `/jobs/${encodeURIComponent(jobId)}`,
    )) as Record<string, unknown>;
    requireFields(data, ["job_id", "status", "progress"]);
    return data as unknown as JobView;
  }

  async getResult(docId: string): Promise<DocResult> {
    const data = (await this.request(
      "GET",
      `/results/${encodeURIComponent(docId)}`,
    )) as Record<string, unknown>;
    requireFields(data, ["doc_id", "anonymized_text", "fields"]);
    return data as unknown as DocResult;
  }

  async getTemplate(id: string): Promise<TemplatePayload> {
    const data = (await this.request(
      "GET",
      `/templates/${encodeURIComponent(id)}`,
    )) as Record<string, unknown>;
    requireFields(data, ["template_id", "version", "questions"]);
    return data as unknown as TemplatePayload;
  }

  async putTemplate(
    id: string,
    body: TemplateBody,
  ): Promise<{ template_id: string; version: number }> {
    const data = (await this.request(
      "PUT",
      `/templates/${encodeURIComponent(id)}`,
      body,
    )) as Record<string, unknown>;
    requireFields(data, ["template_id", "version"]);
    return data as { template_id: string; version: number };
  }

  async validationMetrics(): Promise<ValidationPayload> {
    const data = (await this.request(
      "GET",
      "/metrics/validation",
    )) as Record<string, unknown>;
    requireFields(data, ["rows"]);
    return data as unknown as ValidationPayload;
  }
}
