// Upload-and-run workflow: push files to the server, create a job, poll its
// status once a second, and fetch per-document results as they complete.
// Per-file and per-document failures are surfaced verbatim, never swallowed.

import { ApiClient, ApiError } from "./api.js";
import type { DocResult, JobView } from "./types.js";

export interface NamedFile {
  name: string;
  content: string;
}

export interface UploadOutcome {
  docIds: string[];
  failures: { name: string; error: string }[];
}

export async function uploadFiles(
  client: ApiClient,
  files: NamedFile[],
): Promise<UploadOutcome> {
  const outcome: UploadOutcome = { docIds: [], failures: [] };
  for (const file of files) {
    try {
      const resp = await client.uploadDocument(file.content);
      outcome.docIds.push(resp.doc_id);
    } catch (err) {
      const message = err instanceof ApiError ? err.message : String(err);
      outcome.failures.push({ name: file.name, error: message });
    }
  }
  return outcome;
}

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

export interface PollOptions {
  intervalMs?: number;
  timeoutMs?: number;
  onProgress?: (job: JobView) => void;
}

export async function pollJob(
  client: ApiClient,
  jobId: string,
  opts: PollOptions = {},
): Promise<JobView> {
  const interval = opts.intervalMs ?? 1000;
  const timeout = opts.timeoutMs ?? 10 * 60 * 1000;
  const deadline = Date.now() + timeout;
  for (;;) {
    const job = await client.getJob(jobId);
    opts.onProgress?.(job);
    if (job.status === "DONE" || job.status === "FAILED") {
      return job;
    }
    if (Date.now() > deadline) {
      throw new Error(`job ${jobId} did not finish within ${timeout} ms`);
    }
    await sleep(interval);
  }
}

export interface RunOutcome {
  job: JobView;
  results: DocResult[];
  quarantined: { docId: string; reason: string }[];
}

export async function runJob(
  client: ApiClient,
  docIds: string[],
  templateId = "default",
  opts: PollOptions = {},
): Promise<RunOutcome> {
  const jobId = await client.createJob(docIds, templateId);
  const job = await pollJob(client, jobId, opts);
  const results: DocResult[] = [];
  for (const docId of job.report?.processed ?? []) {
    results.push(await client.getResult(docId));
  }
  const quarantined = (job.report?.failures ?? []).map(([docId, reason]) => ({
    docId,
    reason,
  }));
  return { job, results, quarantined };
}
