// Server payload shapes. The client ignores unknown fields and treats a
// missing required field as a malformed response (surfaced, never guessed).

export interface UploadResponse {
  doc_id: string;
  pages: number;
  tokens: number;
}

export interface JobCreated {
  job_id: string;
}

export type JobStatus = "QUEUED" | "RUNNING" | "DONE" | "FAILED";

export interface JobReport {
  processed: string[];
  failures: [string, string][];
}

export interface JobView {
  job_id: string;
  status: JobStatus;
  progress: number;
  report: JobReport | null;
}

export interface AnswersPayload {
  questions: string[];
  run1: string[];
  run2?: string[] | null;
  agreement?: boolean[] | null;
}

export interface DocResult {
  doc_id: string;
  anonymized_text: string;
  serial?: number | null;
  fields: Record<string, string>;
  answers: AnswersPayload | null;
  skipped_features?: string;
}

export interface TemplatePayload {
  template_id: string;
  version: number;
  preamble: string;
  questions: string[];
  answer_instruction: string;
}

export interface MetricRowPayload {
  accuracy: number;
  sensitivity: number;
  specificity: number;
  precision: number;
  f1: number;
  auc: number;
  flags: string[];
}

export interface ValidationPayload {
  n_documents: number;
  rows: Record<string, MetricRowPayload>;
}
