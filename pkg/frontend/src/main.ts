// DOM bootstrap: wires the page controls to the typed client. All logic
// lives in the imported modules; this file only moves strings in and out
// of the document.

import { ApiClient, ApiError } from "./api.js";
import { runJob, uploadFiles, type NamedFile } from "./jobs.js";
import {
  anonymizedSegments,
  buildAnswersGrid,
  buildFieldRows,
  summarizeResults,
} from "./results.js";
import {
  renderAnonymizedText,
  renderAnswersGrid,
  renderFieldsTable,
  renderJobProgress,
  renderSummaryRows,
  escapeHtml,
} from "./render.js";
import {
  cloneToEdit,
  canSubmit,
  saveDraft,
  validateDraft,
  withEdits,
  type TemplateDraft,
} from "./templates.js";
import type { DocResult } from "./types.js";

const client = new ApiClient("");

const el = <T extends HTMLElement>(id: string): T => {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
};

let uploadedDocIds: string[] = [];
let lastResults: DocResult[] = [];
let draft: TemplateDraft | null = null;
let activeTemplateId = "default";

function setStatus(text: string, isError = false) {
  const node = el<HTMLParagraphElement>("status");
  node.textContent = text;
  node.className = isError ? "error" : "";
}

async function onUpload() {
  const input = el<HTMLInputElement>("file-input");
  const files: NamedFile[] = [];
  for (const file of Array.from(input.files ?? [])) {
    files.push({ name: file.name, content: await file.text() });
  }
  if (files.length === 0) {
    setStatus("select at least one OCR-JSON file", true);
    return;
  }
  const outcome = await uploadFiles(client, files);
  uploadedDocIds = outcome.docIds;
  const failed = outcome.failures
    .map((f) => `${f.name}: ${f.error}`)
    .join("; ");
  setStatus(
    `uploaded ${outcome.docIds.length} document(s)` +
      (failed ? `; rejected ${failed}` : ""),
    outcome.failures.length > 0,
  );
}

async function onRun() {
  if (uploadedDocIds.length === 0) {
    setStatus("upload documents first", true);
    return;
  }
  const progress = el<HTMLDivElement>("progress");
  try {
    const outcome = await runJob(client, uploadedDocIds, activeTemplateId, {
      intervalMs: 1000,
      onProgress: (job) => {
        progress.innerHTML = renderJobProgress(job);
      },
    });
    lastResults = outcome.results;
    el<HTMLDivElement>("summary").innerHTML = renderSummaryRows(
      summarizeResults(outcome.results),
      outcome.quarantined,
    );
    setStatus(
      `job ${outcome.job.job_id} ${outcome.job.status}: ` +
        `${outcome.results.length} result(s), ${outcome.quarantined.length} quarantined`,
    );
  } catch (err) {
    setStatus(err instanceof ApiError ? err.message : String(err), true);
  }
}

function showResult(docId: string) {
  const result = lastResults.find((r) => r.doc_id === docId);
  if (!result) return;
  el<HTMLDivElement>("anon-pane").innerHTML = renderAnonymizedText(
    anonymizedSegments(result.anonymized_text),
  );
  el<HTMLDivElement>("fields-pane").innerHTML = renderFieldsTable(
    buildFieldRows(result),
  );
  el<HTMLDivElement>("answers-pane").innerHTML = result.answers
    ? renderAnswersGrid(buildAnswersGrid(result.answers))
    : `<p class="notice">${escapeHtml(result.skipped_features ?? "no answers")}</p>`;
}

async function onCloneTemplate() {
  const source = await client.getTemplate(activeTemplateId);
  const newId = el<HTMLInputElement>("template-id").value.trim();
  if (!newId) {
    setStatus("give the clone a template id", true);
    return;
  }
  draft = cloneToEdit(source, newId);
  el<HTMLTextAreaElement>("template-questions").value =
    draft.questions.join("\n");
  el<HTMLTextAreaElement>("template-preamble").value = draft.preamble;
  refreshTemplateControls();
}

function readDraftFromForm(): TemplateDraft | null {
  if (!draft) return null;
  const questions = el<HTMLTextAreaElement>("template-questions")
    .value.split("\n")
    .map((q) => q.trim())
    .filter((q) => q !== "");
  return withEdits(
    { ...draft, questions, dirty: true },
    { preamble: el<HTMLTextAreaElement>("template-preamble").value },
  );
}

function refreshTemplateControls() {
  const current = readDraftFromForm();
  const button = el<HTMLButtonElement>("template-save");
  button.disabled = current === null || !canSubmit(current);
  el<HTMLParagraphElement>("template-problems").textContent = current
    ? validateDraft(current).join("; ")
    : "";
}

async function onSaveTemplate() {
  const current = readDraftFromForm();
  if (!current || !canSubmit(current)) return;
  try {
    draft = await saveDraft(client, current);
    activeTemplateId = draft.templateId;
    setStatus(
      `template ${draft.templateId} saved (v${draft.baseVersion}); ` +
        `runs now use it`,
    );
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      setStatus(`${err.detail} - reload the template and reapply your edits`, true);
    } else {
      setStatus(String(err), true);
    }
  }
}

export function bootstrap() {
  el<HTMLButtonElement>("upload-btn").addEventListener("click", onUpload);
  el<HTMLButtonElement>("run-btn").addEventListener("click", onRun);
  el<HTMLButtonElement>("template-clone").addEventListener("click", onCloneTemplate);
  el<HTMLButtonElement>("template-save").addEventListener("click", onSaveTemplate);
  for (const id of ["template-questions", "template-preamble"]) {
    el<HTMLTextAreaElement>(id).addEventListener("input", refreshTemplateControls);
  }
  el<HTMLDivElement>("summary").addEventListener("click", (event) => {
    const row = (event.target as HTMLElement).closest<HTMLElement>(".result-row");
    if (row?.dataset.doc) showResult(row.dataset.doc);
  });
  void client.health().then((ok) => {
    if (!ok) setStatus("service unreachable", true);
  });
}

if (typeof document !== "undefined" && document.getElementById("upload-btn")) {
  bootstrap();
}
