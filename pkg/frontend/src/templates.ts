// Prompt-template editing. The default template is read-only server-side,
// so editing always goes through clone-to-edit; drafts track a dirty flag
// and the server version they were based on, and the server rejects stale
// saves with a 409 the caller surfaces as a reload prompt.

import type { ApiClient } from "./api.js";
import type { TemplatePayload } from "./types.js";

export interface TemplateDraft {
  templateId: string;
  preamble: string;
  questions: string[];
  answerInstruction: string;
  baseVersion: number | null; // null until first saved
  dirty: boolean;
}

export function cloneToEdit(
  source: TemplatePayload,
  newId: string,
): TemplateDraft {
  return {
    templateId: newId,
    preamble: source.preamble,
    questions: [...source.questions],
    answerInstruction: source.answer_instruction,
    baseVersion: null,
    dirty: true,
  };
}

export function draftFromSaved(saved: TemplatePayload): TemplateDraft {
  return {
    templateId: saved.template_id,
    preamble: saved.preamble,
    questions: [...saved.questions],
    answerInstruction: saved.answer_instruction,
    baseVersion: saved.version,
    dirty: false,
  };
}

export function withQuestion(draft: TemplateDraft, question: string): TemplateDraft {
  return { ...draft, questions: [...draft.questions, question], dirty: true };
}

export function withoutQuestion(draft: TemplateDraft, index: number): TemplateDraft {
  return {
    ...draft,
    questions: draft.questions.filter((_, i) => i !== index),
    dirty: true,
  };
}

export function withEdits(
  draft: TemplateDraft,
  edits: Partial<Pick<TemplateDraft, "preamble" | "answerInstruction">>,
): TemplateDraft {
  return { ...draft, ...edits, dirty: true };
}

export function validateDraft(draft: TemplateDraft): string[] {
  const problems: string[] = [];
  if (draft.questions.length === 0) {
    problems.push("a template needs at least one question");
  }
  if (draft.questions.some((q) => q.trim() === "")) {
    problems.push("questions must be non-empty");
  }
  if (draft.preamble.trim() === "") {
    problems.push("preamble must be non-empty");
  }
  if (draft.answerInstruction.trim() === "") {
    problems.push("answer instruction must be non-empty");
  }
  if (draft.templateId === "default") {
    problems.push("the default template is read-only; clone it first");
  }
  return problems;
}

export function canSubmit(draft: TemplateDraft): boolean {
  return validateDraft(draft).length === 0;
}

export async function saveDraft(
  client: ApiClient,
  draft: TemplateDraft,
): Promise<TemplateDraft> {
  const problems = validateDraft(draft);
  if (problems.length > 0) {
    throw new Error(problems.join("; "));
  }
  const saved = await client.putTemplate(draft.templateId, {
    preamble: draft.preamble,
    questions: draft.questions,
    answer_instruction: draft.answerInstruction,
    ...(draft.baseVersion !== null ? { version: draft.baseVersion } : {}),
  });
  return { ...draft, baseVersion: saved.version, dirty: false };
}
