// Pure view-model builders. The console renders exactly what the server
// sent; nothing here re-derives or infers extraction output.

import type { AnswersPayload, DocResult } from "./types.js";

export interface AnswerRow {
  index: number;
  question: string;
  run1: string;
  run2: string | null;
  agree: boolean | null; // null when run 2 is missing
}

export interface AnswersGrid {
  rows: AnswerRow[];
  mode: "dual" | "single";
  agreementFraction: number | null;
  disagreementCount: number;
  notice: string | null;
}

export function buildAnswersGrid(answers: AnswersPayload): AnswersGrid {
  const run2 = answers.run2 ?? null;
  const dual = run2 !== null && run2.length === answers.run1.length;
  const rows: AnswerRow[] = answers.run1.map((a1, i) => {
    const a2 = dual ? run2![i] : null;
    return {
      index: i + 1,
      question: answers.questions[i] ?? `question ${i + 1}`,
      run1: a1,
      run2: a2,
      agree: a2 === null ? null : a1 === a2,
    };
  });
  const disagreements = rows.filter((r) => r.agree === false).length;
  return {
    rows,
    mode: dual ? "dual" : "single",
    agreementFraction: dual ? (rows.length - disagreements) / rows.length : null,
    disagreementCount: dual ? disagreements : 0,
    notice: dual ? null : "second run unavailable; showing a single run",
  };
}

export type TextSegment = { kind: "plain" | "mask" | "serial"; text: string };

const SERIAL_RE = /^DS-\d{6}$/;

export function anonymizedSegments(text: string): TextSegment[] {
  // split keeps separators so the original spacing survives re-assembly
  const segments: TextSegment[] = [];
  for (const piece of text.split(/(\s+)/)) {
    if (piece === "") continue;
    if (piece === "[REDACTED]") {
      segments.push({ kind: "mask", text: piece });
    } else if (SERIAL_RE.test(piece)) {
      segments.push({ kind: "serial", text: piece });
    } else {
      segments.push({ kind: "plain", text: piece });
    }
  }
  return segments;
}

export interface FieldRow {
  name: string;
  value: string;
  empty: boolean;
}

export function buildFieldRows(result: DocResult): FieldRow[] {
  return Object.entries(result.fields).map(([name, value]) => ({
    name,
    value,
    empty: value === "",
  }));
}

export interface ResultSummaryRow {
  docId: string;
  serial: number | null;
  answered: boolean;
  disagreements: number;
  skippedReason: string | null;
}

export function summarizeResults(results: DocResult[]): ResultSummaryRow[] {
  return results.map((r) => {
    const grid = r.answers ? buildAnswersGrid(r.answers) : null;
    return {
      docId: r.doc_id,
      serial: r.serial ?? null,
      answered: r.answers !== null,
      disagreements: grid ? grid.disagreementCount : 0,
      skippedReason: r.skipped_features ?? null,
    };
  });
}
