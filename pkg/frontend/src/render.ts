// HTML string rendering of the view models. Kept DOM-free so the whole
// presentation layer is testable in node; main.ts assigns the strings to
// innerHTML of the page containers.

import type { AnswersGrid, FieldRow, ResultSummaryRow, TextSegment } from "./results.js";
import type { JobView } from "./types.js";

export function escapeHtml(s: string): string {
  return s
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function renderAnonymizedText(segments: TextSegment[]): string {
  const body = segments
    .map((seg) => {
      const text = escapeHtml(seg.text);
      if (seg.kind === "mask") return `<span class="mask">${text}</span>`;
      if (seg.kind === "serial") return `<span class="serial">${text}</span>`;
      return text;
    })
    .join("");
  return `<pre class="anon-text">${body}</pre>`;
}

export function renderFieldsTable(rows: FieldRow[]): string {
  const body = rows
    .map(
      (r) =>
        `<tr${r.empty ? ' class="empty-field"' : ""}>` +
        `<th>${escapeHtml(r.name)}</th>` +
        `<td>${r.empty ? "<em>(empty)</em>" : escapeHtml(r.value)}</td></tr>`,
    )
    .join("");
  return `<table class="fields">${body}</table>`;
}

export function renderAnswersGrid(grid: AnswersGrid): string {
  const head =
    grid.mode === "dual"
      ? "<tr><th>#</th><th>question</th><th>run 1</th><th>run 2</th></tr>"
      : "<tr><th>#</th><th>question</th><th>run 1</th></tr>";
  const body = grid.rows
    .map((r) => {
      const cls = r.agree === false ? ' class="disagree"' : "";
      const run2 = grid.mode === "dual" ? `<td>${escapeHtml(r.run2 ?? "")}</td>` : "";
      return (
        `<tr${cls}><td>${r.index}</td>` +
        `<td>${escapeHtml(r.question)}</td>` +
        `<td>${escapeHtml(r.run1)}</td>${run2}</tr>`
      );
    })
    .join("");
  const note =
    grid.mode === "dual"
      ? `<p class="agreement">between-run agreement: ${(
          (grid.agreementFraction ?? 0) * 100
        ).toFixed(0)}%</p>`
      : `<p class="notice">${escapeHtml(grid.notice ?? "")}</p>`;
  return `<table class="answers">${head}${body}</table>${note}`;
}

export function renderJobProgress(job: JobView): string {
  const pct = Math.round(job.progress * 100);
  return (
    `<div class="job-status" data-status="${job.status}">` +
    `<progress max="100" value="${pct}"></progress> ` +
    `<span>${job.status} ${pct}%</span></div>`
  );
}

export function renderSummaryRows(
  rows: ResultSummaryRow[],
  quarantined: { docId: string; reason: string }[],
): string {
  const done = rows
    .map((r) => {
      const badge = r.answered
        ? r.disagreements > 0
          ? `<span class="badge warn">${r.disagreements} disagreement(s)</span>`
          : '<span class="badge ok">deterministic</span>'
        : `<span class="badge skip">${escapeHtml(r.skippedReason ?? "skipped")}</span>`;
      const serial = r.serial === null ? "" : ` (DS-${String(r.serial).padStart(6, "0")})`;
      return `<li class="result-row" data-doc="${escapeHtml(r.docId)}">` +
        `${escapeHtml(r.docId)}${serial} ${badge}</li>`;
    })
    .join("");
  const bad = quarantined
    .map(
      (q) =>
        `<li class="result-row quarantine" data-doc="${escapeHtml(q.docId)}">` +
        `${escapeHtml(q.docId)} <span class="badge quarantine">${escapeHtml(
          q.reason,
        )}</span></li>`,
    )
    .join("");
  return `<ul class="results">${done}${bad}</ul>`;
}
