"""Regular-field extraction from rendered text via heading patterns and
stop-keywords.

A field's value is the text strictly between the first qualifying occurrence
of one of its heading patterns and the next qualifying stop-keyword
occurrence (or end of text).  An occurrence qualifies when it starts a line,
follows a sentence boundary, or is printed in ALL CAPS; this keeps prose
mentions such as "a long past history of" from being mistaken for section
headings while still splitting headings that share a line.  Whitespace
inside a value is collapsed (newlines become spaces) and a leading colon is
dropped.  Segments containing an exclusion phrase are discarded.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence


class UnknownField(KeyError):
    pass


@dataclass(frozen=True)
class FieldSpec:
    field_name: str
    patterns: tuple[str, ...]   # heading variants, matched case-insensitively
    multi_valued: bool = False


@dataclass(frozen=True)
class HeadingConfig:
    fields: tuple[FieldSpec, ...]
    stop_keywords: tuple[str, ...] = ()
    exclusion_phrases: tuple[str, ...] = ()

    def __post_init__(self):
        names = [f.field_name for f in self.fields]
        if len(set(names)) != len(names):
            raise ValueError("field names must be unique")
        all_patterns = tuple(p for f in self.fields for p in f.patterns)
        stops = tuple(self.stop_keywords) if self.stop_keywords else all_patterns
        lower = {s.lower() for s in stops}
        missing = [p for p in all_patterns if p.lower() not in lower]
        if missing:
            raise ValueError(f"stop_keywords must cover heading patterns; missing {missing}")
        object.__setattr__(self, "stop_keywords", stops)
        object.__setattr__(self, "exclusion_phrases", tuple(self.exclusion_phrases))

    @property
    def field_names(self) -> tuple[str, ...]:
        return tuple(f.field_name for f in self.fields)


@dataclass(frozen=True)
class ExtractionRecord:
    doc_id: str
    values: tuple[tuple[str, str], ...]  # (field_name, value) in config order

    def as_dict(self) -> dict[str, str]:
        return dict(self.values)

    def __getitem__(self, field_name: str) -> str:
        for name, value in self.values:
            if name == field_name:
                return value
        raise UnknownField(field_name)


def _qualifying_occurrences(text: str, patterns: Sequence[str]) -> list[tuple[int, int]]:
    """Sorted (start, end) spans where any pattern occurs as a heading.

    Longer patterns win at a shared start position so that e.g. a bare
    prefix pattern cannot shadow a more specific heading.
    """
    spans: dict[int, tuple[int, int]] = {}
    for pat in sorted(set(patterns), key=len):
        for mo in re.finditer(re.escape(pat), text, flags=re.IGNORECASE):
            s, e = mo.span()
            matched = text[s:e]
            at_line_start = s == 0 or text[s - 1] == "\n"
            after_sentence = s >= 2 and text[s - 2: s] in (". ", "; ")
            all_caps = matched == matched.upper() and any(ch.isalpha() for ch in matched)
            if at_line_start or after_sentence or all_caps:
                prev = spans.get(s)
                if prev is None or e > prev[1]:
                    spans[s] = (s, e)
    return sorted(spans.values())


def _clean_segment(seg: str) -> str:
    seg = re.sub(r"\s+", " ", seg).strip()
    if seg.startswith(":"):
        seg = seg[1:].strip()
    return seg


def extract_fields(text: str, cfg: HeadingConfig) -> ExtractionRecord:
    """Extract every configured field from one document's rendered text.

    Absence is data: a field whose heading never occurs yields "".  The
    result is passed through ``normalize_record``, so multi-valued fields
    come back joined with "; ".
    """
    boundaries = _qualifying_occurrences(text, cfg.stop_keywords)
    raw: dict[str, list[str]] = {}
    for spec in cfg.fields:
        heads = _qualifying_occurrences(text, spec.patterns)
        segments: list[str] = []
        if heads:
            # first-match wins; repeats of a heading are anomalous in the
            # standard format
            _, head_end = heads[0]
            next_starts = [s for s, _ in boundaries if s >= head_end]
            seg_end = next_starts[0] if next_starts else len(text)
            seg = _clean_segment(text[head_end:seg_end])
            low = seg.lower()
            if seg and not any(p.lower() in low for p in cfg.exclusion_phrases):
                segments.append(seg)
        raw[spec.field_name] = segments
    return normalize_record(raw, cfg, doc_id="")


def normalize_record(raw: Mapping[str, Sequence[str]], cfg: HeadingConfig,
                     doc_id: str = "") -> ExtractionRecord:
    """Reconcile possibly-ragged per-field lists into one flat record.

    Multi-valued fields join their items with "; "; single-valued fields
    keep the first item.  Fields absent from ``raw`` come out empty; a key
    outside the configured field set raises ``UnknownField``.
    """
    known = set(cfg.field_names)
    for key in raw:
        if key not in known:
            raise UnknownField(key)
    values = []
    for spec in cfg.fields:
        items = [s for s in raw.get(spec.field_name, []) if s]
        if spec.multi_valued:
            value = "; ".join(items)
        else:
            value = items[0] if items else ""
        values.append((spec.field_name, value))
    return ExtractionRecord(doc_id=doc_id, values=tuple(values))


def records_to_csv(records: Sequence[ExtractionRecord],
                   cfg: HeadingConfig) -> bytes:
    """RFC 4180 CSV (UTF-8): header row is doc_id plus the configured fields."""
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
    writer.writerow(("doc_id",) + cfg.field_names)
    for rec in records:
        d = rec.as_dict()
        writer.writerow([rec.doc_id] + [d[name] for name in cfg.field_names])
    return buf.getvalue().encode("utf-8")


def csv_to_records(payload: bytes, cfg: HeadingConfig) -> list[ExtractionRecord]:
    """Inverse of ``records_to_csv`` for round-trip checks and the validate stage."""
    reader = csv.reader(io.StringIO(payload.decode("utf-8"), newline=""))
    rows = list(reader)
    header = rows[0]
    if tuple(header) != ("doc_id",) + cfg.field_names:
        raise ValueError("CSV header does not match the heading config")
    out = []
    for row in rows[1:]:
        values = tuple(zip(cfg.field_names, row[1:]))
        out.append(ExtractionRecord(doc_id=row[0], values=values))
    return out


# --- declarative config -------------------------------------------------------

def _config_from_obj(data: dict) -> HeadingConfig:
    fields = tuple(FieldSpec(field_name=o["field_name"],
                             patterns=tuple(o["patterns"]),
                             multi_valued=bool(o.get("multi_valued", False)))
                   for o in data["fields"])
    return HeadingConfig(fields=fields,
                         stop_keywords=tuple(data.get("stop_keywords", ())),
                         exclusion_phrases=tuple(data.get("exclusion_phrases", ())))


def load_heading_config(path: str | Path) -> HeadingConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return _config_from_obj(json.load(fh))


def default_heading_config() -> HeadingConfig:
    """The shipped standard-format field set (9 regular fields plus the
    free-text course section)."""
    from importlib.resources import files

    path = files("dskit").joinpath("data/default_headings.json")
    with path.open("r", encoding="utf-8") as fh:
        return _config_from_obj(json.load(fh))
