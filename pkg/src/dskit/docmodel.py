"""Tokenized-document data model: OCR-JSON ingestion and reading-order text.

A document is a flat list of word tokens, each carrying a normalized
bounding box and a page index.  Ingestion accepts the OCR-JSON layout

    {"doc_id": ..., "pages": [{"width_px": ..., "height_px": ...,
                               "words": [{"text": ..., "bbox": [x0, y0, x1, y1]}]}]}

where ``width_px``/``height_px`` are optional and only consulted when the
bounding boxes are pixel-valued (any coordinate > 1), in which case they are
normalized at ingestion.  Token order after parsing is the canonical reading
order: tokens are grouped into lines by vertical overlap (>= 50% of the
smaller glyph height), lines sorted by mean y0, tokens within a line by x0.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Iterable


class MalformedPayload(ValueError):
    """OCR-JSON payload violates the expected schema."""


class EmptyDocument(ValueError):
    """Payload parsed cleanly but contains no tokens."""


class BadBBox(ValueError):
    """Bounding-box coordinates violate 0 <= x0 < x1 <= 1, 0 <= y0 < y1 <= 1."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in page-fraction coordinates."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (0.0 <= self.x0 < self.x1 <= 1.0 and 0.0 <= self.y0 < self.y1 <= 1.0):
            raise BadBBox(f"invalid bbox ({self.x0}, {self.y0}, {self.x1}, {self.y1})")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1


@dataclass(frozen=True)
class Token:
    """One OCR word.  ``token_id`` is the ordinal in document reading order."""

    text: str
    bbox: BBox
    page: int
    token_id: int


@dataclass(frozen=True)
class Document:
    """An immutable tokenized document; safe to share across workers."""

    doc_id: str
    pages: int
    tokens: tuple[Token, ...]


class ClassLabel(enum.IntEnum):
    """Four-class token labeling scheme; OTHER is the only non-masked class."""

    NAME = 0
    PATIENT_ID = 1
    LOCATION = 2
    OTHER = 3


MASKED_CLASSES = (ClassLabel.NAME, ClassLabel.PATIENT_ID, ClassLabel.LOCATION)


def _vertical_overlap(a: BBox, b: BBox) -> float:
    lo = max(a.y0, b.y0)
    hi = min(a.y1, b.y1)
    return max(0.0, hi - lo)


def group_lines(tokens: Iterable[Token]) -> list[list[Token]]:
    """Group tokens of one page into visual lines.

    Two tokens share a line when their y-intervals overlap by at least half
    of the smaller height; the relation is closed transitively (connected
    components).  Lines are returned by ascending mean y0 with tokens sorted
    by x0 within each line.
    """
    toks = list(tokens)
    n = len(toks)
    if n == 0:
        return []
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[rj] = ri

    order = sorted(range(n), key=lambda i: toks[i].bbox.y0)
    for a_pos, i in enumerate(order):
        hi_i = toks[i].bbox
        for j in order[a_pos + 1:]:
            hj = toks[j].bbox
            if hj.y0 >= hi_i.y1:
                break  # sorted by y0: nothing further down can overlap
            ov = _vertical_overlap(hi_i, hj)
            smaller = min(hi_i.y1 - hi_i.y0, hj.y1 - hj.y0)
            if smaller > 0 and ov >= 0.5 * smaller:
                union(i, j)

    groups: dict[int, list[Token]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(toks[i])
    lines = list(groups.values())
    lines.sort(key=lambda line: sum(t.bbox.y0 for t in line) / len(line))
    for line in lines:
        line.sort(key=lambda t: t.bbox.x0)
    return lines


def _reading_order(raw: list[tuple[str, BBox, int]]) -> list[tuple[str, BBox, int]]:
    """Sort (text, bbox, page) triples into canonical reading order."""
    ordered: list[tuple[str, BBox, int]] = []
    pages = sorted({page for _, _, page in raw})
    for page in pages:
        page_toks = [Token(text, bbox, page, i)
                     for i, (text, bbox, p) in enumerate(raw) if p == page]
        for line in group_lines(page_toks):
            ordered.extend((t.text, t.bbox, t.page) for t in line)
    return ordered


def parse_ocr_document(payload: bytes | str) -> Document:
    """Parse an OCR-JSON payload into a ``Document`` in reading order.

    Raises
    ------
    MalformedPayload
        On schema violations (bad JSON, missing keys, empty or multi-line
        token text, non-numeric coordinates).
    EmptyDocument
        When the payload holds no tokens at all.
    BadBBox
        When a normalized coordinate violates the box invariant; the message
        carries the offending word's page and index.
    """
    if isinstance(payload, bytes):
        try:
            payload = payload.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedPayload(f"payload is not UTF-8: {exc}") from exc
    try:
        obj = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise MalformedPayload(f"payload is not valid JSON: {exc}") from exc

    if not isinstance(obj, dict):
        raise MalformedPayload("top-level value must be an object")
    doc_id = obj.get("doc_id")
    pages = obj.get("pages")
    if not isinstance(doc_id, str) or not doc_id:
        raise MalformedPayload("doc_id must be a non-empty string")
    if not isinstance(pages, list):
        raise MalformedPayload("pages must be a list")
    if not pages:
        raise EmptyDocument(f"document {doc_id!r} has no pages")

    raw: list[tuple[str, BBox, int]] = []
    for page_idx, page in enumerate(pages):
        if not isinstance(page, dict) or not isinstance(page.get("words"), list):
            raise MalformedPayload(f"page {page_idx} must be an object with a words list")
        width = page.get("width_px")
        height = page.get("height_px")
        for word_idx, word in enumerate(page["words"]):
            where = f"page {page_idx}, word {word_idx}"
            if not isinstance(word, dict):
                raise MalformedPayload(f"{where}: word must be an object")
            text = word.get("text")
            if not isinstance(text, str) or not text:
                raise MalformedPayload(f"{where}: text must be a non-empty string")
            if "\n" in text or "\r" in text:
                raise MalformedPayload(f"{where}: text contains a line break")
            coords = word.get("bbox")
            if (not isinstance(coords, (list, tuple)) or len(coords) != 4
                    or not all(isinstance(c, (int, float)) for c in coords)):
                raise MalformedPayload(f"{where}: bbox must be four numbers")
            x0, y0, x1, y1 = (float(c) for c in coords)
            if max(x0, y0, x1, y1) > 1.0:
                # pixel-valued coordinates: normalize by the page dimensions
                if not (isinstance(width, (int, float)) and width > 0
                        and isinstance(height, (int, float)) and height > 0):
                    raise MalformedPayload(
                        f"{where}: pixel bbox but width_px/height_px missing")
                x0, x1 = x0 / width, x1 / width
                y0, y1 = y0 / height, y1 / height
            try:
                bbox = BBox(x0, y0, x1, y1)
            except BadBBox as exc:
                raise BadBBox(f"{where}: {exc}") from exc
            raw.append((text, bbox, page_idx))

    if not raw:
        raise EmptyDocument(f"document {doc_id!r} has no tokens")

    ordered = _reading_order(raw)
    tokens = tuple(Token(text, bbox, page, i)
                   for i, (text, bbox, page) in enumerate(ordered))
    return Document(doc_id=doc_id, pages=len(pages), tokens=tokens)


def serialize_document(doc: Document) -> bytes:
    """Serialize a ``Document`` back to OCR-JSON (UTF-8).

    ``parse_ocr_document(serialize_document(doc)) == doc`` for every valid
    document.  Page pixel dimensions are not retained by ``Document`` and are
    omitted; boxes are already normalized.
    """
    pages: list[dict] = [{"words": []} for _ in range(doc.pages)]
    for tok in doc.tokens:
        b = tok.bbox
        pages[tok.page]["words"].append(
            {"text": tok.text, "bbox": [b.x0, b.y0, b.x1, b.y1]})
    obj = {"doc_id": doc.doc_id, "pages": pages}
    return json.dumps(obj, ensure_ascii=False).encode("utf-8")


def render_text(doc: Document) -> str:
    """Render reading-order plain text: spaces within a line, newlines between.

    Deterministic for a fixed document: line grouping replays the rule used
    at parse time, so the output is stable however the document was built.
    """
    out_lines: list[str] = []
    for page in range(doc.pages):
        page_tokens = [t for t in doc.tokens if t.page == page]
        for line in group_lines(page_tokens):
            out_lines.append(" ".join(t.text for t in line))
    return "\n".join(out_lines)
