"""Masking of predicted PHI tokens and the persistent patient-serial registry.

NAME and LOCATION tokens are replaced by a literal mask (layout preserved so
later heading scans still work); runs of consecutive PATIENT_ID tokens are
concatenated into a registry key, the first token of the run becomes the
serial placeholder and continuation tokens are dropped; OTHER tokens pass
through byte-identical.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .docmodel import BBox, ClassLabel, Document, Token
from .lfkit import normalize_token_text

MASK = "[REDACTED]"
SERIAL_PREFIX = "DS-"


class LabelLengthMismatch(ValueError):
    pass


def serial_placeholder(serial: int) -> str:
    return f"{SERIAL_PREFIX}{serial:06d}"


class SerialRegistry:
    """Injective patient-id -> serial map, assigned in first-seen order from 1.

    When backed by a file, assignments are appended immediately
    (``serial<TAB>patient_id`` lines) so re-runs see stable serials.  All
    access is serialized through one lock; documents may be anonymized in
    parallel as long as they share a single registry instance.
    """

    def __init__(self, path: str | Path | None = None):
        self._lock = threading.Lock()
        self._serials: dict[str, int] = {}
        self._path = Path(path) if path is not None else None
        if self._path is not None:
            self._path.parent.mkdir(parents=True, exist_ok=True)
        if self._path is not None and self._path.exists():
            for line in self._path.read_text(encoding="utf-8").splitlines():
                if not line:
                    continue
                serial_s, _, pid = line.partition("\t")
                self._serials[pid] = int(serial_s)

    def lookup_or_assign(self, patient_id: str) -> int:
        with self._lock:
            serial = self._serials.get(patient_id)
            if serial is None:
                serial = len(self._serials) + 1
                self._serials[patient_id] = serial
                if self._path is not None:
                    with open(self._path, "a", encoding="utf-8") as fh:
                        fh.write(f"{serial}\t{patient_id}\n")
            return serial

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return dict(self._serials)

    def __len__(self) -> int:
        with self._lock:
            return len(self._serials)


@dataclass(frozen=True)
class AuditEntry:
    token_id: int
    label: ClassLabel
    action: str  # "masked", "serialized", or "dropped"


@dataclass
class AnonymizedDocument:
    doc_id: str
    serial: int | None
    pages: int
    tokens: list[tuple[str, BBox, int]]  # (text, bbox, page)
    audit: list[AuditEntry] = field(default_factory=list)

    def to_document(self) -> Document:
        """Rebuild a Document (fresh token ids) for downstream stages."""
        toks = tuple(Token(text, bbox, page, i)
                     for i, (text, bbox, page) in enumerate(self.tokens))
        return Document(doc_id=self.doc_id, pages=self.pages, tokens=toks)


def anonymize(doc: Document, labels: Sequence[ClassLabel],
              reg: SerialRegistry) -> AnonymizedDocument:
    """Apply predicted labels to one document.

    The registry is consulted once per PATIENT_ID run with the run's
    concatenated token text as key.  The document's ``serial`` is the serial
    of its first run (None when the document holds no PATIENT_ID token).
    """
    if len(labels) != len(doc.tokens):
        raise LabelLengthMismatch(
            f"{len(labels)} labels for {len(doc.tokens)} tokens")

    out: list[tuple[str, BBox, int]] = []
    audit: list[AuditEntry] = []
    doc_serial: int | None = None
    i = 0
    n = len(doc.tokens)
    while i < n:
        tok = doc.tokens[i]
        label = ClassLabel(labels[i])
        if label == ClassLabel.OTHER:
            out.append((tok.text, tok.bbox, tok.page))
            i += 1
        elif label in (ClassLabel.NAME, ClassLabel.LOCATION):
            out.append((MASK, tok.bbox, tok.page))
            audit.append(AuditEntry(tok.token_id, label, "masked"))
            i += 1
        else:  # PATIENT_ID run
            j = i
            while j < n and ClassLabel(labels[j]) == ClassLabel.PATIENT_ID:
                j += 1
            key = "".join(doc.tokens[t].text for t in range(i, j))
            serial = reg.lookup_or_assign(key)
            if doc_serial is None:
                doc_serial = serial
            out.append((serial_placeholder(serial), tok.bbox, tok.page))
            audit.append(AuditEntry(tok.token_id, label, "serialized"))
            for t in range(i + 1, j):
                audit.append(AuditEntry(doc.tokens[t].token_id,
                                        ClassLabel.PATIENT_ID, "dropped"))
            i = j

    return AnonymizedDocument(doc_id=doc.doc_id, serial=doc_serial,
                              pages=doc.pages, tokens=out, audit=audit)


def verify_clean(anon: AnonymizedDocument,
                 phi_ground_truth: Iterable[str]) -> dict:
    """Report surviving tokens whose normalized text is a known PHI string.

    An empty ``leaks`` list means the document is clean against the given
    ground truth.
    """
    phi = {normalize_token_text(s) for s in phi_ground_truth}
    leaks = [(i, text) for i, (text, _bbox, _page) in enumerate(anon.tokens)
             if normalize_token_text(text) in phi]
    return {"leaks": leaks}
