"""Labeling functions: text triggers, positional rules, trigger-relative
adjacency, and assembly of the per-token vote matrix.

A labeling function votes exactly one target class or abstains, token by
token.  When several constraint kinds are present they apply conjunctively:
a token gets the vote only if it lies in a trigger match (when triggers are
configured), its box center falls in the region (when a position rule is
configured), and it sits within ``max_gap`` tokens of an anchor occurrence
(when an adjacency rule is configured).

Trigger matching is case-insensitive on token text with trailing ``.,:;``
stripped; multi-word triggers must match consecutive tokens on one visual
line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .docmodel import BBox, ClassLabel, Document, Token, group_lines

ABSTAIN = -1

_TRAILING_PUNCT = ".,:;"


class DuplicateLfId(ValueError):
    """Two labeling functions in one set share an lf_id."""


class DanglingGoldReference(ValueError):
    """A gold label points at a document or token that is not in the corpus."""


def normalize_token_text(text: str) -> str:
    return text.rstrip(_TRAILING_PUNCT).casefold()


def _trigger_words(trigger: str) -> tuple[str, ...]:
    words = tuple(normalize_token_text(w) for w in trigger.split())
    return tuple(w for w in words if w)


@dataclass(frozen=True)
class PositionRule:
    """Token fires only if its bbox center lies inside ``region`` (and on
    ``page``, when given)."""

    region: BBox
    page: int | None = None

    def admits(self, token: Token) -> bool:
        if self.page is not None and token.page != self.page:
            return False
        cx, cy = token.bbox.center
        return self.region.contains(cx, cy)


NEXT_ON_LINE = "NEXT_ON_LINE"
BELOW = "BELOW"


@dataclass(frozen=True)
class AdjacencyRule:
    """Fire on tokens near an anchor occurrence.

    ``NEXT_ON_LINE`` admits the ``max_gap`` tokens following the anchor on
    the same line.  ``BELOW`` admits the first ``max_gap`` tokens on the
    next line down (same page) whose x-interval overlaps the anchor's.
    """

    anchor: str
    relation: str = NEXT_ON_LINE
    max_gap: int = 1

    def __post_init__(self):
        if not self.anchor.strip():
            raise ValueError("adjacency anchor must be non-empty")
        if self.relation not in (NEXT_ON_LINE, BELOW):
            raise ValueError(f"unknown adjacency relation {self.relation!r}")
        if self.max_gap < 1:
            raise ValueError("max_gap must be >= 1")


@dataclass(frozen=True)
class LabelingFunction:
    """One heuristic vote source.

    At least one of triggers / position / adjacency must be present; an
    unconstrained LF would fire on every token of every document.
    """

    lf_id: str
    target: ClassLabel
    triggers: tuple[str, ...] = ()
    position: PositionRule | None = None
    adjacency: AdjacencyRule | None = None

    def __post_init__(self):
        if not self.lf_id:
            raise ValueError("lf_id must be non-empty")
        if not self.triggers and self.position is None and self.adjacency is None:
            raise ValueError(
                f"LF {self.lf_id!r} has no triggers, position rule, or adjacency rule")
        object.__setattr__(self, "triggers", tuple(self.triggers))
        for t in self.triggers:
            if not _trigger_words(t):
                raise ValueError(f"LF {self.lf_id!r} has an empty trigger {t!r}")


@dataclass(frozen=True)
class LFSet:
    """An ordered collection of labeling functions with unique ids."""

    lfs: tuple[LabelingFunction, ...]

    def __post_init__(self):
        object.__setattr__(self, "lfs", tuple(self.lfs))
        seen: set[str] = set()
        for lf in self.lfs:
            if lf.lf_id in seen:
                raise DuplicateLfId(f"duplicate lf_id {lf.lf_id!r}")
            seen.add(lf.lf_id)

    def __len__(self) -> int:
        return len(self.lfs)

    def __iter__(self):
        return iter(self.lfs)

    @property
    def lf_ids(self) -> tuple[str, ...]:
        return tuple(lf.lf_id for lf in self.lfs)


def _line_layout(doc: Document) -> tuple[list[list[int]], dict[int, tuple[int, int]]]:
    """Visual lines as token_id lists, plus token_id -> (line index, slot)."""
    lines: list[list[int]] = []
    locate: dict[int, tuple[int, int]] = {}
    for page in range(doc.pages):
        page_tokens = [t for t in doc.tokens if t.page == page]
        for line in group_lines(page_tokens):
            idx = len(lines)
            lines.append([t.token_id for t in line])
            for slot, t in enumerate(line):
                locate[t.token_id] = (idx, slot)
    return lines, locate


def _match_spans(doc: Document, lines: list[list[int]],
                 patterns: Sequence[tuple[str, ...]]) -> set[int]:
    """Token ids covered by any multi-word pattern matched within a line."""
    hit: set[int] = set()
    norm = {t.token_id: normalize_token_text(t.text) for t in doc.tokens}
    for line in lines:
        for start in range(len(line)):
            for pat in patterns:
                end = start + len(pat)
                if end > len(line):
                    continue
                if all(norm[line[start + k]] == pat[k] for k in range(len(pat))):
                    hit.update(line[start:end])
    return hit


def _anchor_spans(doc: Document, lines: list[list[int]],
                  anchor_words: tuple[str, ...]) -> list[tuple[int, int, int]]:
    """(line index, start slot, end slot) of each anchor occurrence."""
    norm = {t.token_id: normalize_token_text(t.text) for t in doc.tokens}
    spans = []
    for li, line in enumerate(lines):
        for start in range(len(line) - len(anchor_words) + 1):
            if all(norm[line[start + k]] == anchor_words[k]
                   for k in range(len(anchor_words))):
                spans.append((li, start, start + len(anchor_words) - 1))
    return spans


def _adjacency_token_ids(doc: Document, rule: AdjacencyRule,
                         lines: list[list[int]]) -> set[int]:
    anchor_words = _trigger_words(rule.anchor)
    tok_by_id = {t.token_id: t for t in doc.tokens}
    admitted: set[int] = set()
    for li, _start, end in _anchor_spans(doc, lines, anchor_words):
        if rule.relation == NEXT_ON_LINE:
            line = lines[li]
            admitted.update(line[end + 1: end + 1 + rule.max_gap])
        else:  # BELOW
            if li + 1 >= len(lines):
                continue
            anchor_tok = tok_by_id[lines[li][_start]]
            last_tok = tok_by_id[lines[li][end]]
            if li + 1 < len(lines) and lines[li + 1]:
                below = lines[li + 1]
                if tok_by_id[below[0]].page != anchor_tok.page:
                    continue
                x0, x1 = anchor_tok.bbox.x0, last_tok.bbox.x1
                overlapping = [tid for tid in below
                               if tok_by_id[tid].bbox.x1 > x0
                               and tok_by_id[tid].bbox.x0 < x1]
                admitted.update(overlapping[: rule.max_gap])
    return admitted


def apply_lf(lf: LabelingFunction, doc: Document) -> np.ndarray:
    """Vote vector for one LF over one document.

    Returns an int array of length ``len(doc.tokens)`` holding the target
    class index where every configured constraint holds and ``ABSTAIN``
    elsewhere.  An LF that matches nothing yields all-ABSTAIN.
    """
    n = len(doc.tokens)
    votes = np.full(n, ABSTAIN, dtype=np.int8)
    lines, _ = _line_layout(doc)

    eligible: set[int] | None = None
    if lf.triggers:
        patterns = [_trigger_words(t) for t in lf.triggers]
        eligible = _match_spans(doc, lines, patterns)
    if lf.adjacency is not None:
        adj = _adjacency_token_ids(doc, lf.adjacency, lines)
        eligible = adj if eligible is None else (eligible & adj)

    for tok in doc.tokens:
        if eligible is not None and tok.token_id not in eligible:
            continue
        if lf.position is not None and not lf.position.admits(tok):
            continue
        if eligible is None and lf.position is None:
            continue  # unreachable by construction invariant
        votes[tok.token_id] = int(lf.target)
    return votes


@dataclass
class LabelMatrix:
    """Per-token LF votes for a corpus, with optional gold labels.

    ``votes`` is (n_rows, n_lfs) with ``ABSTAIN`` = -1; ``gold`` is
    (n_rows,) with -1 meaning unlabeled.  ``row_index`` maps each row to its
    (doc_id, token_id).
    """

    lf_ids: tuple[str, ...]
    doc_ids: tuple[str, ...]
    row_index: tuple[tuple[str, int], ...]
    votes: np.ndarray
    gold: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.votes = np.asarray(self.votes, dtype=np.int8)
        if self.votes.ndim != 2 or self.votes.shape[0] != len(self.row_index):
            raise ValueError("votes must be (n_rows, n_lfs)")
        if self.votes.shape[1] != len(self.lf_ids):
            raise ValueError("votes column count must match lf_ids")
        if self.gold is None:
            self.gold = np.full(self.votes.shape[0], -1, dtype=np.int8)
        self.gold = np.asarray(self.gold, dtype=np.int8)
        if self.gold.shape != (self.votes.shape[0],):
            raise ValueError("gold must be (n_rows,)")
        valid = set(int(c) for c in ClassLabel) | {-1}
        if not set(np.unique(self.gold)).issubset(valid):
            raise ValueError("gold holds an invalid class label")

    @property
    def n_rows(self) -> int:
        return self.votes.shape[0]

    @property
    def n_lfs(self) -> int:
        return self.votes.shape[1]


def build_label_matrix(lfs: LFSet, corpus: Sequence[Document],
                       gold: Mapping[str, Mapping[int, ClassLabel]] | None = None,
                       ) -> LabelMatrix:
    """Apply every LF to every document and stack the votes row-major.

    Rows follow corpus order, then token order within each document.  Gold
    labels, given as ``{doc_id: {token_id: label}}``, are attached to their
    rows; referencing an unknown document or token raises
    ``DanglingGoldReference``.
    """
    doc_ids = tuple(d.doc_id for d in corpus)
    if len(set(doc_ids)) != len(doc_ids):
        raise ValueError("corpus contains duplicate doc_ids")
    row_index: list[tuple[str, int]] = []
    blocks: list[np.ndarray] = []
    for doc in corpus:
        cols = [apply_lf(lf, doc) for lf in lfs]
        block = (np.stack(cols, axis=1) if cols
                 else np.empty((len(doc.tokens), 0), dtype=np.int8))
        blocks.append(block)
        row_index.extend((doc.doc_id, t.token_id) for t in doc.tokens)
    votes = (np.concatenate(blocks, axis=0) if blocks
             else np.empty((0, len(lfs)), dtype=np.int8))

    gold_arr = np.full(len(row_index), -1, dtype=np.int8)
    if gold:
        sizes = {d.doc_id: len(d.tokens) for d in corpus}
        offsets = {}
        off = 0
        for d in corpus:
            offsets[d.doc_id] = off
            off += len(d.tokens)
        for doc_id, labels in gold.items():
            if doc_id not in sizes:
                raise DanglingGoldReference(f"gold references unknown doc {doc_id!r}")
            for token_id, label in labels.items():
                if not 0 <= token_id < sizes[doc_id]:
                    raise DanglingGoldReference(
                        f"gold references token {token_id} of doc {doc_id!r}")
                gold_arr[offsets[doc_id] + token_id] = int(ClassLabel(label))

    return LabelMatrix(lf_ids=lfs.lf_ids, doc_ids=doc_ids,
                       row_index=tuple(row_index), votes=votes, gold=gold_arr)


@dataclass(frozen=True)
class LfStats:
    coverage: float
    overlap: float
    conflict: float


def coverage_stats(m: LabelMatrix) -> dict[str, LfStats]:
    """Standard weak-supervision diagnostics per LF.

    coverage: fraction of rows where the LF votes; overlap: fraction where
    it votes alongside at least one other LF; conflict: fraction where some
    co-voting LF disagrees with it.
    """
    n = m.n_rows
    stats: dict[str, LfStats] = {}
    fired = m.votes != ABSTAIN
    n_fired = fired.sum(axis=1)
    for j, lf_id in enumerate(m.lf_ids):
        if n == 0:
            stats[lf_id] = LfStats(0.0, 0.0, 0.0)
            continue
        mine = fired[:, j]
        overlap_rows = mine & (n_fired >= 2)
        conflict = np.zeros(n, dtype=bool)
        rows = np.flatnonzero(overlap_rows)
        for i in rows:
            row = m.votes[i]
            others = row[(row != ABSTAIN)]
            conflict[i] = np.any(others != row[j])
        stats[lf_id] = LfStats(
            coverage=float(mine.sum()) / n,
            overlap=float(overlap_rows.sum()) / n,
            conflict=float(conflict.sum()) / n,
        )
    return stats


# --- declarative config -----------------------------------------------------

def _lf_from_obj(obj: dict) -> LabelingFunction:
    position = None
    if "region" in obj or "page" in obj:
        region = obj.get("region", [0.0, 0.0, 1.0, 1.0])
        position = PositionRule(region=BBox(*region), page=obj.get("page"))
    adjacency = None
    if "adjacency" in obj:
        a = obj["adjacency"]
        adjacency = AdjacencyRule(anchor=a["anchor"],
                                  relation=a.get("relation", NEXT_ON_LINE),
                                  max_gap=int(a.get("max_gap", 1)))
    return LabelingFunction(
        lf_id=obj["lf_id"],
        target=ClassLabel[obj["target"]],
        triggers=tuple(obj.get("triggers", ())),
        position=position,
        adjacency=adjacency,
    )


def load_lfset(path: str | Path) -> LFSet:
    """Load an LFSet from a JSON config: a list of LF objects."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data["labeling_functions"]
    return LFSet(tuple(_lf_from_obj(o) for o in data))


def default_lfset() -> LFSet:
    """The shipped four-class LFSet (targets the synthetic corpus layout)."""
    from importlib.resources import files

    path = files("dskit").joinpath("data/default_lfs.json")
    with path.open("r", encoding="utf-8") as fh:
        data = json.load(fh)
    return LFSet(tuple(_lf_from_obj(o) for o in data["labeling_functions"]))
