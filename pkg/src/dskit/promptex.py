"""Clinical-feature extraction from free text through a templated yes/no
prompt against a pluggable completion endpoint.

The default template asks twelve fixed questions about the hospital-course
narrative and instructs the model to answer with indexed yes/no lines only.
Every document is queried twice so response determinism can be measured as
between-run agreement; the service is always called at temperature 0.

Transports implement ``complete(prompt, doc_id) -> str``.  ``HttpTransport``
POSTs to a JSON endpoint with a bearer key taken from a named environment
variable; ``MockTransport`` serves scripted responses keyed by doc_id and
counts its calls, which is what every test runs against.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import httpx

log = logging.getLogger(__name__)

YES = "YES"
NO = "NO"


class EmptyCourseText(ValueError):
    pass


class ParseError(ValueError):
    """A model response could not be decoded into an answer vector."""


class MissingIndex(ParseError):
    def __init__(self, index: int):
        super().__init__(f"no answer line for question {index}")
        self.index = index


class DuplicateIndex(ParseError):
    def __init__(self, index: int):
        super().__init__(f"more than one answer line for question {index}")
        self.index = index


class UnparseableToken(ParseError):
    def __init__(self, line: str, reason: str = "unrecognized answer line"):
        super().__init__(f"{reason}: {line!r}")
        self.line = line


class TransportError(RuntimeError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    preamble: str
    questions: tuple[str, ...]
    answer_instruction: str

    def __post_init__(self):
        object.__setattr__(self, "questions", tuple(self.questions))
        if not self.questions:
            raise ValueError("a template needs at least one question")


@dataclass(frozen=True)
class LlmConfig:
    endpoint: str = ""
    model: str = ""
    temperature: float = 0.0
    timeout_s: float = 30.0
    max_retries: int = 2
    api_key_env: str = "DSKIT_API_KEY"
    max_concurrency: int = 4

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass
class FeatureAnswers:
    doc_id: str
    answers: list[str]  # YES/NO per question
    raw_response: str
    run_index: int  # 1 or 2


def build_prompt(t: PromptTemplate, course_text: str) -> str:
    """Render the full prompt: preamble, narrative, numbered questions,
    answer instruction.  Documents with an empty course section cannot be
    queried and raise ``EmptyCourseText``."""
    if not course_text.strip():
        raise EmptyCourseText("course text is empty")
    numbered = "\n".join(f"{i}. {q}" for i, q in enumerate(t.questions, start=1))
    return f"{t.preamble}\n\n{course_text}\n\n{numbered}\n{t.answer_instruction}"


_ANSWER_LINE = re.compile(r"^\s*(\d+)\s*[.:)\-]?\s*(.+?)\s*$")


def parse_answers(raw: str, n: int) -> list[str]:
    """Decode an indexed yes/no response into answers ordered 1..n.

    Accepts "k. Yes", "k: no", "k) YES" and similar; blank lines are
    skipped.  Anything else aborts the document: a malformed response must
    surface as a diagnostic, never silently default.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    found: dict[int, str] = {}
    for line in raw.splitlines():
        if not line.strip():
            continue
        mo = _ANSWER_LINE.match(line)
        if not mo:
            raise UnparseableToken(line)
        index = int(mo.group(1))
        if not 1 <= index <= n:
            raise UnparseableToken(line, reason=f"index {index} outside 1..{n}")
        word = mo.group(2).strip().rstrip(".,;").upper()
        if word not in (YES, NO):
            raise UnparseableToken(line, reason="answer is not yes/no")
        if index in found:
            raise DuplicateIndex(index)
        found[index] = word
    for k in range(1, n + 1):
        if k not in found:
            raise MissingIndex(k)
    return [found[k] for k in range(1, n + 1)]


def format_answers(answers: Sequence[str]) -> str:
    """Canonical "k. Yes" formatting; inverse of ``parse_answers``."""
    return "\n".join(f"{i}. {'Yes' if a == YES else 'No'}"
                     for i, a in enumerate(answers, start=1))


class Transport(Protocol):
    def complete(self, prompt: str, doc_id: str) -> str: ...


class MockTransport:
    """Deterministic scripted transport keyed by doc_id.

    A script value may be a single response (served on every call) or a list
    of per-call responses (the last repeats).  The call counter lets tests
    prove that no live transport was touched.
    """

    def __init__(self, scripts: Mapping[str, str | Sequence[str]]):
        self._scripts = dict(scripts)
        self._served: dict[str, int] = {}
        self._lock = threading.Lock()
        self.calls = 0

    def complete(self, prompt: str, doc_id: str) -> str:
        with self._lock:
            self.calls += 1
            if doc_id not in self._scripts:
                raise TransportError(f"no scripted response for doc {doc_id!r}")
            script = self._scripts[doc_id]
            if isinstance(script, str):
                return script
            i = self._served.get(doc_id, 0)
            self._served[doc_id] = i + 1
            return script[min(i, len(script) - 1)]


class HttpTransport:
    """Live JSON-over-HTTP transport.

    POST body: {"model", "temperature", "prompt"}; the response must carry
    the completion under "completion" or "text".  The bearer key comes from
    the environment variable named in the config.
    """

    def __init__(self, cfg: LlmConfig):
        self._cfg = cfg
        self._client = httpx.Client(timeout=cfg.timeout_s)

    def complete(self, prompt: str, doc_id: str) -> str:
        cfg = self._cfg
        headers = {}
        key = os.environ.get(cfg.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {"model": cfg.model, "temperature": cfg.temperature, "prompt": prompt}
        log.debug("completion request doc=%s model=%s prompt_chars=%d",
                  doc_id, cfg.model, len(prompt))
        try:
            resp = self._client.post(cfg.endpoint, json=body, headers=headers)
            resp.raise_for_status()
            data = resp.json()
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        text = data.get("completion", data.get("text"))
        if not isinstance(text, str):
            raise TransportError("response carries no completion text")
        log.debug("completion response doc=%s chars=%d", doc_id, len(text))
        return text


def _complete_with_retries(transport: Transport, prompt: str, doc_id: str,
                           cfg: LlmConfig) -> str:
    delay = 0.5
    for attempt in range(cfg.max_retries + 1):
        try:
            return transport.complete(prompt, doc_id)
        except TransportError:
            if attempt == cfg.max_retries:
                raise
            time.sleep(delay)
            delay *= 2
    raise AssertionError("unreachable")


def extract_features(doc_id: str, course_text: str, t: PromptTemplate,
                     cfg: LlmConfig, transport: Transport,
                     ) -> tuple[FeatureAnswers, FeatureAnswers, list[bool]]:
    """Query the endpoint twice for one document and parse both runs.

    Returns the two answer sets plus per-question agreement flags; the
    corpus-level between-run kappa is computed by the caller over the batch.
    """
    prompt = build_prompt(t, course_text)
    n = len(t.questions)
    runs: list[FeatureAnswers] = []
    for run_index in (1, 2):
        raw = _complete_with_retries(transport, prompt, doc_id, cfg)
        answers = parse_answers(raw, n)
        runs.append(FeatureAnswers(doc_id=doc_id, answers=answers,
                                   raw_response=raw, run_index=run_index))
    agreement = [a == b for a, b in zip(runs[0].answers, runs[1].answers)]
    return runs[0], runs[1], agreement


# --- default template -----------------------------------------------------------

def load_template(path: str | Path) -> PromptTemplate:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return PromptTemplate(preamble=data["preamble"],
                          questions=tuple(data["questions"]),
                          answer_instruction=data["answer_instruction"])


def default_template() -> PromptTemplate:
    """The shipped twelve-question template.

    Edits happen by supplying a replacement template; the default itself is
    frozen.
    """
    from importlib.resources import files

    path = files("dskit").joinpath("data/default_template.json")
    with path.open("r", encoding="utf-8") as fh:
        data = json.load(fh)
    return PromptTemplate(preamble=data["preamble"],
                          questions=tuple(data["questions"]),
                          answer_instruction=data["answer_instruction"])
