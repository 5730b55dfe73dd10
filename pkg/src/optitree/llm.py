"""Chat-completion backends, prompt rendering, and structured extraction.

Two backends share one interface: a live chat-completions endpoint
(configured through the OPTITREE_API_BASE / OPTITREE_API_KEY /
OPTITREE_MODEL environment variables) and a recorded-transcript mock that
replays canned responses deterministically. Transcripts are keyed by
template-name stream order, not prompt hash, so cosmetic template edits do
not invalidate fixtures.
"""

from __future__ import annotations

import ast
import json
import os
import re
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Protocol

from .errors import (
    BackendUnavailable,
    MalformedStructure,
    NoStructuredBlock,
    RequestTimeout,
    TranscriptExhausted,
    UnboundPlaceholder,
)
from .prompts import TEMPLATES, template_placeholders

ENV_API_BASE = "OPTITREE_API_BASE"
ENV_API_KEY = "OPTITREE_API_KEY"
ENV_MODEL = "OPTITREE_MODEL"

TRANSPORT_RETRIES = 3
DEFAULT_MAX_INFLIGHT = 4


@dataclass(frozen=True)
class ChatRequest:
    template_name: str
    variables: Mapping[str, str]
    temperature: float = 0.0
    max_tokens: int = 4096


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: Mapping[str, int] = field(default_factory=dict)
    latency: float = 0.0


class ChatClient(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


def render_prompt(template_name: str, variables: Mapping[str, Any]) -> str:
    """Substitute variables into the named template, byte-deterministically."""
    if template_name not in TEMPLATES:
        raise KeyError(f"unknown template {template_name!r}")
    required = template_placeholders(template_name)
    missing = sorted(required - set(variables))
    if missing:
        raise UnboundPlaceholder(
            f"template {template_name!r} missing variables: {', '.join(missing)}"
        )
    bound = {name: str(variables[name]) for name in required}
    return TEMPLATES[template_name].format(**bound)


class LiveBackend:
    """Chat-completions endpoint client with bounded retries.

    Transport failures are retried with exponential backoff
    (``backoff_base * 2**attempt`` seconds) up to the retry budget; a
    connection that keeps failing raises BackendUnavailable, a request that
    keeps timing out raises RequestTimeout.
    """

    def __init__(
        self,
        api_base: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        timeout: float = 120.0,
        retries: int = TRANSPORT_RETRIES,
        backoff_base: float = 0.5,
        max_inflight: int = DEFAULT_MAX_INFLIGHT,
        session: Any = None,
    ) -> None:
        self.api_base = (api_base or os.environ.get(ENV_API_BASE, "")).rstrip("/")
        self.api_key = api_key or os.environ.get(ENV_API_KEY, "")
        self.model = model or os.environ.get(ENV_MODEL, "")
        if not self.api_base:
            raise BackendUnavailable(
                f"no endpoint configured; set {ENV_API_BASE} or pass api_base"
            )
        self.timeout = timeout
        self.retries = max(1, retries)
        self.backoff_base = backoff_base
        self._inflight = threading.Semaphore(max_inflight)
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def complete(self, request: ChatRequest) -> ChatResponse:
        import requests

        prompt = render_prompt(request.template_name, request.variables)
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = f"{self.api_base}/chat/completions"
        last: Exception | None = None
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.backoff_base * (2 ** (attempt - 1)))
            start = time.perf_counter()
            try:
                with self._inflight:
                    resp = self._session.post(
                        url, json=payload, headers=headers, timeout=self.timeout
                    )
            except requests.Timeout as exc:
                last = exc
                continue
            except requests.RequestException as exc:
                last = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = BackendUnavailable(
                    f"endpoint returned HTTP {resp.status_code}"
                )
                continue
            if resp.status_code != 200:
                raise BackendUnavailable(
                    f"endpoint rejected request: HTTP {resp.status_code} "
                    f"{resp.text[:200]}"
                )
            body = resp.json()
            try:
                text = body["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise MalformedStructure(
                    f"completion body lacks choices[0].message.content: {exc}"
                )
            return ChatResponse(
                text=text,
                usage=dict(body.get("usage", {})),
                latency=time.perf_counter() - start,
            )
        if isinstance(last, requests.Timeout):
            raise RequestTimeout(
                f"no response after {self.retries} attempts: {last}"
            )
        raise BackendUnavailable(
            f"endpoint unreachable after {self.retries} attempts: {last}"
        )


@dataclass(frozen=True)
class TranscriptEntry:
    template_name: str
    response_text: str


class TranscriptBackend:
    """Replays recorded responses in order, per template-name stream.

    Rendering still happens on every call so placeholder binding is
    validated exactly as in live mode; the rendered prompt is then
    discarded and the next recorded entry for that template is returned.
    """

    def __init__(self, entries: Iterable[TranscriptEntry]) -> None:
        self._queues: dict[str, deque[str]] = {}
        self._lock = threading.Lock()
        for entry in entries:
            self._queues.setdefault(entry.template_name, deque()).append(
                entry.response_text
            )

    @classmethod
    def from_path(cls, path: str | Path) -> "TranscriptBackend":
        return cls(load_transcript(Path(path).read_text(encoding="utf-8")))

    def complete(self, request: ChatRequest) -> ChatResponse:
        render_prompt(request.template_name, request.variables)
        with self._lock:
            queue = self._queues.get(request.template_name)
            if not queue:
                raise TranscriptExhausted(
                    f"no recorded response left for {request.template_name!r}"
                )
            text = queue.popleft()
        return ChatResponse(text=text, usage={}, latency=0.0)


def load_transcript(text: str) -> list[TranscriptEntry]:
    """Parse a line-delimited transcript fixture."""
    entries = []
    for i, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except ValueError as exc:
            raise MalformedStructure(f"transcript line {i} is not JSON: {exc}")
        if "template_name" not in record or "response_text" not in record:
            raise MalformedStructure(
                f"transcript line {i} lacks template_name/response_text"
            )
        entries.append(
            TranscriptEntry(
                template_name=record["template_name"],
                response_text=record["response_text"],
            )
        )
    return entries


def dump_transcript(entries: Iterable[TranscriptEntry]) -> str:
    return "\n".join(
        json.dumps(
            {"template_name": e.template_name, "response_text": e.response_text},
            ensure_ascii=False,
        )
        for e in entries
    )


class RecordingClient:
    """Wraps a client and captures every exchange as transcript entries."""

    def __init__(self, inner: ChatClient) -> None:
        self._inner = inner
        self.entries: list[TranscriptEntry] = []
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self._inner.complete(request)
        with self._lock:
            self.entries.append(
                TranscriptEntry(
                    template_name=request.template_name,
                    response_text=response.text,
                )
            )
        return response


_CODE_FENCE_RE = re.compile(r"```(?:python)?[ \t]*\n(.*?)```", re.DOTALL)


def _parse_record_text(text: str) -> Any:
    try:
        return json.loads(text)
    except ValueError:
        pass
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        raise MalformedStructure("block is neither JSON nor a Python literal")


def _braced_spans(text: str) -> list[str]:
    """Balanced ``{...}`` spans, largest first."""
    spans = []
    stack: list[int] = []
    for i, ch in enumerate(text):
        if ch == "{":
            stack.append(i)
        elif ch == "}" and stack:
            start = stack.pop()
            if not stack:
                spans.append(text[start : i + 1])
    spans.sort(key=len, reverse=True)
    return spans


def extract_json_block(text: str) -> Any:
    """Extract and parse the first fenced structured block.

    Block content may itself contain fence markers inside string values, so
    every candidate closing fence is tried until one yields a parseable
    record. Without fences, falls back to the largest balanced braced span
    that parses. Text with no braces at all raises NoStructuredBlock;
    braces that never parse raise MalformedStructure.
    """
    opener = re.search(r"```(?:json)?[ \t]*\n", text)
    if opener:
        rest = text[opener.end():]
        for closer in re.finditer(r"```", rest):
            candidate = rest[: closer.start()].strip()
            try:
                return _parse_record_text(candidate)
            except MalformedStructure:
                continue
    if "{" not in text:
        raise NoStructuredBlock("no fenced block and no braces in text")
    for span in _braced_spans(text):
        try:
            return _parse_record_text(span)
        except MalformedStructure:
            continue
    raise MalformedStructure("no braced span parses as a record")


def extract_code_block(text: str) -> str:
    """The single fenced code block of a modeling response.

    Zero or multiple blocks violate the response contract and raise
    MalformedStructure.
    """
    blocks = _CODE_FENCE_RE.findall(text)
    if not blocks:
        raise MalformedStructure("response contains no fenced code block")
    if len(blocks) > 1:
        raise MalformedStructure(
            f"response contains {len(blocks)} code blocks, expected exactly one"
        )
    return blocks[0].strip("\n")


NO_SUBTYPE_SENTINELS = frozenset({"subtype not find", "subtype not found"})


@dataclass(frozen=True)
class SubtypePick:
    matching: str | None
    belongs: bool
    rationale: str = ""


def parse_subtype_response(text: str) -> SubtypePick:
    """Parse a subtype-identification response.

    Accepts the root-level field aliases (``matching_problem_type`` /
    ``belongs_to_problem_types``). The no-match sentinel or an explicit
    false flag yields belongs=False; a true flag with no name is malformed.
    """
    try:
        record = extract_json_block(text)
    except NoStructuredBlock as exc:
        raise MalformedStructure(str(exc))
    if not isinstance(record, Mapping):
        raise MalformedStructure("subtype response is not a record")
    data = {str(k).strip().lower(): v for k, v in record.items()}
    name = data.get("matching_subtype", data.get("matching_problem_type"))
    belongs = data.get("belongs_to_subtypes", data.get("belongs_to_problem_types"))
    rationale = str(data.get("reasoning", ""))

    name_str = None if name is None else str(name).strip()
    not_found = (
        name_str is not None and name_str.lower() in NO_SUBTYPE_SENTINELS
    )
    if belongs is None:
        if name_str is None:
            raise MalformedStructure("response names no subtype and no flag")
        belongs = not not_found
    belongs = bool(belongs) and not not_found
    if belongs and not name_str:
        raise MalformedStructure("response claims a match but names no subtype")
    return SubtypePick(
        matching=name_str if belongs else None,
        belongs=belongs,
        rationale=rationale,
    )
