"""Prompt templates, completion adapters and response extraction.

Code comes back in fenced blocks; rules come back as ``[SNIPPET]``,
``[CONDITION]`` and ``[ACTION]`` sections in that order. A request that cannot
be parsed is re-asked until ``max_attempts`` completions have been tried.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import re
import string
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, TypeVar

from .errors import ConfigError, TemplateError, ToolUnavailableError
from .model import RtlDesign, RuleDraft

log = logging.getLogger(__name__)

T = TypeVar("T")


class TemplateId(str, enum.Enum):
    REWRITE = "rewrite"
    INDUCE = "induce"
    SPECULATE = "speculate"
    ADAPT = "adapt"
    OPTIMIZE = "optimize"


def template_text(template_id: TemplateId | str, variant: str | None = None, prompt_dir: str | Path | None = None) -> str:
    name = TemplateId(template_id).value + (f"_{variant}" if variant else "")
    if prompt_dir is not None:
        path = Path(prompt_dir) / f"{name}.txt"
        if path.exists():
            return path.read_text(encoding="utf-8")
    return resources.files("rtlppa.prompts").joinpath(f"{name}.txt").read_text(encoding="utf-8")


def placeholders(text: str) -> set[str]:
    return {name for _, name, _, _ in string.Formatter().parse(text) if name}


@dataclass(frozen=True)
class GenerationRequest:
    template_id: TemplateId
    variables: Mapping[str, str]
    temperature: float = 0.6
    max_attempts: int = 2
    variant: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "template_id", TemplateId(self.template_id))
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must lie in [0, 2], got {self.temperature}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")

    def render(self, prompt_dir: str | Path | None = None) -> str:
        """Fill the template; any unbound placeholder raises :class:`TemplateError`."""
        text = template_text(self.template_id, self.variant, prompt_dir)
        missing = sorted(placeholders(text) - set(self.variables))
        if missing:
            raise TemplateError(f"{self.template_id.value}: unbound placeholders {missing}")
        return text.format_map({k: str(v) for k, v in self.variables.items()})


class LlmAdapter(Protocol):
    model: str

    def complete(self, request: GenerationRequest, *, sample: int = 0, attempt: int = 0) -> str: ...


_FENCE_RE = re.compile(r"```[ \t]*([^\n`]*)\n(.*?)```", re.DOTALL)
CODE_TAGS = {"verilog", "systemverilog", "sv", "v"}


def extract_code(raw: str) -> str | None:
    """Body of the first verilog-tagged fence, else of the first fence; ``None`` without fences."""
    blocks = [(m.group(1).strip().lower(), m.group(2)) for m in _FENCE_RE.finditer(raw or "")]
    if not blocks:
        return None
    body = next((b for tag, b in blocks if tag in CODE_TAGS), blocks[0][1]).strip()
    return body or None


_SECTION_RE = re.compile(r"^[ \t]*\[(SNIPPET|CONDITION|ACTION)\][ \t]*:?", re.MULTILINE)
_ORDER = ("SNIPPET", "CONDITION", "ACTION")


def _clean_section(text: str) -> str:
    text = text.strip()
    if text.startswith("```"):
        code = extract_code(text)
        if code is not None:
            return code
    return text


def extract_rules(raw: str, expected: int) -> list[RuleDraft]:
    """Up to ``expected`` complete triples; out-of-order or empty sections void the triple in progress."""
    if expected < 1:
        raise ValueError("expected must be at least 1")
    marks = list(_SECTION_RE.finditer(raw or ""))
    drafts: list[RuleDraft] = []
    current: dict[str, str] = {}
    for i, mark in enumerate(marks):
        tag = mark.group(1)
        end = marks[i + 1].start() if i + 1 < len(marks) else len(raw)
        body = _clean_section(raw[mark.end() : end])
        if tag != _ORDER[len(current)]:
            current = {}
            if tag != "SNIPPET":
                continue
        if not body:
            current = {}
            continue
        current[tag] = body
        if len(current) == 3:
            drafts.append(RuleDraft(current["SNIPPET"], current["CONDITION"], current["ACTION"]))
            current = {}
            if len(drafts) == expected:
                break
    return drafts


def fence(code: str) -> str:
    return f"```verilog\n{code.strip()}\n```"


ECHO = "@echo"
ECHO_VARIANT = "@echo-variant"


@dataclass
class ScriptedLLM:
    """Deterministic adapter driven by a script mapping.

    Each template key maps to an *entry*:

    * a string, returned for every sample;
    * a list, indexed by sample number (cycling); an item that is itself a
      list is indexed by attempt (clamped to its last element);
    * ``{"cases": [{"when": {var: substring}, "then": entry}], "default": entry}``,
      where the first case whose substrings all occur in the named variables wins.

    The string ``"@echo"`` answers with the request's ``code`` variable fenced;
    ``"@echo-variant"`` does the same but appends a comment naming the sample,
    so every sample is textually distinct while behaving identically.
    Templates missing from the script answer with an empty completion.
    """

    script: Mapping[str, Any] = field(default_factory=dict)
    model: str = "scripted"
    calls: list[tuple[str, int, int]] = field(default_factory=list)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedLLM":
        try:
            return cls(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load LLM script {path}: {exc}") from exc

    def _resolve(self, entry: Any, request: GenerationRequest, sample: int, attempt: int) -> str:
        if isinstance(entry, Mapping):
            for case in entry.get("cases", []):
                if all(sub in str(request.variables.get(var, "")) for var, sub in case.get("when", {}).items()):
                    return self._resolve(case["then"], request, sample, attempt)
            return self._resolve(entry.get("default", ""), request, sample, attempt)
        if isinstance(entry, list):
            if not entry:
                return ""
            item = entry[sample % len(entry)]
            if isinstance(item, list):
                item = item[min(attempt, len(item) - 1)] if item else ""
            return self._resolve(item, request, sample, attempt)
        text = str(entry)
        if text == ECHO:
            return fence(str(request.variables.get("code", "")))
        if text == ECHO_VARIANT:
            return fence(f"{request.variables.get('code', '')}\n// variant {sample}")
        return text

    def complete(self, request: GenerationRequest, *, sample: int = 0, attempt: int = 0) -> str:
        request.render()
        self.calls.append((request.template_id.value, sample, attempt))
        return self._resolve(self.script.get(request.template_id.value, ""), request, sample, attempt)


def _post_json(url: str, payload: dict, api_key: str | None, timeout: float) -> dict:
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    req = urllib.request.Request(url, data=json.dumps(payload).encode("utf-8"), headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))
    except (urllib.error.URLError, TimeoutError, OSError) as exc:
        raise ToolUnavailableError(f"endpoint {url} unreachable: {exc}") from exc


class ChatCompletionAdapter:
    """Adapter for any endpoint speaking the common chat-completions JSON schema.

    Reads ``RTLPPA_LLM_URL`` (base URL, ``/chat/completions`` is appended when
    absent), ``RTLPPA_LLM_API_KEY`` and ``RTLPPA_LLM_MODEL``.
    """

    def __init__(self, url: str | None = None, api_key: str | None = None, model: str | None = None,
                 timeout: float = 300.0, prompt_dir: str | Path | None = None):
        url = url or os.environ.get("RTLPPA_LLM_URL")
        model = model or os.environ.get("RTLPPA_LLM_MODEL")
        if not url or not model:
            raise ToolUnavailableError("set RTLPPA_LLM_URL and RTLPPA_LLM_MODEL to use a remote LLM")
        self.url = url if url.rstrip("/").endswith("/chat/completions") else url.rstrip("/") + "/chat/completions"
        self.api_key = api_key or os.environ.get("RTLPPA_LLM_API_KEY")
        self.model = model
        self.timeout = timeout
        self.prompt_dir = prompt_dir

    def complete(self, request: GenerationRequest, *, sample: int = 0, attempt: int = 0) -> str:
        prompt = request.render(self.prompt_dir)
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": request.temperature,
            "n": 1,
        }
        data = _post_json(self.url, payload, self.api_key, self.timeout)
        try:
            return data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError):
            log.warning("malformed completion response: %.200s", json.dumps(data))
            return ""


class LlmGateway:
    """Renders requests, re-asks on unparseable output and caps requests in flight."""

    def __init__(self, adapter: LlmAdapter, *, temperature: float = 0.6, max_attempts: int = 2,
                 max_in_flight: int = 4, target_metric: str = "area"):
        self.adapter = adapter
        self.temperature = temperature
        self.max_attempts = max_attempts
        self.max_in_flight = max(1, max_in_flight)
        self.target_metric = target_metric

    def request(self, template: TemplateId, variables: Mapping[str, str], variant: str | None = None) -> GenerationRequest:
        merged = {"target_metric": self.target_metric, **variables}
        req = GenerationRequest(template, merged, self.temperature, self.max_attempts, variant)
        req.render(getattr(self.adapter, "prompt_dir", None))
        return req

    def generate(self, request: GenerationRequest, parse: Callable[[str], T | None], *, sample: int = 0) -> T | None:
        """First successful parse over at most ``max_attempts`` completions."""
        for attempt in range(request.max_attempts):
            raw = self.adapter.complete(request, sample=sample, attempt=attempt)
            parsed = parse(raw)
            if parsed:
                return parsed
            log.debug("%s sample %d attempt %d unparseable", request.template_id.value, sample, attempt)
        return None

    def map_samples(self, request: GenerationRequest, parse: Callable[[str], T | None], samples: range) -> list[T | None]:
        """Generate several samples concurrently; results come back in sample order."""
        if self.max_in_flight == 1 or len(samples) <= 1:
            return [self.generate(request, parse, sample=i) for i in samples]
        with ThreadPoolExecutor(self.max_in_flight) as pool:
            return list(pool.map(lambda i: self.generate(request, parse, sample=i), samples))

    def code(self, template: TemplateId, variables: Mapping[str, str], *, sample: int = 0, variant: str | None = None) -> str | None:
        return self.generate(self.request(template, variables, variant), extract_code, sample=sample)

    def rules(self, template: TemplateId, variables: Mapping[str, str], expected: int, *, sample: int = 0) -> list[RuleDraft]:
        return self.generate(self.request(template, variables), lambda raw: extract_rules(raw, expected), sample=sample) or []


def sample_rewrites(design: RtlDesign, count: int, gateway: LlmGateway) -> list[RtlDesign]:
    """Up to ``count`` rewrites of ``design``; unextractable samples are dropped, never padded."""
    if count < 1:
        raise ValueError("count must be at least 1")
    request = gateway.request(TemplateId.REWRITE, {"code": design.source})
    bodies = gateway.map_samples(request, extract_code, range(count))
    return [
        RtlDesign(body, f"{design.design_id}.r{i}", design.top_module)
        for i, body in enumerate(bodies)
        if body is not None
    ]


def render_rules(rules) -> str:
    return "\n\n".join(r.render() for r in rules)


def make_llm(name: str, *, script: str | Path | None = None, **options) -> LlmAdapter:
    if name == "scripted":
        return ScriptedLLM.from_file(script) if script else ScriptedLLM()
    if name in ("remote", "openai"):
        return ChatCompletionAdapter(**options)
    raise ConfigError(f"unknown llm adapter {name!r}")


__all__ = [
    "ChatCompletionAdapter",
    "GenerationRequest",
    "LlmAdapter",
    "LlmGateway",
    "ScriptedLLM",
    "TemplateId",
    "extract_code",
    "extract_rules",
    "make_llm",
    "sample_rewrites",
]
