"""Text-generation providers behind the pipeline.

Three modes: live (generic HTTP text-in/text-out adapter), replay
(cache of recorded outputs keyed by the SHA-256 of the full prompt,
failing loudly on a miss), and stub (deterministic template
instantiation, fully offline). The replay keying is exact by design:
any prompt drift surfaces as a cache miss instead of silently reusing a
stale response.
"""

from __future__ import annotations

import hashlib
import json
import re
import urllib.error
import urllib.request
from pathlib import Path
from typing import Protocol

from vctrace.errors import PipelineError


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class GenerationProvider(Protocol):
    mode: str

    def generate(self, prompt: str) -> str: ...


class StubProvider:
    """Deterministic offline provider.

    Prompts carry a ``# task: <name>`` marker line (part of the packaged
    templates) plus ``PERTURBATION:`` / ``CONTEXT:`` lines the stub reads
    back. Report prompts yield a short summary embedding a digest of the
    retrieved sections; constructor prompts yield a minimal, schema-valid
    trace document.
    """

    mode = "stub"

    _MARKER_RE = re.compile(r"^# task: (\w+)", re.MULTILINE)
    _FIELD_RE = {
        "perturbation": re.compile(r"^PERTURBATION: (.*)$", re.MULTILINE),
        "context": re.compile(r"^CONTEXT: (.*)$", re.MULTILINE),
    }

    def generate(self, prompt: str) -> str:
        task_match = self._MARKER_RE.search(prompt)
        task = task_match.group(1) if task_match else "unknown"
        perturbation = self._field(prompt, "perturbation")
        context = self._field(prompt, "context")
        if task == "report":
            return (
                f"Stub report for {perturbation} in {context}.\n"
                f"Evidence digest: {prompt_digest(prompt)[:16]}.\n"
                f"The compound {perturbation} engages its primary target and "
                f"modulates downstream expression in {context} cells."
            )
        if task in ("construct", "construct_one_step"):
            safe_p = _quote(perturbation)
            safe_c = _quote(context)
            return (
                f"<explain>Stub mechanism: {perturbation} acts in {context} by "
                "binding its primary target and shifting downstream "
                "transcription.</explain>\n"
                "<dag>\n"
                f'n1: set_context(cell_model={safe_c})\n'
                f'n2: binds_to(actor={safe_p}, target="EGFR")\n'
                'n3: modulates_pathway_activity(actor="EGFR", pathway="MAPK", direction=down)\n'
                'n4: regulates_expression(actor="EGFR", genes=["DUSP6", "SPRY2"], direction=down)\n'
                "n1 -> n2\n"
                "n2 -> n3\n"
                "n3 -> n4\n"
                "</dag>"
            )
        return f"Stub output for task {task}: {prompt_digest(prompt)[:16]}"

    def _field(self, prompt: str, name: str) -> str:
        match = self._FIELD_RE[name].search(prompt)
        return match.group(1).strip() if match else "unknown"


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


class ReplayProvider:
    """Replays recorded outputs from a cache directory; misses are fatal."""

    mode = "replay"

    def __init__(self, cache_dir: str | Path):
        self.cache_dir = Path(cache_dir)

    def generate(self, prompt: str) -> str:
        digest = prompt_digest(prompt)
        path = self.cache_dir / f"{digest}.txt"
        if not path.exists():
            raise PipelineError(
                "replay", f"cache miss for prompt digest {digest}"
            )
        return path.read_text(encoding="utf-8")


class HttpProvider:
    """Generic HTTP adapter: POST {prompt} -> {text}."""

    mode = "live"

    def __init__(self, endpoint: str, timeout: float = 120.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def generate(self, prompt: str) -> str:
        payload = json.dumps({"prompt": prompt}).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint, data=payload, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                body = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise PipelineError("provider", f"generation request failed: {exc}") from exc
        if "text" not in body:
            raise PipelineError("provider", "response missing 'text' field")
        return str(body["text"])


class RecordingProvider:
    """Wraps another provider and persists outputs into a replay cache."""

    def __init__(self, inner, cache_dir: str | Path):
        self.inner = inner
        self.mode = inner.mode
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    def generate(self, prompt: str) -> str:
        text = self.inner.generate(prompt)
        path = self.cache_dir / f"{prompt_digest(prompt)}.txt"
        if not path.exists():
            path.write_text(text, encoding="utf-8")
        return text
