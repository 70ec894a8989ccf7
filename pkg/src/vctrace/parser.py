"""Concrete text syntax for traces.

A document carries exactly one ``<explain>...</explain>`` block followed
by exactly one ``<dag>...</dag>`` block; anything outside the two blocks
is ignored (generators tend to emit preambles). Inside the dag body each
non-blank, non-comment line is either a node declaration::

    n1: binds_to(actor="sorafenib", target="BRAF", affinity=4.5)

or an edge declaration ``n1 -> n2``. Values are double-quoted strings
(``\\"`` escapes a quote, ``\\\\`` a backslash, no embedded newlines),
decimal numbers, bare enum tokens, or bracketed lists ``[v1, v2]``.
Lines beginning with ``#`` are comments. Syntax errors are collected per
line (1-based into the whole document); the parser never aborts early.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Iterator

from vctrace.errors import RenderError
from vctrace.graph import validate_graph
from vctrace.model import ActionNode, ArgValue, ReasoningTrace
from vctrace.schema import SchemaRegistry

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_NODE_START_RE = re.compile(rf"^\s*({_IDENT})\s*:\s*({_IDENT})\s*\(")
_EDGE_RE = re.compile(rf"^\s*({_IDENT})\s*->\s*({_IDENT})\s*$")
_NUMBER_TOKEN_RE = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?")
_BARE_TOKEN_RE = re.compile(_IDENT)


@dataclass
class ParseOutcome:
    """Result of parsing one raw document."""

    trace: ReasoningTrace | None
    syntax_errors: list[tuple[int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.trace is not None


def parse_trace(
    text: str, trace_id: str, perturbation: str, context: str
) -> ParseOutcome:
    """Parse a raw document into a trace, collecting per-line syntax errors."""
    errors: list[tuple[int, str]] = []

    explain_span = _find_block(text, "explain", errors)
    dag_span = _find_block(text, "dag", errors)
    if explain_span and dag_span and dag_span[0] < explain_span[1]:
        errors.append(
            (_lineno(text, dag_span[0]), "<explain> block must precede <dag> block")
        )
    if errors:
        return ParseOutcome(trace=None, syntax_errors=sorted(errors))

    explain = text[explain_span[0]:explain_span[1]]
    body_start, body_end = dag_span
    first_body_line = _lineno(text, body_start)

    nodes: list[ActionNode] = []
    edges: list[tuple[str, str]] = []
    body = text[body_start:body_end]
    for offset, raw_line in enumerate(body.split("\n")):
        lineno = first_body_line + offset
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if _NODE_START_RE.match(line):
            node, message = _parse_node_line(line)
            if node is None:
                errors.append((lineno, message))
            else:
                nodes.append(node)
        elif "->" in line:
            match = _EDGE_RE.match(line)
            if not match:
                errors.append((lineno, f"malformed edge declaration: {line!r}"))
                continue
            edges.append((match.group(1), match.group(2)))
        else:
            errors.append((lineno, f"malformed node declaration: {line!r}"))

    if errors:
        return ParseOutcome(trace=None, syntax_errors=sorted(errors))
    trace = ReasoningTrace(
        trace_id=trace_id,
        perturbation=perturbation,
        context=context,
        explain=explain,
        nodes=nodes,
        edges=edges,
    )
    return ParseOutcome(trace=trace)


def _find_block(text: str, tag: str, errors: list[tuple[int, str]]):
    """Locate the single <tag>...</tag> block; records errors otherwise."""
    open_tag, close_tag = f"<{tag}>", f"</{tag}>"
    opens = [m.start() for m in re.finditer(re.escape(open_tag), text)]
    if not opens:
        errors.append((1, f"missing {open_tag} block"))
        return None
    if len(opens) > 1:
        errors.append((_lineno(text, opens[1]), f"duplicate {open_tag} block"))
        return None
    start = opens[0] + len(open_tag)
    close = text.find(close_tag, start)
    if close < 0:
        errors.append((_lineno(text, opens[0]), f"unclosed {open_tag} block"))
        return None
    if text.find(open_tag, close) >= 0:  # reopened after closing
        errors.append(
            (_lineno(text, text.find(open_tag, close)), f"duplicate {open_tag} block")
        )
        return None
    return start, close


def _lineno(text: str, pos: int) -> int:
    return text.count("\n", 0, pos) + 1


def _parse_node_line(line: str) -> tuple[ActionNode | None, str]:
    match = _NODE_START_RE.match(line)
    if not match:
        return None, f"malformed node declaration: {line!r}"
    node_id, primitive = match.group(1), match.group(2)
    rest = line[match.end():]
    args, error = _parse_args(rest)
    if error:
        return None, error
    return ActionNode(id=node_id, primitive=primitive, args=args), ""


def _parse_args(rest: str) -> tuple[dict[str, ArgValue], str]:
    """Parse 'key=value, ...)' with nothing but whitespace after the paren."""
    args: dict[str, ArgValue] = {}
    i = _skip_ws(rest, 0)
    if i < len(rest) and rest[i] == ")":
        trailing = rest[i + 1:].strip()
        if trailing:
            return args, f"unexpected text after ')': {trailing!r}"
        return args, ""
    while True:
        match = _BARE_TOKEN_RE.match(rest, i)
        if not match:
            return args, f"expected argument name at {rest[i:i+20]!r}"
        name = match.group(0)
        i = _skip_ws(rest, match.end())
        if i >= len(rest) or rest[i] != "=":
            return args, f"expected '=' after argument {name!r}"
        i = _skip_ws(rest, i + 1)
        value, i, error = _parse_value(rest, i)
        if error:
            return args, f"argument {name!r}: {error}"
        if name in args:
            return args, f"duplicate argument: {name!r}"
        args[name] = value
        i = _skip_ws(rest, i)
        if i < len(rest) and rest[i] == ",":
            i = _skip_ws(rest, i + 1)
            continue
        if i < len(rest) and rest[i] == ")":
            trailing = rest[i + 1:].strip()
            if trailing:
                return args, f"unexpected text after ')': {trailing!r}"
            return args, ""
        return args, "expected ',' or ')' in argument list"


def _parse_value(s: str, i: int) -> tuple[ArgValue, int, str]:
    if i >= len(s):
        return "", i, "missing value"
    ch = s[i]
    if ch == '"':
        return _parse_quoted(s, i)
    if ch == "[":
        return _parse_list(s, i)
    match = _NUMBER_TOKEN_RE.match(s, i)
    if match:
        return Decimal(match.group(0)), match.end(), ""
    match = _BARE_TOKEN_RE.match(s, i)
    if match:
        return match.group(0), match.end(), ""
    return "", i, f"cannot read value at {s[i:i+20]!r}"


def _parse_quoted(s: str, i: int) -> tuple[str, int, str]:
    out: list[str] = []
    i += 1
    while i < len(s):
        ch = s[i]
        if ch == "\\":
            if i + 1 < len(s) and s[i + 1] in ('"', "\\"):
                out.append(s[i + 1])
                i += 2
                continue
            return "", i, "bad escape (only \\\" and \\\\ are allowed)"
        if ch == '"':
            return "".join(out), i + 1, ""
        out.append(ch)
        i += 1
    return "", i, "unterminated string"


def _parse_list(s: str, i: int) -> tuple[list, int, str]:
    values: list[ArgValue] = []
    i = _skip_ws(s, i + 1)
    if i < len(s) and s[i] == "]":
        return values, i + 1, ""
    while True:
        if i < len(s) and s[i] == "[":
            return values, i, "nested lists are not allowed"
        value, i, error = _parse_value(s, i)
        if error:
            return values, i, error
        values.append(value)
        i = _skip_ws(s, i)
        if i < len(s) and s[i] == ",":
            i = _skip_ws(s, i + 1)
            continue
        if i < len(s) and s[i] == "]":
            return values, i + 1, ""
        return values, i, "unbalanced brackets in list"


def _skip_ws(s: str, i: int) -> int:
    while i < len(s) and s[i] in " \t":
        i += 1
    return i


# --- canonical rendering ---------------------------------------------------


def render_trace(trace: ReasoningTrace, registry: SchemaRegistry) -> str:
    """Canonical text form whose re-parse reproduces the trace exactly.

    Nodes keep their original order; each node's args follow schema order
    (required then optional, each alphabetical); edges are sorted by
    (src, dst). Refuses structurally invalid traces.
    """
    report = validate_graph(trace, registry)
    if not report.valid:
        first = (report.graph_violations or [f"{n}: {m}" for n, m in report.schema_violations])[0]
        raise RenderError(f"cannot render invalid trace {trace.trace_id!r}: {first}")
    if "</explain>" in trace.explain or "<dag>" in trace.explain:
        raise RenderError("explain text embeds block tags; not renderable")

    lines = [f"<explain>{trace.explain}</explain>", "<dag>"]
    for node in trace.nodes:
        schema = registry.schema_for(node.primitive)
        parts = []
        for name in schema.canonical_arg_order():
            if name not in node.args:
                continue
            spec = schema.spec_for(name)
            parts.append(f"{name}={_render_value(node.args[name], spec.kind)}")
        lines.append(f"{node.id}: {node.primitive}({', '.join(parts)})")
    for src, dst in sorted(trace.edges):
        lines.append(f"{src} -> {dst}")
    lines.append("</dag>")
    return "\n".join(lines)


def _render_value(value: ArgValue, kind: str) -> str:
    if isinstance(value, list):
        return "[" + ", ".join(_render_value(v, kind) for v in value) + "]"
    if isinstance(value, Decimal):
        return str(value)
    text = str(value)
    if kind == "enum" and _BARE_TOKEN_RE.fullmatch(text):
        return text
    escaped = text.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


# --- corpus streaming ------------------------------------------------------


@dataclass
class CorpusItem:
    """One record of a raw corpus: a parse outcome or a record-level error."""

    source_ref: str
    record_index: int
    trace_id: str | None = None
    outcome: ParseOutcome | None = None
    record_error: str | None = None


def parse_corpus(lines: Iterable[tuple[int, dict | None, str | None]], source: str) -> Iterator[CorpusItem]:
    """Parse a raw-corpus JSONL stream (as yielded by ioutil.read_jsonl).

    Raw records carry trace_id, perturbation, context, raw_text. Records
    with invalid JSON or missing fields become record-level errors; the
    stream continues.
    """
    for index, (lineno, obj, error) in enumerate(lines):
        ref = f"{source}:{lineno}"
        if error is not None:
            yield CorpusItem(source_ref=ref, record_index=index, record_error=error)
            continue
        if not isinstance(obj, dict):
            yield CorpusItem(
                source_ref=ref, record_index=index, record_error="record is not an object"
            )
            continue
        missing = [k for k in ("trace_id", "perturbation", "context", "raw_text") if k not in obj]
        if missing:
            yield CorpusItem(
                source_ref=ref,
                record_index=index,
                trace_id=obj.get("trace_id"),
                record_error=f"missing field(s): {', '.join(missing)}",
            )
            continue
        outcome = parse_trace(
            str(obj["raw_text"]),
            trace_id=str(obj["trace_id"]),
            perturbation=str(obj["perturbation"]),
            context=str(obj["context"]),
        )
        yield CorpusItem(
            source_ref=ref,
            record_index=index,
            trace_id=str(obj["trace_id"]),
            outcome=outcome,
        )
