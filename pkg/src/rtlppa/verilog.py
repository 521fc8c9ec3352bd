"""Lightweight structural parsing of Verilog sources.

Only module headers, port declarations, literal ranges, parameters with literal
defaults and module instantiations are recognized. Everything else is left to
the simulator and synthesis backends.
"""

from __future__ import annotations

import ast
import enum
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .errors import AmbiguousTopError, UnsupportedConstructError, VerilogParseError
from .model import RtlDesign

KEYWORDS = frozenset(
    """
    always always_comb always_ff always_latch and assign automatic begin buf bufif0 bufif1 case casex casez
    cmos deassign default defparam disable edge else end endcase endfunction endgenerate endmodule
    endprimitive endspecify endtable endtask event for force forever fork function generate genvar
    highz0 highz1 if ifnone initial inout input integer join large localparam logic macromodule medium
    module nand negedge nmos nor not notif0 notif1 or output parameter pmos posedge primitive pull0
    pull1 pulldown pullup rcmos real realtime reg release repeat rnmos rpmos rtran rtranif0 rtranif1
    scalared signed small specify specparam strong0 strong1 supply0 supply1 table task time tran
    tranif0 tranif1 tri tri0 tri1 triand trior trireg unsigned vectored wait wand weak0 weak1 while
    wire wor xnor xor bit byte int shortint longint var interface endinterface modport typedef struct
    enum packed unique priority return break continue import export package endpackage
    """.split()
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<directive>`[A-Za-z_]\w*)
  | (?P<string>"(?:\\.|[^"\\])*")
  | (?P<number>(?:\d[\d_]*)?'[sS]?[bBoOdDhH]\s*[0-9a-fA-FxXzZ_?]+|\d[\d_]*(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<sysname>\$[A-Za-z_]\w*)
  | (?P<ident>[A-Za-z_][\w$]*|\\\S+)
  | (?P<op><<<|>>>|===|!==|==|!=|<=|>=|&&|\|\||<<|>>|~&|~\||~\^|\^~|\*\*|->|\+:|-:|[-+*/%<>&|^~!?:=()\[\]{};,.@#'])
    """,
    re.VERBOSE,
)

_COMMENT_RE = re.compile(r"//[^\n]*|/\*.*?\*/|\(\*(?!\)).*?\*\)|\"(?:\\.|[^\"\\])*\"", re.DOTALL)


def strip_comments(source: str) -> str:
    """Remove comments, attributes and string literals, keeping line structure."""

    def blank(match: re.Match) -> str:
        text = match.group(0)
        if text.startswith('"'):
            return '""'
        return "\n" * text.count("\n") or " "

    return _COMMENT_RE.sub(blank, source)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    start: int = field(default=-1, compare=False)


def tokenize(source: str, *, stripped: bool = False) -> list[Token]:
    text = source if stripped else strip_comments(source)
    tokens: list[Token] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise VerilogParseError(f"unexpected character {text[pos]!r} at offset {pos}")
        kind = match.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, match.group(0), pos))
        pos = match.end()
    return tokens


# ---------------------------------------------------------------------------
# Parameter and range evaluation

_SIZED_RE = re.compile(r"(\d[\d_]*)?'[sS]?([bBoOdDhH])\s*([0-9a-fA-F_]+)")
_BASES = {"b": 2, "o": 8, "d": 10, "h": 16}


def _literal_value(text: str) -> int:
    match = _SIZED_RE.fullmatch(text)
    if match:
        return int(match.group(3).replace("_", ""), _BASES[match.group(2).lower()])
    if re.fullmatch(r"\d[\d_]*", text):
        return int(text.replace("_", ""))
    raise UnsupportedConstructError(f"non-integer literal {text!r} in constant expression")


def _clog2(value: int) -> int:
    return max(0, (value - 1).bit_length())


def eval_constant(tokens: Sequence[Token], params: dict[str, int]) -> int:
    """Evaluate an integer constant expression over known parameter values."""
    parts: list[str] = []
    for tok in tokens:
        if tok.kind == "number":
            parts.append(str(_literal_value(tok.text)))
        elif tok.kind == "ident":
            if tok.text not in params:
                raise UnsupportedConstructError(f"width depends on unresolved name {tok.text!r}")
            parts.append(f"({params[tok.text]})")
        elif tok.kind == "sysname" and tok.text == "$clog2":
            parts.append("_clog2")
        elif tok.kind == "op" and tok.text in {"+", "-", "*", "/", "%", "(", ")", "<<", ">>", "**"}:
            parts.append("//" if tok.text == "/" else tok.text)
        else:
            raise UnsupportedConstructError(f"unsupported token {tok.text!r} in constant expression")
    expr = " ".join(parts)
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise UnsupportedConstructError(f"cannot evaluate constant expression {expr!r}") from exc
    allowed = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Add, ast.Sub, ast.Mult,
               ast.FloorDiv, ast.Mod, ast.LShift, ast.RShift, ast.Pow, ast.USub, ast.UAdd, ast.Call,
               ast.Name, ast.Load)
    for node in ast.walk(tree):
        if not isinstance(node, allowed):
            raise UnsupportedConstructError(f"cannot evaluate constant expression {expr!r}")
        if isinstance(node, ast.Name) and node.id != "_clog2":
            raise UnsupportedConstructError(f"cannot evaluate constant expression {expr!r}")
    try:
        value = eval(compile(tree, "<const>", "eval"), {"__builtins__": {}, "_clog2": _clog2})
    except (ArithmeticError, TypeError) as exc:
        raise UnsupportedConstructError(f"cannot evaluate constant expression {expr!r}") from exc
    return int(value)


def _split_top(tokens: Sequence[Token], sep: str) -> list[list[Token]]:
    """Split on ``sep`` at bracket depth zero."""
    groups: list[list[Token]] = [[]]
    depth = 0
    for tok in tokens:
        if tok.text in "([{" and tok.kind == "op":
            depth += 1
        elif tok.text in ")]}" and tok.kind == "op":
            depth -= 1
        if depth == 0 and tok.kind == "op" and tok.text == sep:
            groups.append([])
        else:
            groups[-1].append(tok)
    return groups


def _matching(tokens: Sequence[Token], start: int, open_: str = "(", close: str = ")") -> int:
    """Index of the bracket closing the one at ``start``."""
    depth = 0
    for i in range(start, len(tokens)):
        if tokens[i].kind == "op":
            if tokens[i].text == open_:
                depth += 1
            elif tokens[i].text == close:
                depth -= 1
                if depth == 0:
                    return i
    raise VerilogParseError(f"unbalanced {open_!r}")


def range_width(tokens: Sequence[Token], params: dict[str, int]) -> int:
    """Width of one ``[msb:lsb]`` range given its inner tokens."""
    halves = _split_top(tokens, ":")
    if len(halves) != 2:
        raise UnsupportedConstructError("range must have the form [msb:lsb]")
    msb = eval_constant(halves[0], params)
    lsb = eval_constant(halves[1], params)
    return abs(msb - lsb) + 1


# ---------------------------------------------------------------------------
# Modules


@dataclass(frozen=True)
class ModuleSpan:
    name: str
    header: list[Token]
    body: list[Token]


def split_modules(tokens: Sequence[Token]) -> list[ModuleSpan]:
    modules: list[ModuleSpan] = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok.kind == "ident" and tok.text in ("module", "macromodule"):
            if i + 1 >= len(tokens) or tokens[i + 1].kind != "ident":
                raise VerilogParseError("module keyword without a name")
            name = tokens[i + 1].text
            j = i + 2
            while j < len(tokens) and not (tokens[j].kind == "op" and tokens[j].text == ";"):
                if tokens[j].kind == "op" and tokens[j].text == "(":
                    j = _matching(tokens, j)
                j += 1
            if j >= len(tokens):
                raise VerilogParseError(f"module {name!r} header is not terminated")
            k = j + 1
            while k < len(tokens) and tokens[k].text != "endmodule":
                if tokens[k].text in ("module", "macromodule") and tokens[k].kind == "ident":
                    raise VerilogParseError(f"module {name!r} lacks endmodule")
                k += 1
            if k >= len(tokens):
                raise VerilogParseError(f"module {name!r} lacks endmodule")
            modules.append(ModuleSpan(name, list(tokens[i + 2 : j]), list(tokens[j + 1 : k])))
            i = k + 1
        elif tok.kind == "ident" and tok.text == "interface":
            raise UnsupportedConstructError("SystemVerilog interfaces are not supported")
        else:
            i += 1
    return modules


def instantiations(body: Sequence[Token]) -> list[tuple[str, str]]:
    """(module type, instance name) pairs found in a module body."""
    found: list[tuple[str, str]] = []
    n = len(body)
    for i, tok in enumerate(body):
        if tok.kind != "ident" or tok.text in KEYWORDS:
            continue
        if i > 0 and body[i - 1].kind == "op" and body[i - 1].text in {".", "#", "@", "`"}:
            continue
        j = i + 1
        if j < n and body[j].text == "#":
            if j + 1 < n and body[j + 1].text == "(":
                j = _matching(body, j + 1) + 1
            else:
                j += 2
        if j < n and body[j].kind == "ident" and body[j].text not in KEYWORDS:
            inst = body[j].text
            j += 1
            while j < n and body[j].text == "[":
                j = _matching(body, j, "[", "]") + 1
            if j < n and body[j].text == "(":
                found.append((tok.text, inst))
    return found


def module_names(source: str) -> list[str]:
    return [m.name for m in split_modules(tokenize(source))]


def unresolved_references(source: str) -> set[str]:
    """Module types instantiated but never defined in ``source``."""
    modules = split_modules(tokenize(source))
    defined = {m.name for m in modules}
    used = {mtype for m in modules for mtype, _ in instantiations(m.body)}
    return used - defined


def find_top(modules: Sequence[ModuleSpan], top: str | None = None) -> ModuleSpan:
    if not modules:
        raise VerilogParseError("source contains no module")
    by_name = {m.name: m for m in modules}
    if top is not None:
        if top not in by_name:
            raise VerilogParseError(f"configured top {top!r} is not defined")
        return by_name[top]
    instantiated = {mtype for m in modules for mtype, _ in instantiations(m.body)}
    roots = [m for m in modules if m.name not in instantiated]
    if len(roots) == 1:
        return roots[0]
    if not roots:
        raise VerilogParseError("every module is instantiated by another; hierarchy is cyclic")
    raise AmbiguousTopError("several candidate top modules: " + ", ".join(m.name for m in roots))


# ---------------------------------------------------------------------------
# Ports


class Direction(str, enum.Enum):
    INPUT = "input"
    OUTPUT = "output"
    INOUT = "inout"


@dataclass(frozen=True)
class PortInfo:
    name: str
    direction: Direction
    width: int = 1
    is_clock: bool = False
    is_reset: bool = False
    reset_active_low: bool = False

    def __post_init__(self) -> None:
        if self.width < 1:
            raise UnsupportedConstructError(f"port {self.name!r} has width {self.width}")
        if self.is_clock and self.is_reset:
            raise ValueError(f"port {self.name!r} cannot be both clock and reset")

    @property
    def signature(self) -> tuple[str, str, int]:
        return (self.name, self.direction.value, self.width)


@dataclass(frozen=True)
class ModuleInterface:
    top_module: str
    ports: tuple[PortInfo, ...]

    def __post_init__(self) -> None:
        names = [p.name for p in self.ports]
        if len(set(names)) != len(names):
            raise VerilogParseError(f"duplicate port names in {self.top_module!r}")
        if sum(p.is_clock for p in self.ports) > 1:
            raise ValueError("at most one port may be flagged as the clock")

    @property
    def is_sequential(self) -> bool:
        return any(p.is_clock for p in self.ports)

    @property
    def clock(self) -> PortInfo | None:
        return next((p for p in self.ports if p.is_clock), None)

    @property
    def reset(self) -> PortInfo | None:
        return next((p for p in self.ports if p.is_reset), None)

    @property
    def inputs(self) -> list[PortInfo]:
        return [p for p in self.ports if p.direction is Direction.INPUT]

    @property
    def outputs(self) -> list[PortInfo]:
        return [p for p in self.ports if p.direction is Direction.OUTPUT]

    @property
    def data_inputs(self) -> list[PortInfo]:
        return [p for p in self.inputs if not p.is_clock and not p.is_reset]

    def signature(self) -> frozenset[tuple[str, str, int]]:
        return frozenset(p.signature for p in self.ports)

    def summary(self) -> str:
        def fmt(ports: Iterable[PortInfo]) -> str:
            return ", ".join(f"{p.name}[{p.width}]" for p in ports) or "none"

        kind = "sequential" if self.is_sequential else "combinational"
        return f"module {self.top_module} ({kind}); inputs: {fmt(self.inputs)}; outputs: {fmt(self.outputs)}"


_NET_TYPES = {"wire", "reg", "logic", "var", "tri", "wand", "wor", "supply0", "supply1", "bit", "integer"}
_DIRECTIONS = {d.value: d for d in Direction}


def _collect_params(tokens: Sequence[Token], params: dict[str, int]) -> None:
    """Record ``name = literal-expr`` assignments from a parameter declaration."""
    for group in _split_top(tokens, ","):
        while group and group[0].kind == "ident" and (
            group[0].text in {"parameter", "localparam", "integer", "signed", "unsigned"}
        ):
            group = group[1:]
        while group and group[0].text == "[":
            group = group[_matching(group, 0, "[", "]") + 1 :]
        if len(group) >= 3 and group[0].kind == "ident" and group[1].text == "=":
            try:
                params[group[0].text] = eval_constant(group[2:], params)
            except UnsupportedConstructError:
                params.pop(group[0].text, None)


def _parse_decl(tokens: Sequence[Token], params: dict[str, int]) -> tuple[Direction | None, int | None, str]:
    """Parse ``[dir] [type] [signed] [range]* name``.

    Width is ``None`` when the declaration carries neither a type nor a range,
    so ANSI continuation ports can inherit it.
    """
    i = 0
    direction = None
    width = None
    if i < len(tokens) and tokens[i].text in _DIRECTIONS:
        direction = _DIRECTIONS[tokens[i].text]
        i += 1
    while i < len(tokens) and tokens[i].kind == "ident" and tokens[i].text in _NET_TYPES | {"signed", "unsigned"}:
        width = 32 if tokens[i].text == "integer" else (width or 1)
        i += 1
    ranges: list[int] = []
    while i < len(tokens) and tokens[i].text == "[":
        end = _matching(tokens, i, "[", "]")
        ranges.append(range_width(tokens[i + 1 : end], params))
        i = end + 1
    if i >= len(tokens) or tokens[i].kind != "ident" or tokens[i].text in KEYWORDS:
        raise UnsupportedConstructError("unsupported port declaration")
    name = tokens[i].text
    if i + 1 < len(tokens):
        raise UnsupportedConstructError(f"unpacked dimensions or trailing tokens on port {name!r}")
    if ranges:
        width = 1
        for r in ranges:
            width *= r
    if direction is not None and width is None:
        width = 1
    return direction, width, name


def _header_parts(header: Sequence[Token]) -> tuple[list[Token], list[Token] | None]:
    """Split a module header into its ``#(...)`` parameter list and ``(...)`` port list."""
    params: list[Token] = []
    ports: list[Token] | None = None
    i = 0
    while i < len(header):
        tok = header[i]
        if tok.text == "#" and i + 1 < len(header) and header[i + 1].text == "(":
            end = _matching(header, i + 1)
            params = list(header[i + 2 : end])
            i = end + 1
        elif tok.text == "(":
            end = _matching(header, i)
            ports = list(header[i + 1 : end])
            i = end + 1
        else:
            i += 1
    return params, ports


def _body_statements(body: Sequence[Token]) -> list[list[Token]]:
    statements: list[list[Token]] = [[]]
    depth = 0
    for tok in body:
        if tok.kind == "op" and tok.text in "([{":
            depth += 1
        elif tok.kind == "op" and tok.text in ")]}":
            depth -= 1
        if depth == 0 and tok.text == ";":
            statements.append([])
        else:
            statements[-1].append(tok)
    return [s for s in statements if s]


def module_parameters(span: ModuleSpan) -> dict[str, int]:
    header_params, _ = _header_parts(span.header)
    params: dict[str, int] = {}
    _collect_params(header_params, params)
    for stmt in _body_statements(span.body):
        if stmt[0].text in ("parameter", "localparam"):
            _collect_params(stmt[1:], params)
    return params


def _raw_ports(span: ModuleSpan) -> list[tuple[str, Direction, int]]:
    params = module_parameters(span)
    _, port_tokens = _header_parts(span.header)
    if not port_tokens:
        return []
    groups = [_strip_default(g) for g in _split_top(port_tokens, ",") if g]
    if any(g[0].text in _DIRECTIONS for g in groups):
        return _ansi_ports(groups, params)
    order = []
    for g in groups:
        if len(g) != 1 or g[0].kind != "ident":
            raise UnsupportedConstructError("non-ANSI port expressions are not supported")
        order.append(g[0].text)
    declared: dict[str, tuple[Direction, int]] = {}
    for stmt in _body_statements(span.body):
        if stmt[0].text not in _DIRECTIONS:
            continue
        first, *rest = (_strip_default(g) for g in _split_top(stmt, ","))
        direction, width, name = _parse_decl(first, params)
        declared[name] = (direction, width)
        for extra in rest:
            if len(extra) != 1 or extra[0].kind != "ident":
                raise UnsupportedConstructError("unsupported port declaration list")
            declared[extra[0].text] = (direction, width)
    ports = []
    for name in order:
        if name not in declared:
            raise VerilogParseError(f"port {name!r} has no direction declaration")
        direction, width = declared[name]
        ports.append((name, direction, width))
    return ports


def _ansi_ports(groups: list[list[Token]], params: dict[str, int]) -> list[tuple[str, Direction, int]]:
    ports: list[tuple[str, Direction, int]] = []
    prev: tuple[Direction, int] | None = None
    for g in groups:
        if len(g) > 1 and g[0].kind == "ident" and g[0].text not in _DIRECTIONS and g[0].text not in _NET_TYPES:
            raise UnsupportedConstructError(f"unsupported port type {g[0].text!r} (interfaces are not supported)")
        direction, width, name = _parse_decl(g, params)
        if direction is None:
            if prev is None:
                raise VerilogParseError(f"port {name!r} lacks a direction")
            direction = prev[0]
            width = prev[1] if width is None else width
        prev = (direction, width)
        ports.append((name, direction, width))
    return ports


def _strip_default(group: list[Token]) -> list[Token]:
    for i, tok in enumerate(group):
        if tok.text == "=":
            return group[:i]
    return group


# ---------------------------------------------------------------------------
# Clock / reset heuristics

CLOCK_TOKENS = frozenset({"clk", "clock", "ck"})
RESET_TOKENS = frozenset({"rst", "reset", "clr", "clear"})
_CAMEL_RE = re.compile(r"[A-Z]+(?![a-z])|[A-Z]?[a-z]+|\d+")


def name_segments(name: str) -> list[str]:
    """Split an identifier on underscores and camel-case humps, lowercased, digits dropped."""
    segments: list[str] = []
    for part in name.split("_"):
        if not part:
            continue
        pieces = _CAMEL_RE.findall(part) if part != part.lower() else [part]
        for piece in pieces:
            piece = piece.lower().rstrip("0123456789")
            if piece:
                segments.append(piece)
    return segments


def is_clock_name(name: str) -> bool:
    return any(seg in CLOCK_TOKENS for seg in name_segments(name))


def _reset_segment(seg: str) -> tuple[bool, bool]:
    """(is reset token, negated form) for one name segment."""
    if seg in RESET_TOKENS:
        return True, False
    if seg.startswith("n") and seg[1:] in RESET_TOKENS:
        return True, True
    if seg.endswith("n") and seg[:-1] in RESET_TOKENS:
        return True, True
    return False, False


def reset_name_info(name: str) -> tuple[bool, bool]:
    """(looks like a reset, name says active-low)."""
    segments = name_segments(name)
    hit = False
    negated = False
    for seg in segments:
        is_rst, neg = _reset_segment(seg)
        if is_rst:
            hit = True
            negated = negated or neg
    if hit:
        lowered = name.lower()
        if lowered.endswith(("_n", "_b")) or (segments and segments[0] == "n"):
            negated = True
    return hit, negated


_EDGE_RE = re.compile(r"\b(posedge|negedge)\s+([A-Za-z_][\w$]*)")


def edge_usage(source: str) -> tuple[set[str], set[str]]:
    pos: set[str] = set()
    neg: set[str] = set()
    for kind, name in _EDGE_RE.findall(strip_comments(source)):
        (pos if kind == "posedge" else neg).add(name)
    return pos, neg


def detect_clock_reset(ports: Sequence[PortInfo], source: str) -> list[PortInfo]:
    """Flag the clock and reset inputs of ``ports`` using name and edge heuristics."""
    pos, neg = edge_usage(source)
    edged = pos | neg
    plain = [replace(p, is_clock=False, is_reset=False, reset_active_low=False) for p in ports]
    result: list[PortInfo] = []
    resets: set[str] = set()
    for p in plain:
        if p.direction is Direction.INPUT and p.width == 1 and not is_clock_name(p.name):
            hit, negated = reset_name_info(p.name)
            if hit:
                low = negated or (p.name in neg and p.name not in pos)
                p = replace(p, is_reset=True, reset_active_low=low)
                resets.add(p.name)
        result.append(p)
    clock_name = next(
        (p.name for p in result if p.direction is Direction.INPUT and p.width == 1 and is_clock_name(p.name)),
        None,
    )
    if clock_name is None:
        clock_name = next(
            (
                p.name
                for p in result
                if p.direction is Direction.INPUT and p.name in edged and p.name not in resets and p.width == 1
            ),
            None,
        )
    if clock_name is not None:
        result = [replace(p, is_clock=True) if p.name == clock_name else p for p in result]
    return result


def extract_interface(design: RtlDesign | str, top: str | None = None) -> ModuleInterface:
    """Interface of the top module: the one no other module instantiates."""
    if isinstance(design, RtlDesign):
        source, top = design.source, top or design.top_module
    else:
        source = design
    modules = split_modules(tokenize(source))
    span = find_top(modules, top)
    raw = _raw_ports(span)
    ports = [PortInfo(name, direction, width) for name, direction, width in raw]
    flagged = detect_clock_reset(ports, _module_text(source, span.name))
    return ModuleInterface(span.name, tuple(flagged))


def _module_text(source: str, name: str) -> str:
    stripped = strip_comments(source)
    match = re.search(rf"\b(?:macro)?module\s+{re.escape(name)}\b.*?\bendmodule\b", stripped, re.DOTALL)
    return match.group(0) if match else stripped


def rename_modules(source: str, suffix: str) -> tuple[str, dict[str, str]]:
    """Append ``suffix`` to every module defined in ``source``; comments and strings are left alone."""
    names = module_names(source)
    mapping = {name: f"{name}{suffix}" for name in names}
    if not names:
        return source, mapping
    pattern = re.compile(r"(?<![\w$.])(" + "|".join(re.escape(n) for n in sorted(names, key=len, reverse=True)) + r")(?![\w$])")
    pieces = []
    pos = 0
    for match in _COMMENT_RE.finditer(source):
        pieces.append(pattern.sub(lambda m: mapping[m.group(1)], source[pos : match.start()]))
        pieces.append(match.group(0))
        pos = match.end()
    pieces.append(pattern.sub(lambda m: mapping[m.group(1)], source[pos:]))
    return "".join(pieces), mapping


def emit_module(iface: ModuleInterface) -> str:
    """Synthesize a minimal module whose parsed interface equals ``iface``."""
    decls = []
    for p in iface.ports:
        rng = f" [{p.width - 1}:0]" if p.width > 1 else ""
        decls.append(f"  {p.direction.value} wire{rng} {p.name}")
    lines = [f"module {iface.top_module} (", ",\n".join(decls), ");"]
    clock = iface.clock
    reset = iface.reset
    if clock is not None:
        sens = f"posedge {clock.name}"
        if reset is not None:
            sens += f" or {'negedge' if reset.reset_active_low else 'posedge'} {reset.name}"
        lines.append(f"  always @({sens}) begin end")
    elif reset is not None:
        lines.append(f"  always @({'negedge' if reset.reset_active_low else 'posedge'} {reset.name}) begin end")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Operator sites

OPERATOR_CLASSES = {
    "*": "mul",
    "/": "div",
    "%": "div",
    "+": "add",
    "-": "add",
    "<<": "shift",
    ">>": "shift",
    "<<<": "shift",
    ">>>": "shift",
    "<": "compare",
    ">": "compare",
    "<=": "compare",
    ">=": "compare",
    "==": "compare",
    "!=": "compare",
    "===": "compare",
    "!==": "compare",
    "&": "bitwise",
    "|": "bitwise",
    "^": "bitwise",
    "~": "bitwise",
    "~&": "bitwise",
    "~|": "bitwise",
    "~^": "bitwise",
    "^~": "bitwise",
    "&&": "bitwise",
    "||": "bitwise",
    "!": "bitwise",
}

_STATEMENT_RESET = {"begin", "end", "else", "endcase", "fork", "join", "generate", "endgenerate"}


@dataclass(frozen=True)
class OperatorSite:
    index: int
    text: str
    kind: str
    statement: int
    paren_depth: int


def operator_sites(tokens: Sequence[Token]) -> list[OperatorSite]:
    """Hardware operators in a token stream.

    Skipped: anything inside ``[...]`` (index/range arithmetic), parameter
    declarations, ``#(...)`` parameter lists and delays, and ``@(...)``
    sensitivity lists. A ``<=`` at parenthesis depth zero that is the first
    assignment operator of its statement is a non-blocking assignment, not a
    comparison.
    """
    sites: list[OperatorSite] = []
    bracket = 0
    paren = 0
    statement = 0
    assigned = False
    skip_until_semicolon = False
    i = 0
    n = len(tokens)
    while i < n:
        tok = tokens[i]
        text = tok.text
        if tok.kind == "ident":
            if text in ("parameter", "localparam", "defparam", "specparam"):
                skip_until_semicolon = True
            elif text in _STATEMENT_RESET and paren == 0:
                assigned = False
            i += 1
            continue
        if tok.kind != "op":
            i += 1
            continue
        if text in ("#", "@") and i + 1 < n and tokens[i + 1].text == "(":
            i = _matching(tokens, i + 1) + 1
            continue
        if text == "#":
            i += 2
            continue
        if text == "@":
            i += 2 if i + 1 < n else 1
            continue
        if text == "[":
            bracket += 1
        elif text == "]":
            bracket -= 1
        elif text in "({":
            paren += 1
        elif text in ")}":
            paren -= 1
        elif text == ";":
            if paren == 0:
                statement += 1
                assigned = False
                skip_until_semicolon = False
        elif text == "=" and paren == 0 and bracket == 0:
            assigned = True
        elif text == "<=" and paren == 0 and bracket == 0 and not assigned:
            assigned = True
        elif text in OPERATOR_CLASSES and bracket == 0 and not skip_until_semicolon:
            sites.append(OperatorSite(i, text, OPERATOR_CLASSES[text], statement, paren))
        i += 1
    return sites


@dataclass(frozen=True)
class RegDeclaration:
    name: str
    bits: int


def reg_declarations(source: str) -> list[RegDeclaration]:
    """Every ``reg`` variable with its total bit count (packed width times array depth)."""
    decls: list[RegDeclaration] = []
    for span in split_modules(tokenize(source)):
        params = module_parameters(span)
        _, port_tokens = _header_parts(span.header)
        candidates = [_strip_default(g) for g in _split_top(port_tokens or [], ",")]
        candidates += [s for s in _body_statements(span.body)]
        for group in candidates:
            texts = [t.text for t in group]
            if "reg" not in texts[:3]:
                continue
            start = texts.index("reg") + 1
            rest = list(group[start:])
            width = 1
            while rest and rest[0].kind == "ident" and rest[0].text in ("signed", "unsigned"):
                rest = rest[1:]
            while rest and rest[0].text == "[":
                end = _matching(rest, 0, "[", "]")
                width *= _safe_width(rest[1:end], params)
                rest = rest[end + 1 :]
            for item in _split_top(rest, ","):
                item = _strip_default(item)
                if not item or item[0].kind != "ident":
                    continue
                bits = width
                tail = item[1:]
                while tail and tail[0].text == "[":
                    end = _matching(tail, 0, "[", "]")
                    bits *= _safe_width(tail[1:end], params)
                    tail = tail[end + 1 :]
                decls.append(RegDeclaration(item[0].text, bits))
    return decls


def _safe_width(tokens: Sequence[Token], params: dict[str, int]) -> int:
    try:
        return range_width(tokens, params)
    except UnsupportedConstructError:
        return 1
