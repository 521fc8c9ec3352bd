"""PPA measurement behind one adapter interface.

Two adapters ship: :class:`MockSynthesizer`, a deterministic proxy built from
operator and register tokens, and :class:`YosysSynthesizer`, which runs Yosys
(optionally followed by OpenSTA) as external processes.
"""

from __future__ import annotations

import enum
import logging
import os
import re
import shutil
import subprocess
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from .errors import ReportParseError, ToolTimeoutError, ToolUnavailableError, VerilogParseError
from .model import Metric, PpaMetrics, RtlDesign
from .verilog import (
    extract_interface,
    operator_sites,
    reg_declarations,
    tokenize,
    unresolved_references,
)

log = logging.getLogger(__name__)


class Flow(str, enum.Enum):
    LIGHTWEIGHT = "lightweight"
    ACCURATE = "accurate"


@dataclass(frozen=True)
class SynthesisConstraints:
    target_library: str = "freepdk45"
    clock_period: float | None = None
    flow: Flow = Flow.ACCURATE
    target: Metric = Metric.AREA

    def __post_init__(self) -> None:
        if self.clock_period is not None and self.clock_period <= 0:
            raise ValueError("clock_period must be positive")
        object.__setattr__(self, "flow", Flow(self.flow))
        object.__setattr__(self, "target", Metric.parse(self.target))


class SynthesisAdapter(Protocol):
    name: str
    version: str

    def check_synthesizable(self, design: RtlDesign) -> bool: ...

    def synthesize(self, design: RtlDesign, constraints: SynthesisConstraints) -> PpaMetrics: ...


def check_synthesizable(design: RtlDesign, adapter: SynthesisAdapter) -> bool:
    return adapter.check_synthesizable(design)


def synthesize(design: RtlDesign, constraints: SynthesisConstraints, adapter: SynthesisAdapter) -> PpaMetrics:
    return adapter.synthesize(design, constraints)


# ---------------------------------------------------------------------------
# Report parsing

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def _unique(metric: str, values: list[float]) -> float:
    if not values:
        raise ReportParseError(metric)
    distinct = sorted(set(values))
    if len(distinct) > 1:
        raise ReportParseError(metric, f"conflicting {metric} values in report: {distinct}")
    return distinct[0]


def _parse_mock(raw: str) -> tuple[float, float, float]:
    found: dict[str, list[float]] = {"area": [], "delay": [], "power": []}
    for line in raw.splitlines():
        match = re.match(rf"^\s*(area|delay|power)\s*[:=]\s*({_NUM})\s*$", line)
        if match:
            found[match.group(1)].append(float(match.group(2)))
    return tuple(_unique(k, found[k]) for k in ("area", "delay", "power"))  # type: ignore[return-value]


_AREA_RE = re.compile(rf"Chip area for (?:top )?module(?:\s+'?\\?[\w$]*'?)?\s*:\s*({_NUM})")
_ARRIVAL_RE = re.compile(rf"^\s*({_NUM})\s+data arrival time\s*$", re.MULTILINE)
_POWER_RE = re.compile(
    rf"^\s*Total\s+({_NUM})\s+({_NUM})\s+({_NUM})\s+({_NUM})\s+{_NUM}\s*%\s*$", re.MULTILINE
)


def _parse_yosys_sta(raw: str) -> tuple[float, float, float]:
    area = _unique("area", [float(v) for v in _AREA_RE.findall(raw)])
    delay = _unique("delay", [abs(float(v)) for v in _ARRIVAL_RE.findall(raw)])
    # dynamic power = internal + switching, reported in W
    power = _unique("power", [(float(i) + float(s)) * 1e3 for i, s, _leak, _tot in _POWER_RE.findall(raw)])
    return area, delay, power


REPORT_SCHEMAS = {"mock": _parse_mock, "yosys-sta": _parse_yosys_sta}


def parse_report(raw: str, schema: str, target: Metric | str = Metric.AREA) -> PpaMetrics:
    """Extract area, delay and power from a tool report of the named schema."""
    if not raw.strip():
        raise ReportParseError("area", "report is empty")
    try:
        parser = REPORT_SCHEMAS[schema]
    except KeyError:
        raise ValueError(f"unknown report schema {schema!r}; known: {sorted(REPORT_SCHEMAS)}") from None
    area, delay, power = parser(raw)
    return PpaMetrics(area, delay, power, Metric.parse(target))


# ---------------------------------------------------------------------------
# Mock adapter

AREA_WEIGHTS = {"mul": 32, "div": 64, "add": 8, "shift": 4, "compare": 3, "bitwise": 1}
REG_BIT_WEIGHT = 2
DELAY_LATENCIES = {"mul": 1.0, "div": 2.0, "add": 0.5, "shift": 0.2, "compare": 0.3, "bitwise": 0.1}
NESTING_DELAY = 0.1
POWER_PER_AREA = 0.01


def _balanced(source: str) -> bool:
    tokens = tokenize(source)
    depth = {"(": 0, "[": 0, "{": 0}
    closers = {")": "(", "]": "[", "}": "{"}
    blocks = 0
    cases = 0
    for tok in tokens:
        if tok.kind == "op":
            if tok.text in depth:
                depth[tok.text] += 1
            elif tok.text in closers:
                depth[closers[tok.text]] -= 1
                if depth[closers[tok.text]] < 0:
                    return False
        elif tok.kind == "ident":
            if tok.text in ("begin", "fork"):
                blocks += 1
            elif tok.text in ("end", "join"):
                blocks -= 1
                if blocks < 0:
                    return False
            elif tok.text in ("case", "casex", "casez"):
                cases += 1
            elif tok.text == "endcase":
                cases -= 1
    return blocks == 0 and cases == 0 and all(v == 0 for v in depth.values())


class MockSynthesizer:
    """Deterministic proxy PPA from the operator/register token multiset.

    area  = sum of AREA_WEIGHTS over hardware operators + 2 per declared reg bit
    delay = max over statements of (sum of operator latencies + 0.1 * max paren depth)
    power = 0.01 * area

    Operators inside ``[...]``, parameter declarations and sensitivity lists are
    ignored. The numbers are a stand-in for tests and offline runs only.
    """

    name = "mock"
    version = "1"

    def __init__(self, unsynthesizable_markers: tuple[str, ...] = ()):
        self.unsynthesizable_markers = tuple(unsynthesizable_markers)

    def check_synthesizable(self, design: RtlDesign) -> bool:
        if any(marker in design.source for marker in self.unsynthesizable_markers):
            return False
        try:
            if not _balanced(design.source):
                return False
            if unresolved_references(design.source):
                return False
            extract_interface(design)
        except VerilogParseError:
            return False
        return True

    def report(self, design: RtlDesign) -> str:
        tokens = tokenize(design.source)
        sites = operator_sites(tokens)
        area = float(sum(AREA_WEIGHTS[s.kind] for s in sites))
        area += REG_BIT_WEIGHT * sum(d.bits for d in reg_declarations(design.source))
        per_statement: dict[int, float] = {}
        depth: dict[int, int] = {}
        for s in sites:
            per_statement[s.statement] = per_statement.get(s.statement, 0.0) + DELAY_LATENCIES[s.kind]
            depth[s.statement] = max(depth.get(s.statement, 0), s.paren_depth)
        delay = max((v + NESTING_DELAY * depth[k] for k, v in per_statement.items()), default=0.0)
        power = POWER_PER_AREA * area
        return f"area: {area:.6f}\ndelay: {round(delay, 6):.6f}\npower: {round(power, 6):.6f}\n"

    def synthesize(self, design: RtlDesign, constraints: SynthesisConstraints) -> PpaMetrics:
        if not self.check_synthesizable(design):
            raise VerilogParseError(f"design {design.design_id!r} does not elaborate under the mock flow")
        return parse_report(self.report(design), "mock", constraints.target)


# ---------------------------------------------------------------------------
# Yosys / OpenSTA adapter


def find_yosys() -> str | None:
    for candidate in ("yosys", "yowasp-yosys"):
        path = shutil.which(candidate)
        if path:
            return path
    return None


@dataclass
class YosysSynthesizer:
    """Yosys for elaboration/mapping and area; OpenSTA for delay and power.

    The accurate flow needs a Liberty file (``liberty``) and an ``sta``
    binary. Reports are written to ``work_dir`` when given, else to a
    temporary directory that is removed afterwards.
    """

    liberty: str | None = None
    yosys: str | None = None
    sta: str | None = None
    timeout: float = 600.0
    work_dir: str | None = None
    max_concurrent: int = 2
    name: str = "yosys"

    def __post_init__(self) -> None:
        self.yosys = self.yosys or find_yosys()
        self.sta = self.sta or shutil.which("sta")
        self._slots = threading.BoundedSemaphore(self.max_concurrent)

    @property
    def version(self) -> str:
        if not self.yosys:
            return "unavailable"
        out = self._run([self.yosys, "-V"], cwd=None).stdout
        return out.strip().splitlines()[0] if out.strip() else "unknown"

    def _run(self, cmd: list[str], cwd: str | None) -> subprocess.CompletedProcess:
        try:
            with self._slots:
                return subprocess.run(cmd, cwd=cwd, capture_output=True, text=True, timeout=self.timeout)
        except FileNotFoundError as exc:
            raise ToolUnavailableError(f"{cmd[0]} not found") from exc
        except subprocess.TimeoutExpired as exc:
            raise ToolTimeoutError(f"{Path(cmd[0]).name} exceeded {self.timeout}s") from exc

    def _require_yosys(self) -> str:
        if not self.yosys:
            raise ToolUnavailableError("no yosys binary found (tried yosys, yowasp-yosys)")
        return self.yosys

    def _workspace(self, design: RtlDesign):
        if self.work_dir:
            path = Path(self.work_dir) / re.sub(r"[^\w.-]", "_", design.design_id)
            path.mkdir(parents=True, exist_ok=True)
            return _Keep(str(path))
        return tempfile.TemporaryDirectory(prefix="rtlppa-synth-")

    def check_synthesizable(self, design: RtlDesign) -> bool:
        yosys = self._require_yosys()
        try:
            top = extract_interface(design).top_module
        except VerilogParseError:
            return False
        with self._workspace(design) as wd:
            Path(wd, "design.v").write_text(design.source)
            script = f"read_verilog -sv design.v; hierarchy -check -top {top}; synth -flatten -top {top}"
            result = self._run([yosys, "-q", "-p", script], cwd=wd)
            Path(wd, "lightweight.log").write_text(result.stdout + result.stderr)
            return result.returncode == 0

    def synthesize(self, design: RtlDesign, constraints: SynthesisConstraints) -> PpaMetrics:
        yosys = self._require_yosys()
        top = extract_interface(design).top_module
        liberty = self.liberty or os.environ.get("RTLPPA_LIBERTY")
        if not liberty:
            raise ToolUnavailableError("accurate flow needs a Liberty file (config synthesis.liberty or RTLPPA_LIBERTY)")
        if not self.sta:
            raise ToolUnavailableError("accurate flow needs OpenSTA ('sta') on PATH")
        with self._workspace(design) as wd:
            Path(wd, "design.v").write_text(design.source)
            abc_delay = f" -D {constraints.clock_period * 1000:g}" if constraints.clock_period else ""
            script = (
                f"read_verilog -sv design.v; synth -flatten -top {top}; "
                f"dfflibmap -liberty {liberty}; abc -liberty {liberty}{abc_delay}; opt_clean; "
                f"tee -o stat.rpt stat -liberty {liberty}; write_verilog -noattr netlist.v"
            )
            result = self._run([yosys, "-q", "-p", script], cwd=wd)
            if result.returncode != 0:
                raise VerilogParseError(f"yosys failed on {design.design_id!r}: {result.stderr.strip()[:500]}")
            iface = extract_interface(design)
            clock = iface.clock.name if iface.clock else None
            period = constraints.clock_period or 0.0
            sta_lines = [
                f"read_liberty {liberty}",
                "read_verilog netlist.v",
                f"link_design {top}",
            ]
            if clock and period:
                sta_lines.append(f"create_clock -name core_clk -period {period:g} [get_ports {clock}]")
                sta_lines.append("report_checks -path_delay max -format full")
            else:
                sta_lines.append("report_checks -path_delay max -unconstrained -format full")
            sta_lines += ["report_power", "exit"]
            Path(wd, "sta.tcl").write_text("\n".join(sta_lines) + "\n")
            sta = self._run([self.sta, "-no_splash", "-exit", "sta.tcl"], cwd=wd)
            Path(wd, "sta.rpt").write_text(sta.stdout)
            raw = Path(wd, "stat.rpt").read_text() + "\n" + sta.stdout
            return parse_report(raw, "yosys-sta", constraints.target)


class _Keep:
    def __init__(self, path: str):
        self.path = path

    def __enter__(self) -> str:
        return self.path

    def __exit__(self, *exc) -> None:
        return None


SYNTHESIZERS = {"mock": MockSynthesizer, "yosys": YosysSynthesizer}


def make_synthesizer(name: str, **options) -> SynthesisAdapter:
    try:
        factory = SYNTHESIZERS[name]
    except KeyError:
        raise ValueError(f"unknown synthesizer {name!r}; known: {sorted(SYNTHESIZERS)}") from None
    return factory(**options)


__all__ = [
    "AREA_WEIGHTS",
    "Flow",
    "MockSynthesizer",
    "REPORT_SCHEMAS",
    "SynthesisAdapter",
    "SynthesisConstraints",
    "YosysSynthesizer",
    "check_synthesizable",
    "make_synthesizer",
    "parse_report",
    "synthesize",
]
