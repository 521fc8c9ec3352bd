"""Comparison testbenches and simulation-based equivalence verdicts.

Stimulus comes from xorshift64 (shifts 13, 7, 17) running inside the
testbench. Each sequence starts from its own state, derived from the run seed
with splitmix64, so stimulus is reproducible across simulators and
implementations. Input ports are filled from consecutive 64-bit draws, LSB
first, in declaration order.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import TestbenchError, VerilogParseError
from .model import EquivalenceVerdict, RtlDesign
from .verilog import Direction, ModuleInterface, extract_interface, rename_modules

log = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

TOKEN_RE = re.compile(r"^(PASS|FAIL|MISMATCH\s+\S+\s+\d+\s+\S+\s+\S+)$")


@dataclass(frozen=True)
class StimulusConfig:
    num_sequences: int = 5
    cycles_per_sequence: int = 1000
    reset_cycles: int = 5
    seed: int = 42
    settle_time: int = 10
    half_period: int = 5

    def __post_init__(self) -> None:
        for name in ("num_sequences", "cycles_per_sequence", "reset_cycles", "settle_time", "half_period"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


def splitmix64(value: int) -> int:
    z = value & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def sequence_seed(seed: int, index: int) -> int:
    """Non-zero xorshift state for sequence ``index`` of a run seeded with ``seed``."""
    state = splitmix64((seed + (index + 1) * GOLDEN_GAMMA) & MASK64)
    return state or GOLDEN_GAMMA


class Xorshift64:
    """Python twin of the generator emitted into testbenches."""

    def __init__(self, state: int):
        if state & MASK64 == 0:
            raise ValueError("xorshift64 state must be non-zero")
        self.state = state & MASK64

    def next(self) -> int:
        x = self.state
        x ^= (x << 13) & MASK64
        x ^= x >> 7
        x ^= (x << 17) & MASK64
        self.state = x
        return x


def stimulus_ports(iface: ModuleInterface) -> list:
    """Inputs driven with random data: everything except the clock and the primary reset.

    Further reset-like inputs (a synchronous ``clear`` next to ``rst``) are
    randomized too, so their behavior is compared rather than held constant.
    """
    clock, reset = iface.clock, iface.reset
    return [p for p in iface.inputs if p is not clock and p is not reset]


def stimulus_vectors(iface: ModuleInterface, cfg: StimulusConfig, sequence: int, count: int) -> list[dict[str, int]]:
    """The first ``count`` data-input vectors a testbench applies in ``sequence``.

    Mirrors the emitted Verilog; handy for debugging a reported mismatch.
    For sequential designs the draws made during reset come first.
    """
    ports = stimulus_ports(iface)
    total = sum(p.width for p in ports)
    words = max(1, -(-total // 64))
    rng = Xorshift64(sequence_seed(cfg.seed, sequence))
    vectors = []
    for _ in range(count):
        pool = 0
        for w in range(words):
            pool |= rng.next() << (64 * w)
        vec = {}
        offset = 0
        for p in ports:
            vec[p.name] = (pool >> offset) & ((1 << p.width) - 1)
            offset += p.width
        vectors.append(vec)
    return vectors


def _rng(width: int) -> str:
    return f"[{width - 1}:0] " if width > 1 else ""


def generate_testbench(
    iface: ModuleInterface,
    cfg: StimulusConfig = StimulusConfig(),
    *,
    module_a: str | None = None,
    module_b: str | None = None,
) -> str:
    """Verilog testbench co-simulating ``dut_a`` (original) and ``dut_b`` (rewrite)."""
    if any(p.direction is Direction.INOUT for p in iface.ports):
        raise TestbenchError(f"{iface.top_module}: inout ports are not supported")
    outputs = iface.outputs
    if not outputs:
        raise TestbenchError(f"{iface.top_module}: no outputs to compare")
    module_a = module_a or f"{iface.top_module}__a"
    module_b = module_b or f"{iface.top_module}__b"
    clock = iface.clock
    reset = iface.reset
    data = stimulus_ports(iface)
    total = sum(p.width for p in data)
    words = max(1, -(-total // 64))

    lines = ["`timescale 1ns/1ps", "module rtlppa_tb;"]
    for p in iface.inputs:
        lines.append(f"  reg {_rng(p.width)}in_{p.name};")
    for p in outputs:
        lines.append(f"  wire {_rng(p.width)}a_{p.name};")
        lines.append(f"  wire {_rng(p.width)}b_{p.name};")
    lines += [
        "  reg [63:0] tb_state;",
        f"  reg [{64 * words - 1}:0] tb_pool;",
        "  integer tb_seq, tb_cyc, tb_word, tb_cycle_total;",
        "",
    ]
    for inst, mod, prefix in (("dut_a", module_a, "a_"), ("dut_b", module_b, "b_")):
        conns = []
        for p in iface.ports:
            conns.append(f".{p.name}(in_{p.name})" if p.direction is Direction.INPUT else f".{p.name}({prefix}{p.name})")
        lines.append(f"  {mod} {inst} (" + ", ".join(conns) + ");")
    lines += [
        "",
        "  task tb_next;",
        "    begin",
        "      tb_state = tb_state ^ (tb_state << 13);",
        "      tb_state = tb_state ^ (tb_state >> 7);",
        "      tb_state = tb_state ^ (tb_state << 17);",
        "    end",
        "  endtask",
        "",
        "  task tb_drive;",
        "    begin",
        f"      for (tb_word = 0; tb_word < {words}; tb_word = tb_word + 1) begin",
        "        tb_next;",
        "        tb_pool[tb_word*64 +: 64] = tb_state;",
        "      end",
    ]
    offset = 0
    for p in data:
        lines.append(f"      in_{p.name} = tb_pool[{offset} +: {p.width}];")
        offset += p.width
    lines += ["    end", "  endtask", "", "  task tb_compare;", "    begin"]
    for p in outputs:
        lines += [
            f"      if (a_{p.name} !== b_{p.name}) begin",
            f'        $display("MISMATCH {p.name} %0d %h %h", tb_cycle_total, a_{p.name}, b_{p.name});',
            '        $display("FAIL");',
            "        $finish;",
            "      end",
        ]
    lines += ["    end", "  endtask", ""]

    seeds = [sequence_seed(cfg.seed, i) for i in range(cfg.num_sequences)]
    seed_case = ["      case (tb_seq)"]
    for i, s in enumerate(seeds):
        seed_case.append(f"        {i}: tb_state = 64'h{s:016x};")
    seed_case += ["        default: tb_state = 64'h0;", "      endcase"]

    active = inactive = None
    if reset is not None:
        active, inactive = ("1'b0", "1'b1") if reset.reset_active_low else ("1'b1", "1'b0")

    body = ["  initial begin", "    tb_cycle_total = 0;"]
    for p in data:
        body.append(f"    in_{p.name} = 0;")
    if clock is not None:
        lines += [f"  initial in_{clock.name} = 1'b0;", f"  always #{cfg.half_period} in_{clock.name} = ~in_{clock.name};", ""]
        if reset is not None:
            body.append(f"    in_{reset.name} = {active};")
        body += [f"    for (tb_seq = 0; tb_seq < {cfg.num_sequences}; tb_seq = tb_seq + 1) begin", *seed_case]
        if reset is not None:
            body += [
                f"      in_{reset.name} = {active};",
                f"      repeat ({cfg.reset_cycles}) begin",
                f"        @(negedge in_{clock.name});",
                "        tb_drive;",
                "      end",
                f"      @(negedge in_{clock.name});",
                f"      in_{reset.name} = {inactive};",
            ]
        else:
            body.append(f"      @(negedge in_{clock.name});")
        body += [
            "      tb_drive;",
            f"      for (tb_cyc = 0; tb_cyc < {cfg.cycles_per_sequence}; tb_cyc = tb_cyc + 1) begin",
            f"        @(negedge in_{clock.name});",
            "        tb_compare;",
            "        tb_cycle_total = tb_cycle_total + 1;",
            "        tb_drive;",
            "      end",
            "    end",
        ]
    else:
        if reset is not None:
            body += [
                f"    in_{reset.name} = {active};",
                f"    #{cfg.settle_time};",
                f"    in_{reset.name} = {inactive};",
            ]
        body += [f"    for (tb_seq = 0; tb_seq < {cfg.num_sequences}; tb_seq = tb_seq + 1) begin", *seed_case]
        body += [
            f"      for (tb_cyc = 0; tb_cyc < {cfg.cycles_per_sequence}; tb_cyc = tb_cyc + 1) begin",
            "        tb_drive;",
            f"        #{cfg.settle_time};",
            "        tb_compare;",
            "        tb_cycle_total = tb_cycle_total + 1;",
            "      end",
            "    end",
        ]
    body += ['    $display("PASS");', "    $finish;", "  end"]
    lines += body
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SimulationResult:
    """Outcome of one simulator run.

    ``status`` is ``ok`` when the testbench ran to completion or ``$finish``;
    otherwise ``compile_error``, ``timeout`` or ``runtime_error``.
    """

    status: str
    tokens: tuple[str, ...] = ()
    log: str = ""
    coverage: float | None = None

    @classmethod
    def from_output(cls, output: str, status: str = "ok", coverage: float | None = None) -> "SimulationResult":
        tokens = tuple(line.strip() for line in output.splitlines() if TOKEN_RE.match(line.strip()))
        return cls(status, tokens, output, coverage)


def verdict_from_result(result: SimulationResult) -> EquivalenceVerdict:
    if result.status != "ok":
        tail = result.log.strip().splitlines()[-3:]
        return EquivalenceVerdict.inconclusive(f"{result.status}: " + " | ".join(tail))
    mismatch = next((t for t in result.tokens if t.startswith("MISMATCH")), None)
    if mismatch is not None:
        return EquivalenceVerdict.inequivalent(mismatch)
    if "FAIL" in result.tokens:
        return EquivalenceVerdict.inequivalent("FAIL")
    if "PASS" in result.tokens:
        return EquivalenceVerdict.passed("PASS", result.coverage)
    return EquivalenceVerdict.inconclusive("simulation produced no verdict token")


def check_equivalence(
    original: RtlDesign,
    rewrite: RtlDesign,
    cfg: StimulusConfig,
    sim,
    *,
    timeout: float = 300.0,
    artifacts_dir: str | Path | None = None,
) -> EquivalenceVerdict:
    """Co-simulate ``original`` and ``rewrite`` and adjudicate equivalence.

    Rewrites that fail to parse or change the port signature are inconclusive.
    A missing simulator raises :class:`ToolUnavailableError`.
    """
    iface = extract_interface(original)
    try:
        rewrite_iface = extract_interface(rewrite)
    except VerilogParseError as exc:
        return EquivalenceVerdict.inconclusive(f"rewrite does not parse: {exc}")
    if rewrite_iface.signature() != iface.signature():
        missing = sorted(iface.signature() - rewrite_iface.signature())
        extra = sorted(rewrite_iface.signature() - iface.signature())
        return EquivalenceVerdict.inconclusive(f"interface mismatch: missing {missing}, unexpected {extra}")
    src_a, names_a = rename_modules(original.source, "__a")
    src_b, names_b = rename_modules(rewrite.source, "__b")
    testbench = generate_testbench(
        iface, cfg, module_a=names_a[iface.top_module], module_b=names_b[rewrite_iface.top_module]
    )
    result = sim.run(testbench, [src_a, src_b], timeout=timeout, artifacts_dir=artifacts_dir)
    verdict = verdict_from_result(result)
    log.debug("equivalence %s vs %s: %s", original.design_id, rewrite.design_id, verdict.status.value)
    return verdict


def interfaces_match(a: RtlDesign, b: RtlDesign) -> bool:
    try:
        return extract_interface(a).signature() == extract_interface(b).signature()
    except VerilogParseError:
        return False


__all__ = [
    "SimulationResult",
    "StimulusConfig",
    "TOKEN_RE",
    "Xorshift64",
    "check_equivalence",
    "generate_testbench",
    "sequence_seed",
    "splitmix64",
    "stimulus_vectors",
    "verdict_from_result",
]

