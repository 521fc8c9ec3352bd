"""Shared test utilities: corpus loading, operator mutation and a SAT-based oracle."""

from __future__ import annotations

import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

from rtlppa.cli import bundled_corpus as corpus  # noqa: F401
from rtlppa.model import RtlDesign
from rtlppa.verilog import extract_interface, operator_sites, rename_modules, strip_comments, tokenize

DATA = Path(__file__).parent / "data"

SWAPS = {"+": "-", "-": "+", "&": "|", "|": "&", "<": "<=", "<=": "<"}


@dataclass(frozen=True)
class Mutant:
    design: RtlDesign
    site: int
    before: str
    after: str


def mutants(design: RtlDesign) -> list[Mutant]:
    """Every single-operator mutant (+/-, &/|, </<=) of ``design``."""
    text = strip_comments(design.source)
    out = []
    for site in operator_sites(tokenize(text, stripped=True)):
        swap = SWAPS.get(site.text)
        if swap is None or (site.text in ("<", "<=") and site.kind != "compare"):
            continue
        tok = tokenize(text, stripped=True)[site.index]
        mutated = text[: tok.start] + swap + text[tok.start + len(tok.text):]
        out.append(Mutant(RtlDesign(mutated, f"{design.design_id}.m{site.index}"), site.index, site.text, swap))
    return out


def yosys_binary() -> str | None:
    return shutil.which("yosys") or shutil.which("yowasp-yosys")


def sat_inequivalent(a: RtlDesign, b: RtlDesign, depth: int = 24, timeout: float = 300.0) -> bool:
    """True when a SAT miter finds an input sequence on which the designs differ.

    Combinational designs are checked exhaustively by the solver; sequential
    ones over ``depth`` cycles from a zero-initialized state with the reset
    asserted in the first cycle, which mirrors the simulation testbench.
    """
    yosys = yosys_binary()
    if yosys is None:
        raise RuntimeError("yosys unavailable")
    iface = extract_interface(a)
    src_a, names_a = rename_modules(a.source, "_gold")
    src_b, names_b = rename_modules(b.source, "_gate")
    top_a, top_b = names_a[iface.top_module], names_b[extract_interface(b).top_module]
    if iface.is_sequential:
        sets = ""
        if iface.reset is not None:
            value = 0 if iface.reset.reset_active_low else 1
            sets = f" -set-at 1 in_{iface.reset.name} {value}"
        sat = f"sat -verify -prove trigger 0 -seq {depth} -set-init-zero{sets} miter"
    else:
        sat = "sat -verify -prove trigger 0 miter"
    script = "; ".join([
        "read_verilog -sv a.v b.v",
        "proc",
        "async2sync",
        "opt_clean",
        f"miter -equiv -flatten -make_outputs {top_a} {top_b} miter",
        "hierarchy -top miter",
        "flatten",
        "opt -fast",
        sat,
    ])
    with tempfile.TemporaryDirectory(prefix="oracle-") as wd:
        Path(wd, "a.v").write_text(src_a)
        Path(wd, "b.v").write_text(src_b)
        res = subprocess.run([yosys, "-q", "-p", script], cwd=wd, capture_output=True, text=True, timeout=timeout)
    if res.returncode == 0:
        return False
    if "proof did fail" in res.stdout + res.stderr:
        return True
    raise RuntimeError(f"yosys oracle error: {(res.stdout + res.stderr)[-800:]}")
