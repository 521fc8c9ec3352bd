"""Command-line entry point: learn, optimize, eval, equiv, synth, rules.

Exit codes: 0 success, 1 negative equivalence verdict, 2 usage or
configuration error, 3 bad input design, 4 missing or failing external tool.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .config import RunConfig
from .equiv import StimulusConfig, check_equivalence
from .errors import (
    ConfigError,
    DomainError,
    InputDesignError,
    RtlPpaError,
    TestbenchError,
    ToolUnavailableError,
    VerilogParseError,
)
from .learning import Checkpoint, learn
from .library import RuleLibrary, make_embedder
from .metrics import SampleSet, aggregate, impr_at_k
from .model import Metric, RtlDesign
from .optimizer import beam_search, sample_improvements, write_archive
from .simulators import make_simulator
from .synthesis import SynthesisConstraints, check_synthesizable, make_synthesizer, synthesize

log = logging.getLogger("rtlppa")

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE, EXIT_INPUT, EXIT_ENV = 0, 1, 2, 3, 4
DESIGN_SUFFIXES = (".v", ".sv")


def _emit(record: dict) -> None:
    print(json.dumps(record, sort_keys=True))


def _table(headers: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    cells = [[str(h) for h in headers]] + [[_fmt(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _fmt(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if value is None:
        return "-"
    return str(value)


def read_design(path: str | Path, top: str | None = None) -> RtlDesign:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"design file {p} not found") from None
    try:
        return RtlDesign(text, p.stem, top)
    except DomainError as exc:
        raise InputDesignError(str(exc)) from exc


def read_corpus(directory: str | Path) -> list[RtlDesign]:
    d = Path(directory)
    if not d.is_dir():
        raise ConfigError(f"corpus directory {d} not found")
    files = sorted(p for p in d.iterdir() if p.suffix in DESIGN_SUFFIXES)
    designs = []
    for p in files:
        text = p.read_text(encoding="utf-8")
        if text.strip():
            designs.append(RtlDesign(text, p.stem))
        else:
            log.warning("skipping empty file %s", p.name)
    if not designs:
        raise ConfigError(f"corpus {d} contains no designs")
    return designs


def bundled_corpus() -> list[RtlDesign]:
    root = resources.files("rtlppa") / "corpus"
    return [RtlDesign(f.read_text(encoding="utf-8"), f.name[:-2])
            for f in sorted(root.iterdir(), key=lambda f: f.name) if f.name.endswith(".v")]


def _write_jsonl(path: Path, records: Sequence[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Commands


def cmd_learn(args) -> int:
    cfg = RunConfig.load(args.config, seed=args.seed, workers=args.workers)
    corpus = read_corpus(args.corpus) if args.corpus else bundled_corpus()
    tools = cfg.toolchain()
    library_path = cfg.output(args.library or "rules.jsonl")
    work = cfg.output("learn")
    checkpoint_path = work / "checkpoint.jsonl"
    if not args.resume:
        for stale in (library_path, checkpoint_path):
            stale.unlink(missing_ok=True)
    library = RuleLibrary.open(library_path, cfg.embedder(), cfg.accept_threshold)
    report = learn(corpus, cfg.learning, tools, library, Checkpoint(checkpoint_path))

    selected = set(report.selected)
    rows = [(r["design"], r["entropy"], len(r["pairs"]), "yes" if r["design"] in selected else "")
            for r in report.evaluated]
    print(_table(("design", "entropy_bits", "pairs", "selected"), rows))
    summary = report.summary()
    summary["library"] = library_path.relative_to(cfg.workspace).as_posix()
    summary["rules_in_library"] = len(library)
    print(f"\n{summary['accepted']} rule(s) accepted, {summary['rejected']} rejected; library holds {len(library)}")
    _write_jsonl(work / "evaluations.jsonl", report.evaluated)
    _write_jsonl(work / "rule_scores.jsonl", report.rule_scores)
    _write_jsonl(work / "summary.jsonl", [summary])
    _emit(summary)
    if report.explored == 0:
        log.warning("no design survived filtering; the library is empty")
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = RunConfig.load(args.config, seed=args.seed, workers=args.workers)
    design = read_design(args.design, args.top)
    search = replace(
        cfg.search,
        **{k: v for k, v in (("beam_width", args.beam_width), ("num_expand", args.num_expand),
                             ("max_steps", args.max_steps), ("diversity_weight", args.omega)) if v is not None},
    )
    library = None
    if args.library:
        lib_path = Path(args.library)
        if not lib_path.exists():
            raise ConfigError(f"rule library {lib_path} not found")
        library = RuleLibrary.open(lib_path, cfg.embedder(), cfg.accept_threshold, create=False)
    tools = cfg.toolchain()
    result = beam_search(design, search, library, tools)

    out = cfg.output(Path("optimize") / design.design_id)
    out.mkdir(parents=True, exist_ok=True)
    (out / "best.v").write_text(result.best.design.source.rstrip("\n") + "\n", encoding="utf-8")
    with open(out / "archive.jsonl", "w", encoding="utf-8") as fh:
        write_archive(result, search, fh, design_id=design.design_id)
    rows = [(s["step"], " ".join(map(str, s["beam"])), " ".join(f"{x:.4f}" for x in s["scores"]),
             s["generations"], s["best_improvement"]) for s in result.steps]
    table = _table(("step", "beam", "scores", "generations", "best_impr"), rows)
    lines = [
        f"design {design.design_id}  config {search.label}  budget {result.budget}",
        f"root {cfg.target.value} = {result.root_ppa.scalar():g}",
        table,
        f"generations: {result.generations}",
        f"best candidate {result.best.cand_id}: improvement {result.best.improvement:.6g}",
    ]
    text = "\n".join(lines)
    (out / "report.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    _emit({"kind": "optimize_summary", "design": design.design_id, "config": search.label,
           "budget": result.budget, "generations": result.generations, "best_id": result.best.cand_id,
           "best_improvement": result.best.improvement, "output": str(out)})
    return EXIT_OK


def _load_archive(path: Path) -> SampleSet:
    records = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    header = next((r for r in records if r.get("kind") == "run"), {})
    name = header.get("design") or path.parent.name or path.stem
    values = sample_improvements(records)
    if not values:
        raise InputDesignError(f"{path}: archive has no generated samples")
    return SampleSet(name, tuple(values))


def cmd_eval(args) -> int:
    sets = [_load_archive(Path(p)) for p in args.archives]
    ks = args.k
    rows, records = [], []
    for s in sets:
        values = [impr_at_k(s, k) if k <= s.n else None for k in ks]
        rows.append((s.circuit_id, s.n, *values))
        records.append({"kind": "impr_at_k", "circuit": s.circuit_id, "n": s.n,
                        "values": {str(k): v for k, v in zip(ks, values)}})
    means = [aggregate(sets, k) if all(k <= s.n for s in sets) else None for k in ks]
    rows.append(("mean", "", *means))
    print(_table(("circuit", "n", *(f"Impr@{k}" for k in ks)), rows))
    for rec in records:
        _emit(rec)
    _emit({"kind": "impr_at_k_mean", "circuits": len(sets), "values": {str(k): v for k, v in zip(ks, means)}})
    return EXIT_OK


def cmd_equiv(args) -> int:
    original = read_design(args.original, args.top)
    rewrite = read_design(args.rewrite, args.top)
    if args.config:
        cfg = RunConfig.load(args.config, seed=args.seed, workers=args.workers)
        stimulus, sim, timeout = cfg.stimulus, cfg.simulator(), cfg.sim_timeout
    else:
        stimulus = StimulusConfig(seed=args.seed if args.seed is not None else 42)
        sim = make_simulator(args.simulator)
        timeout = 300.0
    if args.sequences or args.cycles:
        stimulus = replace(stimulus, num_sequences=args.sequences or stimulus.num_sequences,
                           cycles_per_sequence=args.cycles or stimulus.cycles_per_sequence)
    try:
        verdict = check_equivalence(original, rewrite, stimulus, sim, timeout=timeout)
    except TestbenchError as exc:
        raise InputDesignError(str(exc)) from exc
    print(verdict.status.value.upper())
    if verdict.detail and not verdict.equivalent:
        print(verdict.detail)
    _emit({"kind": "equivalence", "original": original.design_id, "rewrite": rewrite.design_id,
           "verdict": verdict.status.value, "detail": verdict.detail, "coverage": verdict.coverage})
    return EXIT_OK if verdict.equivalent else EXIT_NEGATIVE


def cmd_synth(args) -> int:
    design = read_design(args.design, args.top)
    if args.config:
        cfg = RunConfig.load(args.config, seed=args.seed, workers=args.workers)
        synth, constraints = cfg.synthesizer(), cfg.constraints()
        if args.target:
            constraints = replace(constraints, target=Metric.parse(args.target))
    else:
        try:
            synth = make_synthesizer(args.synthesizer)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        constraints = SynthesisConstraints(target=Metric.parse(args.target or "area"))
    if not check_synthesizable(design, synth):
        raise InputDesignError(f"{design.design_id} is not synthesizable or not self-contained")
    if args.check:
        print("SYNTHESIZABLE")
        _emit({"kind": "synthesizable", "design": design.design_id, "ok": True})
        return EXIT_OK
    ppa = synthesize(design, constraints, synth)
    print(_table(("design", "area_um2", "delay_ns", "power_mw", "target"),
                 [(design.design_id, ppa.area, ppa.delay, ppa.power, ppa.target.value)]))
    _emit({"kind": "ppa", "design": design.design_id, "synthesizer": getattr(synth, "name", ""), **ppa.to_dict()})
    return EXIT_OK


def cmd_rules(args) -> int:
    path = Path(args.library)
    if not path.exists():
        raise ConfigError(f"rule library {path} not found")
    lib = RuleLibrary.open(path, make_embedder(args.embedder), create=False)
    if args.action == "stats":
        stats = lib.stats()
        print(_table(("rules", "dim", "embedder", "mean_score", "min_score", "max_score"),
                     [(stats["rules"], stats["dim"], stats["embedder"], stats["mean_score"],
                       stats["min_score"], stats["max_score"])]))
        _emit({"kind": "library_stats", **stats})
    elif args.action == "show":
        print(_table(("id", "score", "pair", "condition", "action"),
                     [(r.rule_id, r.score, r.pair_id, r.condition.splitlines()[0][:48],
                       r.action.splitlines()[0][:48]) for r in lib.rules]))
        for r in lib.rules:
            _emit({"kind": "rule", "id": r.rule_id, "score": r.score, "pair_id": r.pair_id,
                   "snippet": r.snippet, "condition": r.condition, "action": r.action})
    else:
        lib.compact()
        print(f"compacted {path} ({len(lib)} rules)")
        _emit({"kind": "library_compacted", "path": str(path), "rules": len(lib)})
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="run seed (overrides the config)")
    common.add_argument("--workers", type=int, help="worker pool size (overrides the config)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="rtlppa", description="Learn and apply RTL PPA optimization rules.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", parents=[common], help="build a rule library from a corpus")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus", help="directory of .v/.sv designs (default: the bundled micro-corpus)")
    p.add_argument("--library", help="output library, relative to the workspace (default rules.jsonl)")
    p.add_argument("--resume", action="store_true", help="continue from the workspace checkpoint")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("optimize", parents=[common], help="beam-search optimize one design")
    p.add_argument("--config", required=True)
    p.add_argument("--design", required=True)
    p.add_argument("--library", help="rule library file (omit to optimize without rules)")
    p.add_argument("--top")
    p.add_argument("-k", "--beam-width", type=int)
    p.add_argument("-m", "--num-expand", type=int)
    p.add_argument("-s", "--max-steps", type=int)
    p.add_argument("--omega", type=float, help="diversity weight")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("eval", parents=[common], help="Impr@k over optimizer archives")
    p.add_argument("archives", nargs="+")
    p.add_argument("-k", type=int, nargs="+", default=[1, 5, 15])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("equiv", parents=[common], help="co-simulate two designs")
    p.add_argument("original")
    p.add_argument("rewrite")
    p.add_argument("--config")
    p.add_argument("--simulator", default="auto", help="auto, icarus, verilator or scripted")
    p.add_argument("--sequences", type=int)
    p.add_argument("--cycles", type=int)
    p.add_argument("--top")
    p.set_defaults(func=cmd_equiv)

    p = sub.add_parser("synth", parents=[common], help="measure PPA of a design")
    p.add_argument("design")
    p.add_argument("--config")
    p.add_argument("--synthesizer", default="mock")
    p.add_argument("--target", choices=[m.value for m in Metric])
    p.add_argument("--check", action="store_true", help="only run the lightweight synthesizability check")
    p.add_argument("--top")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("rules", parents=[common], help="inspect or compact a rule library")
    p.add_argument("action", choices=["stats", "show", "compact"])
    p.add_argument("library")
    p.add_argument("--embedder", default="hashed-tfidf")
    p.set_defaults(func=cmd_rules)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    if args.workers is not None and args.workers < 1:
        parser.error("--workers must be at least 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputDesignError, VerilogParseError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ToolUnavailableError as exc:
        print(f"environment error: {exc}", file=sys.stderr)
        return EXIT_ENV
    except (DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RtlPpaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
