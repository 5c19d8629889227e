"""Command-line entry point.

Exit codes: 0 success, 1 scenario or check failure, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import difflib
import sys
from importlib import resources
from pathlib import Path
from typing import Optional, TextIO

from semdeg import confmap, degrees, linectl, semstore, units
from semdeg.degrees import Advice, DegreePair

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SCENARIOS = ("plug-and-sense", "packaging-line", "interrupt")
INTERRUPT_TICKS = 12


class UsageError(Exception):
    pass


def _data(name: str) -> str:
    return resources.files("semdeg.data").joinpath(name).read_text("utf-8")


# ---------------------------------------------------------------------------
# advise


def parse_answers(text: str) -> dict[str, degrees.Answer]:
    """Lines ``Rn yes|no`` (optionally ``R8 yes B4``); all nine rules required."""
    answers: dict[str, degrees.Answer] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace("=", " ").split()
        if len(parts) not in (2, 3):
            raise UsageError(f"line {lineno}: expected 'Rn yes|no'")
        try:
            rid = degrees.rule(parts[0]).id
        except KeyError:
            raise UsageError(f"line {lineno}: unknown rule {parts[0]!r}") from None
        if rid in answers:
            raise UsageError(f"line {lineno}: duplicate answer for {rid}")
        word = parts[1].lower()
        if word not in ("yes", "no", "y", "n"):
            raise UsageError(f"line {lineno}: answer must be yes or no")
        value: degrees.Answer = word.startswith("y")
        if len(parts) == 3:
            if not value:
                raise UsageError(f"line {lineno}: a level only goes with 'yes'")
            try:
                value = degrees.behavioral(parts[2])
            except ValueError as exc:
                raise UsageError(f"line {lineno}: {exc}") from None
        answers[rid] = value
    for rid in degrees.RULE_IDS:
        if rid not in answers:
            raise UsageError(f"missing answer for {rid}")
    return answers


def prompt_answers(stdin: TextIO, stdout: TextIO) -> dict[str, degrees.Answer]:
    answers: dict[str, degrees.Answer] = {}
    for r in degrees.RULES:
        while True:
            stdout.write(f"{r.id}: {r.question} [y/n] ")
            stdout.flush()
            line = stdin.readline()
            if not line:
                raise UsageError(f"missing answer for {r.id}")
            word = line.strip().lower()
            if word in ("y", "yes", "n", "no"):
                answers[r.id] = word.startswith("y")
                break
            stdout.write("please answer yes or no\n")
    return answers


def render_advice(advice: Advice, catalog: degrees.Catalog) -> str:
    out = [f"Minimal degree: {advice.result}"]
    out.append("Triggered rules: " + (" ".join(advice.triggered) or "none"))
    for note in advice.notes:
        out.append(f"Note: {note}")
    matches = degrees.filter_technologies(catalog, advice.result)
    out.append(f"Technologies at or above {advice.result.short} ({len(matches)}):")
    for e in matches:
        extra = f"  [{e.note}]" if e.note else ""
        out.append(f"  {e.label}\t{e.degrees.short}{extra}")
    return "\n".join(out) + "\n"


def cmd_advise(args, stdout: TextIO, stdin: TextIO) -> int:
    if args.answers:
        answers = parse_answers(Path(args.answers).read_text("utf-8"))
    else:
        answers = prompt_answers(stdin, stdout)
    advice = degrees.advise(answers)
    catalog = degrees.load_catalog(args.catalog)
    stdout.write(render_advice(advice, catalog))
    if args.plot:
        from semdeg import plotting
        plotting.plot_degree_map(list(catalog), advice.result, args.plot)
        stdout.write(f"figure written to {args.plot}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# tech


def cmd_tech(args, stdout: TextIO, stdin: TextIO) -> int:
    catalog = degrees.load_catalog(args.catalog)
    if args.tech_command == "lookup":
        try:
            e = degrees.lookup_technology(catalog, args.name, args.variant)
        except degrees.NotFound as exc:
            stdout.write(f"not found: {exc}\n")
            return EXIT_FAIL
        stdout.write(f"{e.label}\t{e.degrees}" + (f"\t{e.note}" if e.note else "") + "\n")
        return EXIT_OK
    try:
        requirement = DegreePair(degrees.structural(args.structural), degrees.behavioral(args.behavioral))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for e in degrees.filter_technologies(catalog, requirement):
        stdout.write(f"{e.label}\t{e.degrees.short}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# classify


def parse_fixture(text: str) -> list[tuple[str, dict[str, degrees.Answer], Optional[DegreePair]]]:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        cols = raw.split("\t")
        if len(cols) not in (2, 3):
            raise UsageError(f"line {lineno}: expected feature, rules[, expected]")
        answers: dict[str, degrees.Answer] = {rid: False for rid in degrees.RULE_IDS}
        for tok in cols[1].split():
            if tok == "-":
                continue
            rid, _, level = tok.partition("=")
            try:
                rid = degrees.rule(rid).id
                answers[rid] = degrees.behavioral(level) if level else True
            except (KeyError, ValueError) as exc:
                raise UsageError(f"line {lineno}: {exc}") from None
        expected = None
        if len(cols) == 3 and cols[2].strip():
            try:
                expected = DegreePair.parse(cols[2])
            except ValueError as exc:
                raise UsageError(f"line {lineno}: {exc}") from None
        rows.append((cols[0].strip(), answers, expected))
    return rows


def cmd_classify(args, stdout: TextIO, stdin: TextIO) -> int:
    rows = parse_fixture(Path(args.fixture).read_text("utf-8"))
    status = EXIT_OK
    for feature, answers, expected in rows:
        try:
            result = degrees.advise(answers).result
        except ValueError as exc:
            raise UsageError(f"{feature}: {exc}") from None
        verdict = ""
        if expected is not None:
            verdict = "\tmatch" if result == expected else f"\tMISMATCH expected {expected.short}"
            if result != expected:
                status = EXIT_FAIL
        stdout.write(f"{feature}\t{result.short}\t{result}{verdict}\n")
    return status


# ---------------------------------------------------------------------------
# run-scenario


def _compare(name: str, produced: str, golden: str, stdout: TextIO) -> bool:
    if produced == golden:
        return True
    diff = difflib.unified_diff(golden.splitlines(True), produced.splitlines(True),
                                f"golden/{name}", name)
    stdout.write("".join(diff))
    return False


def scenario_plug_and_sense(out: Path, stdout: TextIO, config: Optional[str]) -> int:
    from semdeg.busnet import harness

    outcome = harness.run(harness.load_scenario(config))
    text = "\n".join(outcome.trace) + "\n"
    (out / "plug_and_sense.trace").write_text(text, "utf-8")
    for uid, state in sorted(outcome.states.items()):
        stdout.write(f"unit {uid}: {state}\n")
    for uid, q in sorted(outcome.readings.items()):
        stdout.write(f"unit {uid}: deliver {q}\n")
    for uid, frame in sorted(outcome.exceptions.items()):
        stdout.write(f"unit {uid}: exception frame {frame.hex(' ').upper()}\n")
    stdout.write(f"elapsed {outcome.elapsed:.3f}s\n")
    ok = outcome.ok
    for f in outcome.failures:
        stdout.write(f"FAIL {f}\n")
    if config is None:
        ok = _compare("plug_and_sense.trace", text, _data("golden/plug_and_sense.trace"), stdout) and ok
    return EXIT_OK if ok else EXIT_FAIL


def packaging_line_report() -> confmap.MappingReport:
    kb = semstore.loads(_data("packaging_line.kb"))
    registry = units.loads(_data("packaging_line.conv"))
    product, profiles = confmap.loads_profiles(_data("packaging_line.profiles"))
    return confmap.derive_config(product, profiles, kb, registry)


def scenario_packaging_line(out: Path, stdout: TextIO, config: Optional[str]) -> int:
    report = packaging_line_report()
    text = confmap.explain(report)
    (out / "mapping.txt").write_text(text, "utf-8")
    (out / "mapping.tsv").write_text(confmap.report_records(report), "utf-8")
    stdout.write(text)
    ok = _compare("mapping.txt", text, _data("golden/mapping.txt"), stdout)
    return EXIT_OK if ok else EXIT_FAIL


def interrupt_traces() -> dict[str, tuple[linectl.LineModel, list[linectl.TraceRow]]]:
    runs = {}
    for policy in linectl.SPEED_POLICIES:
        line = linectl.carton_jam_line(speed_policy=policy)
        runs[policy] = linectl.simulate(line, INTERRUPT_TICKS, linectl.CARTON_JAM_SCHEDULE)
    return runs


def scenario_interrupt(out: Path, stdout: TextIO, config: Optional[str]) -> int:
    runs = interrupt_traces()
    line, rows = runs["constant"]
    trace = linectl.format_trace(rows)
    events = linectl.format_log(line.log)
    (out / "interrupt_trace.tsv").write_text(trace, "utf-8")
    (out / "interrupt_events.tsv").write_text(events, "utf-8")
    lin_line, lin_rows = runs["linear"]
    (out / "interrupt_linear_trace.tsv").write_text(linectl.format_trace(lin_rows), "utf-8")
    (out / "interrupt_linear_events.tsv").write_text(linectl.format_log(lin_line.log), "utf-8")
    from semdeg import plotting
    plotting.plot_line_traces({p: r for p, (_, r) in runs.items()}, out / "interrupt.png",
                              "carton jam at the packaging machine")
    stdout.write(events)
    ok = _compare("interrupt_trace.tsv", trace, _data("golden/interrupt_trace.tsv"), stdout)
    ok = _compare("interrupt_events.tsv", events, _data("golden/interrupt_events.tsv"), stdout) and ok
    return EXIT_OK if ok else EXIT_FAIL


_SCENARIO_RUNNERS = {
    "plug-and-sense": scenario_plug_and_sense,
    "packaging-line": scenario_packaging_line,
    "interrupt": scenario_interrupt,
}


def cmd_run_scenario(args, stdout: TextIO, stdin: TextIO) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return _SCENARIO_RUNNERS[args.name](out, stdout, args.config)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semdeg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("advise", help="derive the minimal semantic degree from rule answers")
    p.add_argument("--answers", metavar="FILE", help="nine lines 'Rn yes|no'; prompts when omitted")
    p.add_argument("--catalog", metavar="FILE", help="technology catalog (default: bundled)")
    p.add_argument("--plot", metavar="PNG", help="also render the technology map")
    p.set_defaults(func=cmd_advise)

    p = sub.add_parser("tech", help="look up or filter automation technologies")
    p.add_argument("--catalog", metavar="FILE", help="technology catalog (default: bundled)")
    tsub = p.add_subparsers(dest="tech_command", required=True)
    lk = tsub.add_parser("lookup")
    lk.add_argument("name")
    lk.add_argument("--variant")
    fl = tsub.add_parser("filter")
    fl.add_argument("--structural", required=True, metavar="Sx")
    fl.add_argument("--behavioral", required=True, metavar="Bx")
    p.set_defaults(func=cmd_tech)

    p = sub.add_parser("run-scenario", help="run a bundled scenario and compare with golden output")
    p.add_argument("name", choices=SCENARIOS)
    p.add_argument("--out", default=".", metavar="DIR")
    p.add_argument("--config", metavar="FILE", help="plug-and-sense scenario file (skips golden check)")
    p.set_defaults(func=cmd_run_scenario)

    p = sub.add_parser("classify", help="degree per feature from a rule-answer fixture")
    p.add_argument("fixture")
    p.set_defaults(func=cmd_classify)
    return parser


def main(argv: Optional[list[str]] = None, stdout: TextIO = sys.stdout,
         stdin: TextIO = sys.stdin) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, stdout, stdin)
    except UsageError as exc:
        sys.stderr.write(f"semdeg: error: {exc}\n")
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        sys.stderr.write(f"semdeg: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
