"""Command-line front end.

Exit codes: 0 success, 2 bad spec or usage, 3 numerical degeneracy.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .directed_info import directed_information, running_average
from .errors import DegenerateCovarianceError, InfoflowError
from .gauss import LinearSystem
from .io_transfer import (
    bode_report,
    close_loop,
    feedback_average_transfer,
    feedback_directed_information,
    feedback_output_input_transfer,
)
from .results import ResultTable, canonical
from .specfile import SpecError, SystemSpec, load_spec, parse_spec, selector_name
from .structural import (
    build_graph,
    check_transfer_path_consistency,
    input_transfer_evidence,
    is_structurally_controllable,
    is_structurally_observable,
    output_transfer_evidence,
)
from .transfer import (
    NONCONVERGED,
    TransferQuery,
    average_transfer_series,
    cumulative_transfer,
    n_step_transfer,
)

log = logging.getLogger("infoflow")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGENERATE = 3

# digests of the packaged example specs (see specfile.spec_digest)
PINNED = {
    "ex1": "f91de11f745504d653543ff7c22a409486e581e54f663287e004d686b82500d3",
    "ex2": "36a155e530090eb31c31bbf8b298fc9a59d91392e33d122af346c318f9fc116d",
    "feedback": "6ec715ab6b6cff91a48293af177daa90f8267f49769d4be7c2b0ccf0e20a5b54",
}
AVERAGE_TOL = 1e-6


class UsageError(InfoflowError, ValueError):
    pass


# --- helpers -------------------------------------------------------------

def _pair(spec: SystemSpec, source: str, target: str):
    src = spec.selector(source)
    tgt = spec.selector(target)
    if not src.disjoint(tgt):
        raise UsageError("--source and --target must not share states")
    return src, tgt


def _positive(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return n


def _nonneg(value: str) -> int:
    n = int(value)
    if n < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {value}")
    return n


def _emit_table(table: ResultTable, args) -> None:
    if args.out:
        table.write(args.out, as_json=args.json)
        log.info("wrote %s", args.out)
    if args.bits:
        _print_bits(table)
    elif not args.out:
        sys.stdout.write(table.to_json() if args.json else table.to_csv())


def _print_bits(table: ResultTable) -> None:
    """Display-only listing in bits; files keep nats."""
    out = sys.stdout
    out.write("analysis\tsource\ttarget\tstep\tvalue_bits\tflag\n")
    for r in table.rows:
        out.write(f"{r.analysis}\t{r.source}\t{r.target}\t{r.step}\t{r.value_nats / math.log(2):.12g}\t{r.flag}\n")


def _emit_report(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --- analyses shared by the commands and `reproduce` ------------------------

def transfer_table(spec: SystemSpec, source: str, target: str, steps: int,
                   base_t: int = 0, allow_degenerate: bool = False) -> ResultTable:
    src, tgt = _pair(spec, source, target)
    q = TransferQuery(src, tgt, base_t, steps)
    series = n_step_transfer(spec.system, spec.initial, q, allow_degenerate=allow_degenerate)
    s_name, t_name = selector_name(src, spec.labels), selector_name(tgt, spec.labels)
    table = ResultTable(
        "transfer", spec.digest,
        {"source": source, "target": target, "steps": steps, "base_t": base_t,
         "allow_degenerate": allow_degenerate},
    )
    table.add_series("n_step", series, s_name, t_name)
    table.add_series("cumulative", cumulative_transfer(series), s_name, t_name)
    return table


def directed_info_table(spec: SystemSpec, source: str, target: str, steps: int,
                        average: bool = False) -> ResultTable:
    src, tgt = _pair(spec, source, target)
    s_name, t_name = selector_name(src, spec.labels), selector_name(tgt, spec.labels)
    di = directed_information(spec.system, spec.initial, src, tgt, steps)
    table = ResultTable(
        "directed-info", spec.digest,
        {"source": source, "target": target, "steps": steps, "average": average},
    )
    for k, v in zip(di.steps, di.values.tolist()):
        table.add("directed_info", s_name, t_name, k, v)
    if average:
        avg_di = running_average(di)
        _add_running(table, "avg_directed_info", s_name, t_name, di.steps, avg_di)
        avg_t = average_transfer_series(spec.system, spec.initial, TransferQuery(src, tgt), steps)
        _add_running(table, "avg_transfer", s_name, t_name, avg_t.steps, avg_t.values)
    return table


def _add_running(table, analysis, s_name, t_name, steps, values) -> None:
    """Running averages; the last one is flagged if it still moves by more than `AVERAGE_TOL`."""
    values = np.asarray(values, dtype=float)
    for i, (k, v) in enumerate(zip(steps, values.tolist())):
        flag = "ok"
        if i == len(values) - 1 and (i == 0 or abs(values[i] - values[i - 1]) >= AVERAGE_TOL):
            flag = NONCONVERGED
        table.add(analysis, s_name, t_name, k, v, flag)


def feedback_table(spec: SystemSpec, horizon: int, di_steps: int = 0) -> ResultTable:
    Sigma0 = spec.Sigma0 if spec.Sigma0_given else None
    loop = close_loop(spec.system, noise=spec.noise, Sigma0=Sigma0)
    report = bode_report(loop, horizon)
    table = ResultTable(
        "feedback", spec.digest,
        {"horizon": horizon, "di_steps": di_steps, "noise": spec.noise,
         "stationary_start": not spec.Sigma0_given,
         "bode": _canonical_tree(report.as_dict())},
    )
    table.add_series("n_step", feedback_output_input_transfer(loop, horizon), "w", "u")
    avg = feedback_average_transfer(loop, horizon)
    _add_running(table, "avg_transfer", "w", "u", avg.steps, avg.values)
    if di_steps:
        di = feedback_directed_information(loop, di_steps)
        _add_running(table, "avg_directed_info", "w", "u", di.steps, running_average(di))
    table.add("bode_integral", "A", "", horizon, report.bode_integral)
    table.add("bode_gap", "A", "", horizon, report.gap)
    return table


def _canonical_tree(obj):
    if isinstance(obj, float):
        return canonical(obj)
    if isinstance(obj, dict):
        return {k: _canonical_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical_tree(v) for v in obj]
    return obj


def _with_attachments(spec: SystemSpec, input_sel: str | None, output_sel: str | None) -> LinearSystem:
    system = spec.system
    N = system.n_states
    if input_sel:
        B = np.zeros((N, 1))
        B[list(spec.selector(input_sel).indices), 0] = 1.0
        system = system.replace(B=B, Sigma_u=None)
    if output_sel:
        C = np.zeros((1, N))
        C[0, list(spec.selector(output_sel).indices)] = 1.0
        system = system.replace(C=C, Sigma_omega=None)
    return system


def _names(indices, labels) -> list[str]:
    return [labels[i] for i in sorted(indices)]


def structural_report(spec: SystemSpec, check: str, horizon: int = 10,
                      input_sel: str | None = None, output_sel: str | None = None,
                      evidence: bool = False) -> dict:
    system = _with_attachments(spec, input_sel, output_sel)
    graph = build_graph(system)
    doc = {
        "format_version": 1,
        "command": "structural",
        "system_hash": spec.digest,
        "check": check,
        "n_nodes": graph.n_nodes,
        "edges": sorted([spec.labels[i], spec.labels[j]] for i, j in graph.edges),
    }
    if check in ("controllable", "observable"):
        if check == "controllable":
            if not graph.input_nodes:
                raise UsageError("system has no input (B) attached")
            verdict = is_structurally_controllable(graph)
            doc["input_nodes"] = _names(graph.input_nodes, spec.labels)
        else:
            if not graph.output_nodes:
                raise UsageError("system has no output (C) attached")
            verdict = is_structurally_observable(graph)
            doc["output_nodes"] = _names(graph.output_nodes, spec.labels)
        doc["holds"] = verdict.holds
        doc["witness"] = _names(verdict.witness, spec.labels)
        if evidence:
            fn = input_transfer_evidence if check == "controllable" else output_transfer_evidence
            ev = fn(system, spec.initial, horizon)
            # evidence only; the verdict above comes from reachability
            doc["transfer_evidence"] = {
                "horizon": horizon,
                "max_transfer_nats": {spec.labels[i]: canonical(v) for i, v in ev.items()},
            }
    else:
        rep = check_transfer_path_consistency(system, spec.initial, horizon)
        doc.update({
            "horizon": horizon,
            "pairs_checked": rep.pairs_checked,
            "certified_zero": [[spec.labels[i], spec.labels[j]] for i, j in rep.certified_zero],
            "violations": [
                {"source": spec.labels[i], "target": spec.labels[j], "step": k, "value_nats": canonical(v)}
                for i, j, k, v in rep.violations
            ],
            "max_no_path_transfer": canonical(rep.max_no_path_transfer),
            "consistent": rep.consistent,
        })
    return doc


# --- commands ------------------------------------------------------------

def cmd_transfer(args) -> int:
    spec = load_spec(args.spec)
    table = transfer_table(spec, args.source, args.target, args.steps, args.base_t, args.allow_degenerate)
    _emit_table(table, args)
    return EXIT_OK


def cmd_directed_info(args) -> int:
    spec = load_spec(args.spec)
    table = directed_info_table(spec, args.source, args.target, args.steps, args.average)
    _emit_table(table, args)
    return EXIT_OK


def cmd_feedback(args) -> int:
    spec = load_spec(args.spec)
    table = feedback_table(spec, args.horizon, args.di_steps)
    bode = table.params["bode"]
    log.info("bode integral %.6g, average transfer %.6g, gap %.3g",
             bode["bode_integral"], bode["average_transfer"], bode["gap"])
    _emit_table(table, args)
    return EXIT_OK


def cmd_structural(args) -> int:
    spec = load_spec(args.spec)
    doc = structural_report(spec, args.check, args.horizon, args.input, args.output, args.evidence)
    _emit_report(doc, args.out)
    return EXIT_OK


def _packaged_spec(name: str, spec_dir: str | None):
    if spec_dir:
        text = (Path(spec_dir) / f"{name}.json").read_text()
        source = str(Path(spec_dir) / f"{name}.json")
    else:
        text = resources.files("infoflow").joinpath("data", f"{name}.json").read_text()
        source = f"<packaged {name}.json>"
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON at line {exc.lineno}: {exc.msg}", source=source) from None
    return parse_spec(doc, source)


def reproduce(name: str, outdir: str | Path, force: bool = False, spec_dir: str | None = None) -> list[Path]:
    """Write the tables for one of the bundled examples into `outdir`."""
    if name not in PINNED:
        raise UsageError(f"unknown example {name!r}")
    spec = _packaged_spec(name, spec_dir)
    if spec.digest != PINNED[name]:
        if not force:
            raise SpecError(
                f"spec digest {spec.digest[:12]} does not match the pinned {PINNED[name][:12]}; "
                "use --force to run anyway",
                source=f"{name}.json",
            )
        log.warning("running %s on a modified spec", name)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    def save(table, fname):
        table.params["example"] = name
        written.append(table.write(outdir / fname))

    if name == "ex1":
        for tgt in ("x2", "x3"):
            save(transfer_table(spec, "x1", tgt, 20), f"transfer_x1_{tgt}.csv")
            save(directed_info_table(spec, "x1", tgt, 20), f"directed_info_x1_{tgt}.csv")
    elif name == "ex2":
        for src, tgt in (("x1", "x15"), ("x15", "x30")):
            save(transfer_table(spec, src, tgt, 30), f"transfer_{src}_{tgt}.csv")
            save(directed_info_table(spec, src, tgt, 30), f"directed_info_{src}_{tgt}.csv")
        save(directed_info_table(spec, "x1", "x30", 200, average=True), "average_x1_x30.csv")
    else:
        table = feedback_table(spec, 300, di_steps=200)
        save(table, "feedback.csv")
        bode = outdir / "bode_report.json"
        bode.write_text(json.dumps(table.params["bode"], indent=1, sort_keys=True) + "\n")
        written.append(bode)
    return written


def cmd_reproduce(args) -> int:
    outdir = args.outdir or f"reproduce-{args.example}"
    for path in reproduce(args.example, outdir, args.force, args.spec_dir):
        print(path)
    return EXIT_OK


# --- parser --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="infoflow",
        description="Information transfer and directed information for linear Gaussian systems.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def table_opts(sp):
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--json", action="store_true", help="write JSON instead of CSV")
        sp.add_argument("--bits", action="store_true",
                        help="print values in bits to stdout; files keep nats")

    sp = sub.add_parser("transfer", parents=[common], help="n-step information transfer and cumulative sums")
    sp.add_argument("spec")
    sp.add_argument("--source", required=True, help="labels or 0-based indices, comma separated")
    sp.add_argument("--target", required=True)
    sp.add_argument("--steps", type=_positive, default=20)
    sp.add_argument("--base-t", type=_nonneg, default=0)
    sp.add_argument("--allow-degenerate", action="store_true",
                    help="flag singular covariances as degenerate instead of failing")
    table_opts(sp)
    sp.set_defaults(func=cmd_transfer)

    sp = sub.add_parser("directed-info", parents=[common], help="directed information I(X^n -> Y^n)")
    sp.add_argument("spec")
    sp.add_argument("--source", required=True)
    sp.add_argument("--target", required=True)
    sp.add_argument("--steps", type=_positive, default=20)
    sp.add_argument("--average", action="store_true",
                    help="add running averages of directed information and transfer")
    table_opts(sp)
    sp.set_defaults(func=cmd_directed_info)

    sp = sub.add_parser("feedback", parents=[common], help="unity feedback loop: w -> u transfer and Bode integral")
    sp.add_argument("spec")
    sp.add_argument("--horizon", type=_positive, default=300)
    sp.add_argument("--di-steps", type=_nonneg, default=0,
                    help="also compute running average directed information up to this n")
    table_opts(sp)
    sp.set_defaults(func=cmd_feedback)

    sp = sub.add_parser("structural", parents=[common], help="structural controllability/observability and path consistency")
    sp.add_argument("spec")
    sp.add_argument("--check", choices=("controllable", "observable", "consistency"), required=True)
    sp.add_argument("--horizon", type=_positive, default=10)
    sp.add_argument("--input", help="attach the input to these states instead of B")
    sp.add_argument("--output", help="read the output from these states instead of C")
    sp.add_argument("--evidence", action="store_true",
                    help="add transfer-based evidence next to the reachability verdict")
    sp.add_argument("--out", help="report file (default: stdout)")
    sp.set_defaults(func=cmd_structural)

    sp = sub.add_parser("reproduce", parents=[common], help="regenerate the tables for a bundled example")
    sp.add_argument("example", choices=sorted(PINNED))
    sp.add_argument("--outdir")
    sp.add_argument("--force", action="store_true", help="run even if the spec digest does not match")
    sp.add_argument("--spec-dir", help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        return args.func(args)
    except DegenerateCovarianceError as exc:
        print(f"infoflow: degenerate covariance: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (InfoflowError, ValueError, OSError) as exc:
        print(f"infoflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
