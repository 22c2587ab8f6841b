"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

from . import assurance, figures, pipeline
from .baseline_lr import LrConfig, evaluate_lr, fit_lr
from .bn_core import BdeuParams, dag_to_dot, format_bayesnet, parse_bayesnet, read_bayesnet
from .bn_infer import evaluate_classifier, fit_parameters, infer, risk_report, train_test_split
from .bn_search import SearchConfig, hill_climb
from .config import load_config, parse_context
from .errors import DataError, InvariantViolation
from .procmine import dfg_to_dot, discover_dfg, filter_log, load_event_log, parse_filter
from .records import TABLE2_SCHEMA, Schema, from_array, load_records, to_array, write_records
from .synthgen import load_planted_model, sample_array, synthesize_event_log

log = logging.getLogger("medassure")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _check_code(schema: Schema, code: str, flag: str):
    if code not in schema.codes:
        raise UsageError(f"{flag}: unknown variable {code!r} (known: {', '.join(schema.codes)})")


def _context(schema: Schema, text: str | None):
    try:
        ctx = parse_context(text or "")
    except DataError as exc:
        raise UsageError(f"--context: {exc}") from None
    for code, _ in ctx:
        _check_code(schema, code, "--context")
    return dict(ctx)


def _floats(text: str, flag: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise UsageError(f"{flag}: empty list")
    return vals


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _search_cfg(args) -> SearchConfig:
    return SearchConfig(
        max_parents=args.max_parents, max_iterations=args.max_iterations, restarts=args.restarts, seed=args.seed
    )


def _load_data(path: str):
    return to_array(load_records(path, TABLE2_SCHEMA), TABLE2_SCHEMA)


# -- subcommands ----------------------------------------------------------------


def cmd_synth(args):
    net = read_bayesnet(args.planted, TABLE2_SCHEMA) if args.planted else load_planted_model()
    if args.n <= 0:
        raise UsageError("--n must be positive")
    out = _out_dir(args.out)
    records = from_array(sample_array(net, args.n, args.seed))
    write_records(out / "records.csv", records, net.schema)
    (out / "planted.bn").write_text(format_bayesnet(net.dag, net.schema, net.cpts), encoding="utf-8")
    if args.events:
        (out / "events.csv").write_text(synthesize_event_log(records, net.schema, args.seed), encoding="utf-8")
    print(f"wrote {len(records)} records to {out}")


def cmd_learn(args):
    data = _load_data(args.records)
    dag, trace = hill_climb(data, TABLE2_SCHEMA, BdeuParams(args.alpha), _search_cfg(args))
    out = _out_dir(args.out)
    (out / "structure.dot").write_text(dag_to_dot(dag, TABLE2_SCHEMA), encoding="utf-8")
    (out / "structure.bn").write_text(format_bayesnet(dag, TABLE2_SCHEMA), encoding="utf-8")
    (out / "trace.csv").write_text(trace.to_csv(TABLE2_SCHEMA), encoding="utf-8")
    print(f"learnt {len(dag.edges)} edges in {len(trace.steps)} moves; wrote {out}")


def cmd_fit(args):
    data = _load_data(args.records)
    dag, schema, _ = parse_bayesnet(Path(args.structure).read_text(encoding="utf-8"), TABLE2_SCHEMA)
    net = fit_parameters(dag, data, schema, BdeuParams(args.alpha))
    text = format_bayesnet(net.dag, schema, net.cpts)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_infer(args):
    net = read_bayesnet(args.net)
    schema = net.schema
    ctx = _context(schema, args.context)
    if args.exposure or args.outcome:
        if not (args.exposure and args.outcome):
            raise UsageError("--exposure and --outcome go together")
        _check_code(schema, args.exposure, "--exposure")
        _check_code(schema, args.outcome, "--outcome")
        rr = risk_report(net, ctx, args.exposure, args.outcome)
        if args.csv:
            sys.stdout.write(pipeline.risk_csv([("query", rr)]))
        else:
            print(rr.summary())
    else:
        if not args.target:
            raise UsageError("give --target, or --exposure and --outcome")
        _check_code(schema, args.target, "--target")
        post = infer(net, ctx, args.target)
        for k, p in post.items():
            print(f"P({args.target}={k} | {','.join(f'{c}={s}' for c, s in ctx.items()) or '-'}) = {p:.6f}")


def cmd_metrics(args):
    _check_code(TABLE2_SCHEMA, args.target, "--target")
    data = _load_data(args.records)
    dag, schema, _ = parse_bayesnet(Path(args.structure).read_text(encoding="utf-8"), TABLE2_SCHEMA)
    train, test = train_test_split(data, args.fraction, args.seed)
    net = fit_parameters(dag, train, schema, BdeuParams(args.alpha))
    lr = fit_lr(train, schema, args.target, config=LrConfig())
    rows = [
        ("bayesian_network", evaluate_classifier(net, test, args.target, args.threshold)),
        ("logistic_regression", evaluate_lr(lr, test, schema, args.threshold)),
    ]
    if args.csv:
        sys.stdout.write(pipeline.metrics_csv(rows))
    else:
        sys.stdout.write(pipeline.metrics_text(rows, args.target, len(test)))


def cmd_mine(args):
    traces = load_event_log(args.events)
    if args.filter:
        try:
            pred = parse_filter(args.filter)
        except DataError as exc:
            raise UsageError(f"--filter: {exc}") from None
        traces = filter_log(traces, pred)
    text = dfg_to_dot(discover_dfg(traces), args.min_arc_count)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _hazards_and_findings(args):
    hazards = assurance.load_hazard_table(args.hazards, TABLE2_SCHEMA)
    if args.findings:
        findings = assurance.load_findings(args.findings)
    elif getattr(args, "structure", None):
        dag, schema, _ = parse_bayesnet(Path(args.structure).read_text(encoding="utf-8"), TABLE2_SCHEMA)
        findings = assurance.extract_findings(dag, schema, hazards=hazards, all_adjacencies=True)
    else:
        raise UsageError("give --findings or --structure")
    return hazards, findings


def cmd_argue(args):
    hazards, findings = _hazards_and_findings(args)
    graph = assurance.build_argument(hazards, findings, assurance.load_template(args.template))
    report = assurance.gap_report(hazards, findings)
    out = _out_dir(args.out)
    (out / "argument.dot").write_text(assurance.gsn_to_dot(graph), encoding="utf-8")
    (out / "gaps.txt").write_text(assurance.format_gap_report(report), encoding="utf-8")
    (out / "gaps.csv").write_text(assurance.gap_report_csv(report), encoding="utf-8")
    print(f"argument with {len(graph.nodes)} nodes; wrote {out}")


def cmd_gaps(args):
    hazards, findings = _hazards_and_findings(args)
    report = assurance.gap_report(hazards, findings)
    sys.stdout.write(assurance.gap_report_csv(report) if args.csv else assurance.format_gap_report(report))


def cmd_sweep(args):
    data = _load_data(args.records)
    alphas = _floats(args.alphas, "--alphas")
    if any(a <= 0 for a in alphas):
        raise UsageError("--alphas: values must be positive")
    results = pipeline.sweep_structures(data, TABLE2_SCHEMA, alphas, _search_cfg(args))
    out = _out_dir(args.out)
    for a, dag, _ in results:
        tag = pipeline._alpha_tag(a)
        (out / f"structure_alpha_{tag}.dot").write_text(dag_to_dot(dag, TABLE2_SCHEMA), encoding="utf-8")
        (out / f"structure_alpha_{tag}.bn").write_text(format_bayesnet(dag, TABLE2_SCHEMA), encoding="utf-8")
    summary = pipeline.sweep_summary(results, TABLE2_SCHEMA)
    (out / "summary.csv").write_text(summary, encoding="utf-8")
    figures.plot_alpha_sweep(alphas, [len(d.edges) for _, d, _ in results], out / "edges_vs_alpha.png")
    sys.stdout.write(summary)


def cmd_run(args):
    overrides = {}
    for item in args.set or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects section.key=value, got {item!r}")
        overrides[key.strip()] = val
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    if args.demo:
        if args.config:
            raise UsageError("--demo and --config are exclusive")
        if not args.output:
            raise UsageError("--demo needs --output")
        config_path = Path(str(resources.files("medassure").joinpath("data/demo/demo.ini")))
    elif args.config:
        config_path = Path(args.config)
    else:
        raise UsageError("give --config or --demo")
    if args.output:
        overrides["paths.output"] = str(Path(args.output).resolve())
    cfg = load_config(config_path, overrides)
    manifest = pipeline.run_pipeline(cfg, TABLE2_SCHEMA, threads=args.threads)
    print(f"wrote {len(manifest.entries)} artifacts to {cfg.output}")
    print(f"manifest sha256 {manifest.digest()}")


# -- parser ----------------------------------------------------------------------


def _search_flags(p):
    p.add_argument("--alpha", type=float, default=1.0, help="BDeu equivalent sample size")
    p.add_argument("--max-parents", type=int, default=3)
    p.add_argument("--max-iterations", type=int, default=1000)
    p.add_argument("--restarts", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="medassure", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=None, help="worker cap (outputs do not depend on it)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="sample synthetic records from the planted network")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--planted", help="planted network file (default: shipped model)")
    p.add_argument("--events", action="store_true", help="also write a synthetic event log")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("learn", help="hill-climbing structure search")
    p.add_argument("--records", required=True)
    p.add_argument("--out", default=".")
    _search_flags(p)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("fit", help="estimate CPTs for a structure")
    p.add_argument("--records", required=True)
    p.add_argument("--structure", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("infer", help="posterior or risk query on a fitted network")
    p.add_argument("--net", required=True)
    p.add_argument("--context", default="")
    p.add_argument("--exposure")
    p.add_argument("--outcome")
    p.add_argument("--target")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("metrics", help="BN vs logistic-regression classification metrics")
    p.add_argument("--records", required=True)
    p.add_argument("--structure", required=True)
    p.add_argument("--target", default="AF")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("mine", help="directly-follows graph from an event log")
    p.add_argument("--events", required=True)
    p.add_argument("--filter")
    p.add_argument("--min-arc-count", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_mine)

    for name, func, helptext in (
        ("argue", cmd_argue, "GSN argument and gap report"),
        ("gaps", cmd_gaps, "gap report only"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--hazards", help="hazard table (default: shipped table)")
        p.add_argument("--findings")
        p.add_argument("--structure", help="derive edge findings from a structure file")
        if name == "argue":
            p.add_argument("--template")
            p.add_argument("--out", default=".")
        else:
            p.add_argument("--csv", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="structure search across several alphas")
    p.add_argument("--records", required=True)
    p.add_argument("--alphas", default="0.5,1,2,5,10")
    p.add_argument("--out", default=".")
    _search_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("run", help="full pipeline from a config file")
    p.add_argument("--config")
    p.add_argument("--demo", action="store_true", help="use the shipped demo config and data")
    p.add_argument("--output")
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"medassure: usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"medassure: error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"medassure: internal error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"medassure: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
