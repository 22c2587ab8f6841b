"""End-to-end batch run: ingest, learn, fit, evaluate, query, mine, argue.

Artifacts are written into a scratch directory next to the output directory
and moved into place only when every stage has succeeded.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import shutil
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import figures
from .assurance import (
    build_argument,
    extract_findings,
    format_findings,
    format_gap_report,
    gap_report,
    gap_report_csv,
    gsn_to_dot,
    load_hazard_table,
    load_template,
)
from .baseline_lr import evaluate_lr, fit_lr, predict_proba
from .bn_core import BdeuParams, ScoreCache, bdeu_score, dag_to_dot, format_bayesnet
from .bn_infer import (
    ClassifierMetrics,
    RiskReport,
    evaluate_classifier,
    fit_parameters,
    posterior_scores,
    risk_report,
    roc_points,
    train_test_split,
)
from .bn_search import SearchConfig, hill_climb
from .config import Query, RunConfig
from .errors import DataError, InvariantViolation, StageError
from .procmine import dfg_to_dot, discover_dfg, filter_log, load_event_log, parse_filter
from .records import TABLE2_SCHEMA, Schema, load_records, to_array

log = logging.getLogger(__name__)

MANIFEST = "manifest.txt"


@dataclass(frozen=True)
class RunManifest:
    entries: tuple[tuple[str, str], ...]  # (relative path, sha256)
    config_echo: tuple[tuple[str, str, str], ...]

    def to_text(self) -> str:
        lines = ["# medassure run manifest", "# sha256  path"]
        lines += [f"{digest}  {rel}" for rel, digest in self.entries]
        lines.append("# effective config")
        lines += [f"# [{s}] {k} = {v}" for s, k, v in self.config_echo]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@contextmanager
def _stage(name: str):
    log.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except DataError as exc:
        raise StageError(name, exc) from exc
    except InvariantViolation as exc:
        raise InvariantViolation(f"stage '{name}' failed: {exc}") from exc


def _write(out: Path, rel: str, text: str):
    p = out / rel
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8", newline="")


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def metrics_csv(rows: list[tuple[str, ClassifierMetrics]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "accuracy", "sensitivity", "specificity", "tp", "tn", "fp", "fn"])
    for name, m in rows:
        w.writerow([name, _fmt(m.accuracy), _fmt(m.sensitivity), _fmt(m.specificity), m.tp, m.tn, m.fp, m.fn])
    return buf.getvalue()


def metrics_text(rows: list[tuple[str, ClassifierMetrics]], target: str, n_test: int) -> str:
    def pct(x):
        return "n/a" if x is None else f"{x * 100:.2f}%"

    lines = [f"Classification of {target} on {n_test} held-out records", ""]
    lines.append(f"{'model':<24}{'accuracy':>10}{'sensitivity':>13}{'specificity':>13}")
    for name, m in rows:
        lines.append(f"{name:<24}{pct(m.accuracy):>10}{pct(m.sensitivity):>13}{pct(m.specificity):>13}")
    return "\n".join(lines) + "\n"


def risk_csv(reports: list[tuple[str, RiskReport]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["query", "context", "exposure", "value"])
    for name, r in reports:
        ctx = r.context_str()
        w.writerow([f"{name}.p_outcome_unexposed", ctx, r.exposure, _fmt(r.p_reference)])
        w.writerow([f"{name}.p_outcome_exposed", ctx, r.exposure, _fmt(r.p_treated)])
        w.writerow([f"{name}.arr", ctx, r.exposure, _fmt(r.absolute_risk_reduction)])
        w.writerow([f"{name}.nnt", ctx, r.exposure, _fmt(r.number_needed_to_treat)])
    return buf.getvalue()


def sweep_structures(data: np.ndarray, schema: Schema, alphas, search: SearchConfig):
    """Learn one structure per alpha; returns [(alpha, dag, score)]."""
    out = []
    for a in alphas:
        params = BdeuParams(a)
        dag, _ = hill_climb(data, schema, params, search)
        out.append((a, dag, bdeu_score(dag, data, schema, params)))
    return out


def sweep_summary(results, schema: Schema) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "edges", "score", "edge_list"])
    for a, dag, score in results:
        w.writerow([repr(a), len(dag.edges), repr(score), ";".join(f"{schema.codes[p]}>{schema.codes[c]}" for p, c in dag.edges)])
    return buf.getvalue()


def _alpha_tag(a: float) -> str:
    return f"{a:g}".replace(".", "p")


def _check_codes(schema: Schema, cfg: RunConfig):
    codes = set(schema.codes)
    wanted = [cfg.target]
    for q in cfg.queries:
        wanted += [q.exposure, q.outcome] + [c for c, _ in q.context]
    bad = [c for c in wanted if c not in codes]
    if bad:
        raise DataError(f"unknown variable(s) in config: {', '.join(sorted(set(bad)))}")


def _produce(cfg: RunConfig, out: Path, schema: Schema, threads: int | None):
    with _stage("ingest"):
        cfg.check_paths()
        _check_codes(schema, cfg)
        data = to_array(load_records(cfg.records, schema), schema)
        if len(data) < 2:
            raise DataError("need at least two records")
        train, test = train_test_split(data, cfg.split_fraction, cfg.seed)
        if len(test) == 0:
            raise DataError("split leaves no test records")

    with _stage("learn"):
        cache = ScoreCache(train, schema, cfg.bdeu)
        dag, trace = hill_climb(train, schema, cfg.bdeu, cfg.search, cache)
        _write(out, "structure.dot", dag_to_dot(dag, schema))
        _write(out, "structure.bn", format_bayesnet(dag, schema))
        _write(out, "trace.csv", trace.to_csv(schema))

    if cfg.alpha_sweep:
        with _stage("sweep"):
            results = sweep_structures(train, schema, cfg.alpha_sweep, cfg.search)
            for a, d, _ in results:
                _write(out, f"sweep/structure_alpha_{_alpha_tag(a)}.dot", dag_to_dot(d, schema))
                _write(out, f"sweep/structure_alpha_{_alpha_tag(a)}.bn", format_bayesnet(d, schema))
            _write(out, "sweep/summary.csv", sweep_summary(results, schema))
            figures.plot_alpha_sweep([a for a, _, _ in results], [len(d.edges) for _, d, _ in results],
                                     out / "sweep/edges_vs_alpha.png")

    with _stage("fit"):
        net = fit_parameters(dag, train, schema, cfg.bdeu)
        _write(out, "net.bn", format_bayesnet(net.dag, schema, net.cpts))

    with _stage("metrics"):
        bn_m = evaluate_classifier(net, test, cfg.target, cfg.threshold)
        lr = fit_lr(train, schema, cfg.target, config=cfg.lr)
        lr_m = evaluate_lr(lr, test, schema, cfg.threshold)
        rows = [("bayesian_network", bn_m), ("logistic_regression", lr_m)]
        _write(out, "metrics.csv", metrics_csv(rows))
        _write(out, "metrics.txt", metrics_text(rows, cfg.target, len(test)))
        _write(out, "lr_model.txt", lr.to_text())
        y = test[:, schema.index(cfg.target)]
        figures.plot_roc(
            {
                "Bayesian network": roc_points(posterior_scores(net, test, cfg.target), y),
                "logistic regression": roc_points(predict_proba(lr, test, schema), y),
            },
            out / "roc.png",
        )

    with _stage("infer"):
        reports = [(q.name, _query(net, q)) for q in cfg.queries]
        _write(out, "risk.csv", risk_csv(reports))
        _write(out, "risk.txt", "".join(f"{name}: {r.summary()}\n" for name, r in reports))
        if reports:
            figures.plot_risk(reports, out / "risk.png")

    dfg = None
    if cfg.events is not None:
        with _stage("mine"):
            traces = load_event_log(cfg.events)
            if cfg.dfg_filter:
                traces = filter_log(traces, parse_filter(cfg.dfg_filter))
            dfg = discover_dfg(traces)
            _write(out, "dfg.dot", dfg_to_dot(dfg, cfg.min_arc_count))

    with _stage("assure"):
        hazards = load_hazard_table(cfg.hazards, schema)
        template = load_template(cfg.template)
        findings = extract_findings(
            dag, schema, [r for _, r in reports], dfg,
            hazards=hazards, dfg_arcs=cfg.dfg_arcs if dfg is not None else (), all_adjacencies=True,
        )
        _write(out, "findings.csv", format_findings(findings))
        graph = build_argument(hazards, findings, template)
        _write(out, "argument.dot", gsn_to_dot(graph))
        report = gap_report(hazards, findings)
        _write(out, "gaps.txt", format_gap_report(report))
        _write(out, "gaps.csv", gap_report_csv(report))


def _query(net, q: Query) -> RiskReport:
    return risk_report(net, dict(q.context), q.exposure, q.outcome)


def build_manifest(out: Path, echo) -> RunManifest:
    entries = sorted(
        (p.relative_to(out).as_posix(), _sha256(p))
        for p in out.rglob("*")
        if p.is_file() and p.name != MANIFEST
    )
    return RunManifest(tuple(entries), tuple(echo))


def run_pipeline(cfg: RunConfig, schema: Schema = TABLE2_SCHEMA, threads: int | None = None) -> RunManifest:
    """Run every stage and write the run directory; returns its manifest.

    ``threads`` is accepted for interface compatibility; all stages are
    single-threaded and outputs do not depend on it.
    """
    out = cfg.output
    if out.exists() and (not out.is_dir() or (any(out.iterdir()) and not (out / MANIFEST).is_file())):
        raise DataError(f"output {out} exists and is not a previous run directory")
    out.parent.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        _produce(cfg, scratch, schema, threads)
        manifest = build_manifest(scratch, cfg.echo)
        _write(scratch, MANIFEST, manifest.to_text())
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    if out.exists():
        shutil.rmtree(out)
    scratch.rename(out)
    log.info("wrote %d artifacts to %s", len(manifest.entries), out)
    return manifest
