"""SHARD hazard tables, GSN argument generation and the gap report.

The hazard table and the argument template are YAML documents.  Causes may
carry ``linked_variables``: pairs of study variables the analyst expects to
be directly dependent.  Those expectations are checked against the learnt
structure (skeleton adjacency only, directions ignored) and drive which
cause goals enter the argument and what appears in the gap report.
"""

from __future__ import annotations

import csv
import enum
import io
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import yaml

from .bn_core import Dag
from .bn_infer import RiskReport
from .bn_search import to_cpdag
from .errors import DataError, HazardTableError, InvariantViolation
from .procmine import DfgModel
from .records import Schema

DECISION_LABELS = frozenset("ABCDEFG")


class Guideword(str, enum.Enum):
    OMISSION = "Omission"
    COMMISSION = "Commission"
    EARLY = "Early"
    LATE = "Late"
    INCORRECT = "Incorrect"


_PROMPTS = {
    Guideword.OMISSION: "{flow} does not happen when it is required",
    Guideword.COMMISSION: "{flow} happens when it is not intended",
    Guideword.EARLY: "{flow} happens earlier than intended",
    Guideword.LATE: "{flow} happens later than intended",
    Guideword.INCORRECT: "{flow} happens but with the wrong content, value or form",
}


def guideword_checklist(flows: Sequence[str]) -> list[tuple[str, Guideword, str]]:
    """One prompt per (flow, guideword), flows in input order, guidewords in fixed order."""
    if not flows:
        raise DataError("guideword checklist needs at least one flow")
    return [
        (flow, gw, f"{gw.value}: what if {_PROMPTS[gw].format(flow=flow)}?")
        for flow in flows
        for gw in Guideword
    ]


class FactorKind(str, enum.Enum):
    CLINICAL = "clinical"
    ORGANISATIONAL = "organisational"
    TECHNICAL = "technical"


@dataclass(frozen=True)
class Cause:
    cause_id: str
    description: str
    decision_labels: tuple[str, ...] = ()
    factor_kind: FactorKind = FactorKind.CLINICAL
    linked_variables: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class HazardRow:
    hazard_id: str
    guideword: Guideword
    deviation: str
    causes: tuple[Cause, ...]
    detections: tuple[str, ...]
    effects: tuple[str, ...]


def _as_list(value, where: str) -> list:
    if value is None:
        return []
    if not isinstance(value, list):
        raise HazardTableError(f"{where}: expected a list")
    return value


def parse_hazard_table(text: str, schema: Schema | None = None) -> list[HazardRow]:
    """Validate and build hazard rows from YAML text.

    With a schema, every linked variable must be one of its codes.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise HazardTableError(f"hazard file is not valid YAML: {exc}") from None
    if not isinstance(doc, dict) or "hazards" not in doc:
        raise HazardTableError("hazard file needs a top-level 'hazards' list")
    rows = []
    seen_h: set[str] = set()
    seen_c: set[str] = set()
    for raw in _as_list(doc["hazards"], "hazards"):
        hid = str(raw.get("hazard_id", "")).strip()
        if not hid:
            raise HazardTableError("hazard without hazard_id")
        if hid in seen_h:
            raise HazardTableError(f"duplicate hazard_id {hid}")
        seen_h.add(hid)
        try:
            gw = Guideword(raw.get("guideword"))
        except ValueError:
            raise HazardTableError(f"{hid}: unknown guideword {raw.get('guideword')!r}") from None
        causes = []
        for rc in _as_list(raw.get("causes"), f"{hid}.causes"):
            cid = str(rc.get("cause_id", "")).strip()
            if not cid:
                raise HazardTableError(f"{hid}: cause without cause_id")
            if cid in seen_c:
                raise HazardTableError(f"duplicate cause_id {cid}")
            seen_c.add(cid)
            labels = tuple(str(x) for x in _as_list(rc.get("decision_labels"), cid))
            bad = [x for x in labels if x not in DECISION_LABELS]
            if bad:
                raise HazardTableError(f"{cid}: dangling decision label(s) {bad}")
            try:
                kind = FactorKind(rc.get("factor_kind", "clinical"))
            except ValueError:
                raise HazardTableError(f"{cid}: unknown factor_kind {rc.get('factor_kind')!r}") from None
            links = []
            for pair in _as_list(rc.get("linked_variables"), cid):
                if not isinstance(pair, list) or len(pair) != 2:
                    raise HazardTableError(f"{cid}: linked_variables entries must be pairs")
                a, b = str(pair[0]), str(pair[1])
                if schema is not None:
                    for code in (a, b):
                        if code not in schema.codes:
                            raise HazardTableError(f"{cid}: linked variable {code!r} not in schema")
                links.append((a, b))
            causes.append(
                Cause(cid, str(rc.get("description", "")).strip(), labels, kind, tuple(links))
            )
        effects = tuple(str(e) for e in _as_list(raw.get("effects"), f"{hid}.effects"))
        if not causes:
            raise HazardTableError(f"{hid}: at least one cause required")
        if not effects:
            raise HazardTableError(f"{hid}: at least one effect required")
        rows.append(
            HazardRow(
                hid,
                gw,
                str(raw.get("deviation", "")).strip(),
                tuple(causes),
                tuple(str(d) for d in _as_list(raw.get("detections"), f"{hid}.detections")),
                effects,
            )
        )
    return rows


def load_hazard_table(path: str | Path | None = None, schema: Schema | None = None) -> list[HazardRow]:
    """Load a hazard file; with no path, the shipped SHARD table."""
    if path is None:
        text = resources.files("medassure").joinpath("data/table1.hz").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_hazard_table(text, schema)


# -- findings ----------------------------------------------------------------------


class FindingKind(str, enum.Enum):
    EDGE_PRESENT = "edge_present"
    EDGE_ABSENT = "edge_absent"
    RISK_DELTA = "risk_delta"
    DFG_ARC = "dfg_arc"


@dataclass(frozen=True)
class Finding:
    finding_id: str
    kind: FindingKind
    a: str
    b: str
    value: float | None = None
    source: str = ""
    detail: str = ""

    @property
    def pair(self) -> frozenset[str]:
        return frozenset((self.a, self.b))


FINDING_FIELDS = ("finding_id", "kind", "a", "b", "value", "source", "detail")


def expected_pairs(hazards: Iterable[HazardRow]) -> list[tuple[str, str]]:
    """Distinct unordered linked-variable pairs in first-mention order."""
    out, seen = [], set()
    for h in hazards:
        for c in h.causes:
            for a, b in c.linked_variables:
                key = frozenset((a, b))
                if key not in seen:
                    seen.add(key)
                    out.append((a, b))
    return out


def extract_findings(
    dag: Dag,
    schema: Schema,
    risk_reports: Sequence[RiskReport] = (),
    dfg: DfgModel | None = None,
    *,
    hazards: Sequence[HazardRow] = (),
    dfg_arcs: Sequence[tuple[str, str]] = (),
    all_adjacencies: bool = False,
) -> list[Finding]:
    """Turn learnt models into findings.

    Edge findings are judged on CPDAG skeleton adjacency.  One per expected
    pair; with ``all_adjacencies`` also one ``edge_present`` per learnt
    adjacency that no cause anticipates.
    """
    skeleton = to_cpdag(dag).skeleton
    codes = schema.codes

    def adjacent(a, b):
        i, j = sorted((schema.index(a), schema.index(b)))
        return (i, j) in skeleton

    findings: list[Finding] = []

    def add(kind, a, b, value=None, source="", detail=""):
        findings.append(Finding(f"F{len(findings) + 1:03d}", kind, a, b, value, source, detail))

    expected = expected_pairs(hazards)
    for a, b in expected:
        kind = FindingKind.EDGE_PRESENT if adjacent(a, b) else FindingKind.EDGE_ABSENT
        add(kind, a, b, source="structure")
    if all_adjacencies:
        exp = {frozenset(p) for p in expected}
        for i, j in sorted(skeleton):
            if frozenset((codes[i], codes[j])) not in exp:
                add(FindingKind.EDGE_PRESENT, codes[i], codes[j], source="structure")
    for rr in risk_reports:
        add(
            FindingKind.RISK_DELTA,
            rr.exposure,
            rr.outcome,
            rr.absolute_risk_reduction,
            source="inference",
            detail=rr.context_str(),
        )
    if dfg is not None:
        for a, b in dfg_arcs:
            add(FindingKind.DFG_ARC, a, b, float(dfg.arc_counts.get((a, b), 0)), source="dfg")
    return findings


def format_findings(findings: Sequence[Finding]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FINDING_FIELDS)
    for f in findings:
        w.writerow([f.finding_id, f.kind.value, f.a, f.b, "" if f.value is None else repr(f.value), f.source, f.detail])
    return buf.getvalue()


def parse_findings(fh: Iterable[str]) -> list[Finding]:
    reader = csv.DictReader(fh)
    if reader.fieldnames is None or set(FINDING_FIELDS) - set(reader.fieldnames):
        raise DataError(f"findings CSV needs columns {','.join(FINDING_FIELDS)}")
    out = []
    for rowno, row in enumerate(reader, start=2):
        try:
            kind = FindingKind(row["kind"])
            value = float(row["value"]) if row["value"] else None
        except ValueError:
            raise DataError(f"findings row {rowno}: bad kind or value") from None
        out.append(Finding(row["finding_id"], kind, row["a"], row["b"], value, row["source"], row["detail"]))
    return out


def load_findings(path: str | Path) -> list[Finding]:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_findings(fh)


# -- cause classification -------------------------------------------------------------


def _edge_status(findings: Sequence[Finding]) -> dict[frozenset[str], Finding]:
    return {
        f.pair: f
        for f in findings
        if f.kind in (FindingKind.EDGE_PRESENT, FindingKind.EDGE_ABSENT)
    }


def refuted_links(cause: Cause, findings: Sequence[Finding]) -> list[Finding]:
    status = _edge_status(findings)
    return [
        status[frozenset(p)]
        for p in cause.linked_variables
        if frozenset(p) in status and status[frozenset(p)].kind is FindingKind.EDGE_ABSENT
    ]


def is_excluded(cause: Cause, findings: Sequence[Finding]) -> bool:
    """A cause drops out when every dependency it predicts is absent from the learnt structure.

    When only some are absent, the cause stays and the refuted sub-hypotheses
    go to the gap report.
    """
    return bool(cause.linked_variables) and len(refuted_links(cause, findings)) == len(cause.linked_variables)


def supporting_findings(cause: Cause, findings: Sequence[Finding]) -> list[Finding]:
    pairs = {frozenset(p) for p in cause.linked_variables}
    return [
        f
        for f in findings
        if f.pair in pairs and f.kind in (FindingKind.EDGE_PRESENT, FindingKind.RISK_DELTA)
    ]


# -- GSN ----------------------------------------------------------------------------


class NodeKind(str, enum.Enum):
    GOAL = "Goal"
    STRATEGY = "Strategy"
    CONTEXT = "Context"
    SOLUTION = "Solution"


@dataclass(frozen=True)
class GsnNode:
    node_id: str
    kind: NodeKind
    statement: str
    developed: bool = True


@dataclass(frozen=True)
class ArgumentGraph:
    nodes: tuple[GsnNode, ...]
    supported_by: tuple[tuple[str, str], ...]
    in_context_of: tuple[tuple[str, str], ...]
    trace_links: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def node(self, node_id: str) -> GsnNode:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def children(self, node_id: str) -> list[str]:
        return [b for a, b in self.supported_by if a == node_id]

    def traces(self, node_id: str) -> tuple[str, ...]:
        return dict(self.trace_links).get(node_id, ())

    def descendants(self, node_id: str) -> list[str]:
        out, stack = [], list(self.children(node_id))
        while stack:
            n = stack.pop(0)
            out.append(n)
            stack.extend(self.children(n))
        return out

    def validate(self):
        ids = [n.node_id for n in self.nodes]
        if len(ids) != len(set(ids)):
            raise InvariantViolation("duplicate GSN node ids")
        kinds = {n.node_id: n.kind for n in self.nodes}
        for a, b in self.supported_by:
            if kinds.get(a) not in (NodeKind.GOAL, NodeKind.STRATEGY):
                raise InvariantViolation(f"{a} cannot be supported by anything")
            if kinds.get(b) not in (NodeKind.GOAL, NodeKind.STRATEGY, NodeKind.SOLUTION):
                raise InvariantViolation(f"{b} cannot support another node")
        for a, b in self.in_context_of:
            if kinds.get(b) is not NodeKind.CONTEXT or a not in kinds:
                raise InvariantViolation(f"bad in_context_of link {a} -> {b}")
        for n in self.nodes:
            if n.kind is NodeKind.SOLUTION and not n.developed:
                raise InvariantViolation(f"solution {n.node_id} must be developed")
        # acyclicity by Kahn's algorithm
        indeg = {i: 0 for i in ids}
        for _, b in self.supported_by:
            indeg[b] += 1
        ready = [i for i in ids if indeg[i] == 0]
        seen = 0
        while ready:
            u = ready.pop()
            seen += 1
            for v in self.children(u):
                indeg[v] -= 1
                if indeg[v] == 0:
                    ready.append(v)
        if seen != len(ids):
            raise InvariantViolation("supported_by relation has a cycle")
        for n in self.nodes:
            if n.kind is NodeKind.GOAL and n.developed and not self.children(n.node_id):
                raise InvariantViolation(f"developed leaf goal {n.node_id} has no solution")
            if n.kind is NodeKind.GOAL and n.developed and not any(
                kinds[d] is NodeKind.SOLUTION for d in self.descendants(n.node_id)
            ):
                raise InvariantViolation(f"developed goal {n.node_id} has no solution below it")


@dataclass(frozen=True)
class ArgumentTemplate:
    template_id: str
    top_goal: str
    top_context: tuple[str, ...]
    phase_strategy: str
    phases: tuple[tuple[str, str, tuple[str, ...]], ...]  # (name, statement, labels)
    hazard_phase: str
    hazard_strategy: str
    hazard_groups: tuple[tuple[str, tuple[str, ...]], ...]  # (statement, hazard ids)
    hazard_context: tuple[str, ...]
    cause_strategy: str
    routed_strategy: str
    cause_statements: dict = field(default_factory=dict)

    def phase_of_label(self, label: str) -> str | None:
        for name, _, labels in self.phases:
            if label in labels:
                return name
        return None


def parse_template(text: str) -> ArgumentTemplate:
    doc = yaml.safe_load(text)
    try:
        phases = tuple((p["name"], p["statement"], tuple(p.get("labels", []))) for p in doc["phases"])
        t = ArgumentTemplate(
            template_id=doc["template_id"],
            top_goal=doc["top_goal"],
            top_context=tuple(doc.get("top_context", [])),
            phase_strategy=doc["phase_strategy"],
            phases=phases,
            hazard_phase=doc["hazard_phase"],
            hazard_strategy=doc["hazard_strategy"],
            hazard_groups=tuple((g["statement"], tuple(g["hazards"])) for g in doc.get("hazard_groups", [])),
            hazard_context=tuple(doc.get("hazard_context", [])),
            cause_strategy=doc["cause_strategy"],
            routed_strategy=doc["routed_strategy"],
            cause_statements=dict(doc.get("cause_statements") or {}),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"argument template missing field: {exc}") from None
    if t.hazard_phase not in [p[0] for p in phases]:
        raise DataError(f"hazard_phase {t.hazard_phase!r} is not one of the phases")
    return t


def load_template(path: str | Path | None = None) -> ArgumentTemplate:
    if path is None:
        text = resources.files("medassure").joinpath("data/af_argument.yaml").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_template(text)


def route_cause(cause: Cause, template: ArgumentTemplate) -> list[str]:
    """Phases whose branch should argue over this cause.

    A cause stays in the hazard's own phase when it has no decision labels
    or any label belongs to that phase; otherwise it moves to the phases its
    labels belong to.
    """
    home = template.hazard_phase
    phases = [template.phase_of_label(lbl) for lbl in cause.decision_labels]
    phases = [p for p in phases if p is not None]
    if not phases or home in phases:
        return [home]
    out = []
    for p in phases:
        if p not in out:
            out.append(p)
    return out


@dataclass
class _Builder:
    nodes: list = field(default_factory=list)
    supported: list = field(default_factory=list)
    context: list = field(default_factory=list)
    traces: list = field(default_factory=list)

    def add(self, node_id, kind, statement, developed=True, parent=None, trace=()):
        self.nodes.append(GsnNode(node_id, kind, statement, developed))
        if parent is not None:
            if kind is NodeKind.CONTEXT:
                self.context.append((parent, node_id))
            else:
                self.supported.append((parent, node_id))
        if trace:
            self.traces.append((node_id, tuple(trace)))
        return node_id


def _solution_statement(f: Finding) -> str:
    if f.kind is FindingKind.EDGE_PRESENT:
        return f"Learnt BN structure: direct dependency {f.a} -- {f.b}"
    if f.kind is FindingKind.RISK_DELTA:
        ctx = f" given {f.detail}" if f.detail else ""
        return f"BN risk query: effect of {f.a} on {f.b}{ctx}, ARR {f.value:.3f}"
    return f"Process model: {f.a} -> {f.b} observed {int(f.value or 0)} times"


def build_argument(
    hazards: Sequence[HazardRow],
    findings: Sequence[Finding],
    template: ArgumentTemplate | None = None,
) -> ArgumentGraph:
    """Assemble the GSN argument from hazards, findings and a template.

    Layout: top goal -> strategy over phases -> phase goals; the hazard phase
    argues over hazard groups, each hazard over its causes.  Causes whose
    predicted dependencies are all absent are left out (they surface in the
    gap report); causes belonging to other phases are argued in those
    branches.  Goals without evidence are marked undeveloped.
    """
    if not hazards:
        raise DataError("build_argument needs at least one hazard")
    if template is None:
        template = load_template()
    by_id = {h.hazard_id: h for h in hazards}
    b = _Builder()
    top = b.add("G_top", NodeKind.GOAL, template.top_goal)
    for i, ctx in enumerate(template.top_context, start=1):
        b.add(f"C_top_{i}", NodeKind.CONTEXT, ctx, parent=top)
    s_phase = b.add("S_phases", NodeKind.STRATEGY, template.phase_strategy, parent=top)

    routed: dict[str, list[tuple[HazardRow, Cause]]] = {p[0]: [] for p in template.phases}
    hazard_branch: list[tuple[str, HazardRow, list[Cause]]] = []
    for h in hazards:
        kept = []
        for c in h.causes:
            if is_excluded(c, findings):
                continue
            phases = route_cause(c, template)
            if phases == [template.hazard_phase]:
                kept.append(c)
            else:
                for p in phases:
                    routed[p].append((h, c))
        hazard_branch.append((h.hazard_id, h, kept))
    kept_by_hazard = {hid: kept for hid, _, kept in hazard_branch}

    def cause_goal(parent, node_id, h, c):
        statement = template.cause_statements.get(c.cause_id, f"{c.description} controlled")
        support = supporting_findings(c, findings)
        g = b.add(node_id, NodeKind.GOAL, statement, developed=bool(support), parent=parent,
                  trace=(h.hazard_id, c.cause_id))
        for f in support:
            b.add(f"Sn_{node_id[2:]}_{f.finding_id}", NodeKind.SOLUTION, _solution_statement(f),
                  parent=g, trace=(f.finding_id,))

    def hazard_goal(parent, node_id, statement, h):
        kept = kept_by_hazard[h.hazard_id]
        effects = set(h.effects)
        risk = [f for f in findings if f.kind is FindingKind.RISK_DELTA and f.b in effects]
        g = b.add(node_id, NodeKind.GOAL, statement, developed=bool(kept or risk), parent=parent,
                  trace=(h.hazard_id,))
        for i, ctx in enumerate(template.hazard_context, start=1):
            b.add(f"C_{h.hazard_id}_{i}", NodeKind.CONTEXT, ctx.format(hazard_id=h.hazard_id), parent=g)
        for f in risk:
            b.add(f"Sn_{h.hazard_id}_{f.finding_id}", NodeKind.SOLUTION, _solution_statement(f),
                  parent=g, trace=(f.finding_id,))
        if kept:
            s = b.add(f"S_{h.hazard_id}", NodeKind.STRATEGY,
                      template.cause_strategy.format(hazard_id=h.hazard_id), parent=g)
            for c in kept:
                cause_goal(s, f"G_{c.cause_id}", h, c)

    grouped = set()
    for name, statement, _ in template.phases:
        g_phase = f"G_phase_{name}"
        if name == template.hazard_phase:
            b.add(g_phase, NodeKind.GOAL, statement, parent=s_phase)
            s_h = b.add("S_hazards", NodeKind.STRATEGY, template.hazard_strategy, parent=g_phase)
            for gi, (gstatement, hids) in enumerate(template.hazard_groups, start=1):
                members = [by_id[x] for x in hids if x in by_id]
                if not members:
                    continue
                grouped.update(h.hazard_id for h in members)
                if len(members) == 1:
                    hazard_goal(s_h, f"G_{members[0].hazard_id}", gstatement, members[0])
                else:
                    gg = b.add(f"G_group_{gi}", NodeKind.GOAL, gstatement, parent=s_h,
                               trace=tuple(h.hazard_id for h in members))
                    for h in members:
                        hazard_goal(gg, f"G_{h.hazard_id}", f"{h.deviation} is controlled", h)
            for h in hazards:
                if h.hazard_id not in grouped:
                    hazard_goal(s_h, f"G_{h.hazard_id}", f"{h.deviation} is controlled", h)
        else:
            items = routed[name]
            b.add(g_phase, NodeKind.GOAL, statement, developed=bool(items), parent=s_phase)
            if items:
                s_r = b.add(f"S_phase_{name}", NodeKind.STRATEGY,
                            template.routed_strategy.format(phase=name), parent=g_phase)
                for h, c in items:
                    cause_goal(s_r, f"G_{c.cause_id}_{name}", h, c)

    graph = ArgumentGraph(tuple(b.nodes), tuple(b.supported), tuple(b.context), tuple(b.traces))
    graph = _settle_development(graph)
    graph.validate()
    return graph


def _settle_development(graph: ArgumentGraph) -> ArgumentGraph:
    """Mark goals undeveloped when no solution sits anywhere below them."""
    kinds = {n.node_id: n.kind for n in graph.nodes}
    nodes = []
    for n in graph.nodes:
        if n.kind is NodeKind.GOAL:
            has_solution = any(kinds[d] is NodeKind.SOLUTION for d in graph.descendants(n.node_id))
            n = GsnNode(n.node_id, n.kind, n.statement, has_solution)
        nodes.append(n)
    return ArgumentGraph(tuple(nodes), graph.supported_by, graph.in_context_of, graph.trace_links)


def cause_accounting(graph: ArgumentGraph, hazard: HazardRow, findings: Sequence[Finding]) -> dict[str, list[str]]:
    """Where each cause of a hazard ended up: leaf goal, another phase, or excluded."""
    out = {"leaf": [], "routed": [], "excluded": []}
    ids = {n.node_id for n in graph.nodes}
    under_hazard = set(graph.descendants(f"G_{hazard.hazard_id}")) if f"G_{hazard.hazard_id}" in ids else set()
    for c in hazard.causes:
        if f"G_{c.cause_id}" in under_hazard:
            out["leaf"].append(c.cause_id)
        elif any(i.startswith(f"G_{c.cause_id}_") for i in ids):
            out["routed"].append(c.cause_id)
        elif is_excluded(c, findings):
            out["excluded"].append(c.cause_id)
    return out


def leaf_goals(graph: ArgumentGraph, under: str) -> list[str]:
    """Goal ids below ``under`` with no goal or strategy children."""
    kinds = {n.node_id: n.kind for n in graph.nodes}
    out = []
    for d in graph.descendants(under):
        if kinds[d] is NodeKind.GOAL and not any(
            kinds[c] in (NodeKind.GOAL, NodeKind.STRATEGY) for c in graph.children(d)
        ):
            out.append(d)
    return out


# -- DOT ------------------------------------------------------------------------------

_SHAPES = {
    NodeKind.GOAL: 'shape=box',
    NodeKind.STRATEGY: 'shape=parallelogram',
    NodeKind.CONTEXT: 'shape=box, style=rounded',
    NodeKind.SOLUTION: 'shape=circle',
}
_UNDEV = "__undeveloped"


def _q(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def gsn_to_dot(graph: ArgumentGraph) -> str:
    """GSN argument as DOT; undeveloped goals get a small diamond beneath them."""
    traces = dict(graph.trace_links)
    lines = ["digraph gsn {", "  rankdir=TB;", '  node [fontname="Helvetica"];']
    for n in graph.nodes:
        attrs = [_SHAPES[n.kind], f"label={_q(n.statement)}", f"gsn_kind={n.kind.value}",
                 f"developed={'true' if n.developed else 'false'}"]
        if n.node_id in traces:
            attrs.append(f"trace={_q(';'.join(traces[n.node_id]))}")
        lines.append(f"  {_q(n.node_id)} [{', '.join(attrs)}];")
        if not n.developed:
            marker = n.node_id + _UNDEV
            lines.append(f'  {_q(marker)} [shape=diamond, label="", width=0.25, height=0.25];')
            lines.append(f"  {_q(n.node_id)} -> {_q(marker)} [arrowhead=none];")
    for a, b in graph.supported_by:
        lines.append(f"  {_q(a)} -> {_q(b)} [rel=supported_by, arrowhead=normal];")
    for a, b in graph.in_context_of:
        lines.append(f"  {_q(a)} -> {_q(b)} [rel=in_context_of, arrowhead=empty];")
    lines.append("}")
    return "\n".join(lines) + "\n"


_STR = r'"(?:[^"\\]|\\.)*"'
_NODE_RE = re.compile(rf"^\s*({_STR})\s*\[(.*)\];\s*$")
_EDGE_RE = re.compile(rf"^\s*({_STR})\s*->\s*({_STR})\s*\[(.*)\];\s*$")
_ATTR_RE = re.compile(rf"(\w+)\s*=\s*({_STR}|[^,\s]+)")


def _unq(s: str) -> str:
    if s.startswith('"'):
        s = s[1:-1]
        return re.sub(r"\\(.)", r"\1", s)
    return s


def parse_gsn_dot(text: str) -> ArgumentGraph:
    """Read back DOT produced by :func:`gsn_to_dot`."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("digraph"):
        raise DataError("not a DOT digraph")
    nodes, supported, context, traces = [], [], [], []
    for ln in lines[1:]:
        m = _EDGE_RE.match(ln)
        if m:
            attrs = {k: _unq(v) for k, v in _ATTR_RE.findall(m.group(3))}
            a, b = _unq(m.group(1)), _unq(m.group(2))
            rel = attrs.get("rel")
            if rel == "supported_by":
                supported.append((a, b))
            elif rel == "in_context_of":
                context.append((a, b))
            continue
        m = _NODE_RE.match(ln)
        if m:
            node_id = _unq(m.group(1))
            attrs = {k: _unq(v) for k, v in _ATTR_RE.findall(m.group(2))}
            if "gsn_kind" not in attrs:
                continue
            nodes.append(GsnNode(node_id, NodeKind(attrs["gsn_kind"]), attrs["label"], attrs["developed"] == "true"))
            if "trace" in attrs:
                traces.append((node_id, tuple(attrs["trace"].split(";"))))
    return ArgumentGraph(tuple(nodes), tuple(supported), tuple(context), tuple(traces))


# -- gap report -----------------------------------------------------------------------


@dataclass(frozen=True)
class GapReport:
    expected_absent: tuple[tuple[Finding, tuple[str, ...]], ...]  # finding, cause ids expecting it
    unanticipated: tuple[Finding, ...]
    risk_deltas: tuple[Finding, ...]
    confirming: tuple[Finding, ...]
    excluded_causes: tuple[str, ...]

    def sections(self) -> dict[str, list[Finding]]:
        return {
            "expected_absent": [f for f, _ in self.expected_absent],
            "unanticipated": list(self.unanticipated),
            "risk_delta": list(self.risk_deltas),
            "confirming": list(self.confirming),
        }


def gap_report(hazards: Sequence[HazardRow], findings: Sequence[Finding]) -> GapReport:
    expecters: dict[frozenset[str], list[str]] = {}
    for h in hazards:
        for c in h.causes:
            for p in c.linked_variables:
                expecters.setdefault(frozenset(p), []).append(c.cause_id)
    absent, unant, risk, confirm = [], [], [], []
    for f in findings:
        if f.kind is FindingKind.RISK_DELTA:
            risk.append(f)
        elif f.kind is FindingKind.EDGE_ABSENT:
            if f.pair in expecters:
                absent.append((f, tuple(expecters[f.pair])))
            else:
                confirm.append(f)  # absence nobody predicted against
        elif f.pair in expecters:
            confirm.append(f)
        else:
            unant.append(f)
    excluded = tuple(c.cause_id for h in hazards for c in h.causes if is_excluded(c, findings))
    key = lambda f: f.finding_id  # noqa: E731
    return GapReport(
        tuple(sorted(absent, key=lambda x: x[0].finding_id)),
        tuple(sorted(unant, key=key)),
        tuple(sorted(risk, key=key)),
        tuple(sorted(confirm, key=key)),
        excluded,
    )


def _risk_line(f: Finding) -> str:
    arr = f.value or 0.0
    if arr == 0:
        nnt = "NNT undefined"
    else:
        nnt = f"NNT {int(1.0 / abs(arr) + 0.5)}"
    ctx = f" | {f.detail}" if f.detail else ""
    return f"{f.a} -> {f.b}{ctx}: ARR {arr * 100:.0f}%, {nnt}"


def _pair_line(f: Finding) -> str:
    if f.kind is FindingKind.DFG_ARC:
        return f"{f.a} -> {f.b} (process model, {int(f.value or 0)} times)"
    return f"{f.a} -- {f.b} ({f.kind.value})"


def format_gap_report(report: GapReport) -> str:
    out = ["Gap report: work-as-imagined vs work-as-observed", ""]
    out.append("(i) Expected dependencies not found in the learnt structure")
    for f, causes in report.expected_absent:
        out.append(f"  [{f.finding_id}] {f.a} -- {f.b}  expected by {', '.join(causes)}")
    if not report.expected_absent:
        out.append("  none")
    out += ["", "(ii) Observed relationships not anticipated by any hazard cause"]
    out += [f"  [{f.finding_id}] {_pair_line(f)}" for f in report.unanticipated] or ["  none"]
    out += ["", "(iii) Risk differences"]
    out += [f"  [{f.finding_id}] {_risk_line(f)}" for f in report.risk_deltas] or ["  none"]
    out += ["", "Confirming findings"]
    out += [f"  [{f.finding_id}] {_pair_line(f)}" for f in report.confirming] or ["  none"]
    out += ["", "Causes left out of the argument"]
    out += [f"  {c}" for c in report.excluded_causes] or ["  none"]
    return "\n".join(out) + "\n"


def gap_report_csv(report: GapReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["section", "finding_id", "kind", "a", "b", "value", "detail"])
    for name, items in report.sections().items():
        for f in items:
            w.writerow([name, f.finding_id, f.kind.value, f.a, f.b, "" if f.value is None else repr(f.value), f.detail])
    return buf.getvalue()
