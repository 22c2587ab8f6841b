"""Parameter estimation, exact inference, classifier metrics and risk queries."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .bn_core import BayesNet, BdeuParams, Dag, count_family, topological_order
from .errors import DataError, ZeroProbabilityEvidence
from .records import Schema
from .synthgen import make_rng

Evidence = Mapping[str, int]


def fit_parameters(dag: Dag, data: np.ndarray, schema: Schema, params: BdeuParams = BdeuParams()) -> BayesNet:
    """Posterior-mean CPTs under the BDeu-consistent Dirichlet prior."""
    topological_order(dag)
    cpts = []
    for node in range(dag.n):
        fc = count_family(node, dag.parent_sets[node], data, schema)
        a_ijk = params.alpha / (fc.q * fc.r)
        a_ij = params.alpha / fc.q
        theta = (fc.counts + a_ijk) / (fc.row_totals[:, None] + a_ij)
        cpts.append(theta)
    return BayesNet(dag, schema, tuple(cpts))


def check_evidence(net: BayesNet, evidence: Evidence):
    for code, state in evidence.items():
        idx = net.schema.index(code)
        if not 0 <= state < net.schema.cardinalities[idx]:
            raise DataError(f"evidence {code}={state} is not a valid state")


# -- variable elimination -------------------------------------------------------


@dataclass(frozen=True)
class Factor:
    vars: tuple[int, ...]
    table: np.ndarray

    def multiply(self, other: "Factor") -> "Factor":
        union = tuple(sorted(set(self.vars) | set(other.vars)))
        letters = {v: chr(ord("a") + i) for i, v in enumerate(union)}
        spec = "{},{}->{}".format(
            "".join(letters[v] for v in self.vars),
            "".join(letters[v] for v in other.vars),
            "".join(letters[v] for v in union),
        )
        return Factor(union, np.einsum(spec, self.table, other.table))

    def sum_out(self, var: int) -> "Factor":
        ax = self.vars.index(var)
        return Factor(self.vars[:ax] + self.vars[ax + 1 :], self.table.sum(axis=ax))

    def reduce(self, var: int, state: int) -> "Factor":
        if var not in self.vars:
            return self
        ax = self.vars.index(var)
        return Factor(self.vars[:ax] + self.vars[ax + 1 :], np.take(self.table, state, axis=ax))


def cpt_factor(net: BayesNet, node: int) -> Factor:
    cards = net.schema.cardinalities
    ps = net.dag.parent_sets[node]
    # mixed-radix rows reshape directly to (r_p1, ..., r_pk, r_node)
    table = net.cpts[node].reshape([cards[p] for p in ps] + [cards[node]])
    vars_ = ps + (node,)
    order = np.argsort(vars_)
    return Factor(tuple(vars_[i] for i in order), np.transpose(table, order))


def _min_degree_var(factors: list[Factor], candidates: set[int]) -> int:
    def degree(v):
        nbrs = set()
        for f in factors:
            if v in f.vars:
                nbrs.update(f.vars)
        nbrs.discard(v)
        return len(nbrs)

    return min(sorted(candidates), key=lambda v: (degree(v), v))


def infer(net: BayesNet, evidence: Evidence, target: str) -> dict[int, float]:
    """P(target | evidence) by variable elimination (min-degree order)."""
    check_evidence(net, evidence)
    if target in evidence:
        raise DataError(f"target {target} is part of the evidence")
    t = net.schema.index(target)
    ev = {net.schema.index(c): s for c, s in evidence.items()}
    factors = []
    for node in range(net.dag.n):
        f = cpt_factor(net, node)
        for v, s in ev.items():
            f = f.reduce(v, s)
        factors.append(f)
    hidden = set(range(net.dag.n)) - set(ev) - {t}
    while hidden:
        v = _min_degree_var(factors, hidden)
        hidden.discard(v)
        touching = [f for f in factors if v in f.vars]
        factors = [f for f in factors if v not in f.vars]
        prod = touching[0]
        for f in touching[1:]:
            prod = prod.multiply(f)
        factors.append(prod.sum_out(v))
    result = factors[0]
    for f in factors[1:]:
        result = result.multiply(f)
    assert result.vars == (t,)
    z = float(result.table.sum())
    if z <= 0.0:
        raise ZeroProbabilityEvidence(f"evidence {dict(evidence)} has probability zero")
    return {k: float(p) / z for k, p in enumerate(result.table)}


def infer_enumeration(net: BayesNet, evidence: Evidence, target: str) -> dict[int, float]:
    """Same query by summing the full joint; exponential, for cross-checking."""
    check_evidence(net, evidence)
    cards = net.schema.cardinalities
    t = net.schema.index(target)
    ev = {net.schema.index(c): s for c, s in evidence.items()}
    acc = [0.0] * cards[t]
    for x in itertools.product(*(range(r) for r in cards)):
        if any(x[v] != s for v, s in ev.items()):
            continue
        p = 1.0
        for node in range(net.dag.n):
            j = 0
            for par in net.dag.parent_sets[node]:
                j = j * cards[par] + x[par]
            p *= net.cpts[node][j, x[node]]
        acc[x[t]] += p
    z = sum(acc)
    if z <= 0.0:
        raise ZeroProbabilityEvidence(f"evidence {dict(evidence)} has probability zero")
    return {k: a / z for k, a in enumerate(acc)}


def d_separated(dag: Dag, x: int, y: int, given: set[int]) -> bool:
    """Reachability test (Bayes ball) for x and y given a conditioning set."""
    ancestors = set()
    frontier = list(given)
    while frontier:
        v = frontier.pop()
        if v not in ancestors:
            ancestors.add(v)
            frontier.extend(dag.parent_sets[v])
    children = [dag.children(v) for v in range(dag.n)]
    # (node, arrived-from-child?) states
    visited = set()
    stack = [(x, True)]
    while stack:
        v, up = stack.pop()
        if (v, up) in visited:
            continue
        visited.add((v, up))
        if v == y and v not in given:
            return False
        if up and v not in given:
            stack.extend((p, True) for p in dag.parent_sets[v])
            stack.extend((c, False) for c in children[v])
        elif not up:
            if v not in given:
                stack.extend((c, False) for c in children[v])
            if v in ancestors:
                stack.extend((p, True) for p in dag.parent_sets[v])
    return True


# -- classifier evaluation ----------------------------------------------------------


@dataclass(frozen=True)
class ClassifierMetrics:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total

    @property
    def sensitivity(self) -> float | None:
        pos = self.tp + self.fn
        return self.tp / pos if pos else None

    @property
    def specificity(self) -> float | None:
        neg = self.tn + self.fp
        return self.tn / neg if neg else None


def confusion_metrics(y_true: Sequence[int], y_pred: Sequence[int]) -> ClassifierMetrics:
    """Shared confusion-matrix path for every classifier in the package."""
    yt = np.asarray(y_true, dtype=np.int64)
    yp = np.asarray(y_pred, dtype=np.int64)
    if yt.shape != yp.shape or yt.size == 0:
        raise DataError("confusion_metrics needs equal-length, non-empty label vectors")
    return ClassifierMetrics(
        tp=int(np.sum((yt == 1) & (yp == 1))),
        tn=int(np.sum((yt == 0) & (yp == 0))),
        fp=int(np.sum((yt == 0) & (yp == 1))),
        fn=int(np.sum((yt == 1) & (yp == 0))),
    )


def posterior_scores(net: BayesNet, data: np.ndarray, target: str) -> np.ndarray:
    """P(target=1 | every other variable) for each row."""
    t = net.schema.index(target)
    others = [i for i in range(net.dag.n) if i != t]
    codes = net.schema.codes
    memo: dict[tuple[int, ...], float] = {}
    out = np.empty(len(data))
    for r, row in enumerate(data):
        key = tuple(int(row[i]) for i in others)
        if key not in memo:
            memo[key] = infer(net, {codes[i]: v for i, v in zip(others, key)}, target)[1]
        out[r] = memo[key]
    return out


def evaluate_classifier(net: BayesNet, test_data: np.ndarray, target: str, threshold: float = 0.5) -> ClassifierMetrics:
    if len(test_data) == 0:
        raise DataError("test set is empty")
    scores = posterior_scores(net, test_data, target)
    y = test_data[:, net.schema.index(target)]
    return confusion_metrics(y, (scores >= threshold).astype(np.int64))


def roc_points(scores: np.ndarray, y_true: np.ndarray, thresholds: Sequence[float] | None = None):
    """(threshold, sensitivity, specificity) triples over a threshold sweep."""
    if thresholds is None:
        thresholds = [i / 100 for i in range(101)]
    pts = []
    for th in thresholds:
        m = confusion_metrics(y_true, (scores >= th).astype(np.int64))
        pts.append((th, m.sensitivity, m.specificity))
    return pts


# -- risk queries ------------------------------------------------------------------


@dataclass(frozen=True)
class RiskReport:
    context: tuple[tuple[str, int], ...]
    exposure: str
    outcome: str
    p_reference: float  # P(outcome=1 | context, exposure=0)
    p_treated: float  # P(outcome=1 | context, exposure=1)
    reference_state: int = 0
    treated_state: int = 1
    outcome_state: int = 1

    @property
    def absolute_risk_reduction(self) -> float:
        return self.p_reference - self.p_treated

    @property
    def number_needed_to_treat(self) -> float | None:
        arr = self.absolute_risk_reduction
        return 1.0 / abs(arr) if arr != 0 else None

    @property
    def nnt_display(self) -> int | None:
        nnt = self.number_needed_to_treat
        return None if nnt is None else int(math.floor(nnt + 0.5))

    def context_str(self) -> str:
        return ",".join(f"{c}={s}" for c, s in self.context)

    def summary(self) -> str:
        arr = self.absolute_risk_reduction
        nnt = self.nnt_display
        nnt_s = "NNT undefined" if nnt is None else f"NNT {nnt}"
        return (
            f"{self.exposure} -> {self.outcome} | {self.context_str() or '(no context)'}: "
            f"P({self.outcome}=1 | {self.exposure}=0) = {self.p_reference:.4f}, "
            f"P({self.outcome}=1 | {self.exposure}=1) = {self.p_treated:.4f}; "
            f"ARR {arr * 100:.0f}%, {nnt_s}"
        )


def risk_report(net: BayesNet, context: Evidence, exposure: str, outcome: str) -> RiskReport:
    for code in (exposure, outcome):
        if net.schema[code].cardinality != 2:
            raise DataError(f"{code} must be binary for a risk report")
        if code in context:
            raise DataError(f"{code} must not be part of the context")
    ctx = tuple((c, int(s)) for c, s in context.items())
    x, y = net.schema.index(exposure), net.schema.index(outcome)
    given = {net.schema.index(c) for c in context}
    p0 = infer(net, {**context, exposure: 0}, outcome)[1]
    if d_separated(net.dag, x, y, given):
        # keep ARR exactly zero rather than rounding noise
        infer(net, {**context, exposure: 1}, outcome)
        p1 = p0
    else:
        p1 = infer(net, {**context, exposure: 1}, outcome)[1]
    return RiskReport(ctx, exposure, outcome, p0, p1)


def train_test_split(data, fraction: float = 0.8, seed: int = 0):
    """Seeded shuffle, then the first ceil(fraction * N) rows train."""
    if not 0 < fraction < 1:
        raise DataError("split fraction must lie strictly between 0 and 1")
    n = len(data)
    n_train = math.ceil(Fraction(repr(fraction)) * n)
    perm = make_rng(seed).permutation(n)
    tr, te = perm[:n_train], perm[n_train:]
    if isinstance(data, np.ndarray):
        return data[tr], data[te]
    return [data[i] for i in tr], [data[i] for i in te]
