"""Greedy search-and-score over DAGs, exhaustive enumeration for small n, CPDAGs."""

from __future__ import annotations

import csv
import io
import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .bn_core import BdeuParams, Dag, ScoreCache, bdeu_score, is_acyclic
from .errors import CyclicGraphError, DataError
from .records import Schema

log = logging.getLogger(__name__)

MOVE_KINDS = ("add", "delete", "reverse")

# Moves whose deltas differ by less than this (relative to the current score)
# are treated as tied and resolved lexicographically.
TIE_RTOL = 1e-10


@dataclass(frozen=True)
class SearchConfig:
    max_parents: int = 3
    moves: tuple[str, ...] = MOVE_KINDS
    max_iterations: int = 1000
    tie_break: str = "lexicographic-move"
    restarts: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.max_parents < 0:
            raise DataError("max_parents must be >= 0")
        if not self.moves or set(self.moves) - set(MOVE_KINDS):
            raise DataError(f"moves must be a non-empty subset of {MOVE_KINDS}")
        if self.tie_break != "lexicographic-move":
            raise DataError(f"unsupported tie_break {self.tie_break!r}")
        # canonical order so tie-breaking does not depend on how the user listed them
        object.__setattr__(self, "moves", tuple(k for k in MOVE_KINDS if k in self.moves))


@dataclass(frozen=True)
class TraceStep:
    iteration: int
    move: str
    src: int
    dst: int
    score_before: float
    score_after: float


@dataclass
class SearchTrace:
    steps: list[TraceStep] = field(default_factory=list)

    def scores(self) -> list[float]:
        if not self.steps:
            return []
        return [self.steps[0].score_before] + [s.score_after for s in self.steps]

    def to_csv(self, schema: Schema | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "move", "src", "dst", "score_before", "score_after"])
        for s in self.steps:
            src, dst = (schema.codes[s.src], schema.codes[s.dst]) if schema else (s.src, s.dst)
            w.writerow([s.iteration, s.move, src, dst, repr(s.score_before), repr(s.score_after)])
        return buf.getvalue()


class _Graph:
    """Mutable parent/child sets used inside the search loop."""

    def __init__(self, dag: Dag):
        self.n = dag.n
        self.parents = [set(ps) for ps in dag.parent_sets]
        self.children = [set() for _ in range(dag.n)]
        for c, ps in enumerate(dag.parent_sets):
            for p in ps:
                self.children[p].add(c)

    def reaches(self, start: int, goal: int, skip: tuple[int, int] | None = None) -> bool:
        stack, seen = [start], {start}
        while stack:
            u = stack.pop()
            for v in self.children[u]:
                if skip is not None and (u, v) == skip:
                    continue
                if v == goal:
                    return True
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return False

    def apply(self, kind: str, a: int, b: int):
        if kind == "add":
            self.parents[b].add(a)
            self.children[a].add(b)
        elif kind == "delete":
            self.parents[b].discard(a)
            self.children[a].discard(b)
        else:
            self.apply("delete", a, b)
            self.apply("add", b, a)

    def key(self, node: int) -> tuple[int, ...]:
        return tuple(sorted(self.parents[node]))

    def to_dag(self) -> Dag:
        return Dag(self.n, tuple(self.key(i) for i in range(self.n)))


def legal_moves(g: _Graph, cfg: SearchConfig) -> Iterator[tuple[str, int, int]]:
    """Single-edge moves in tie-break order: kind, then source, then target."""
    for kind in cfg.moves:
        for a in range(g.n):
            for b in range(g.n):
                if a == b:
                    continue
                if kind == "add":
                    if (
                        a not in g.parents[b]
                        and b not in g.parents[a]
                        and len(g.parents[b]) < cfg.max_parents
                        and not g.reaches(b, a)
                    ):
                        yield kind, a, b
                elif a in g.parents[b]:
                    if kind == "delete":
                        yield kind, a, b
                    elif len(g.parents[a]) < cfg.max_parents and not g.reaches(a, b, skip=(a, b)):
                        yield kind, a, b


def _move_delta(g: _Graph, cache: ScoreCache, fam: list[float], kind: str, a: int, b: int) -> float:
    if kind == "add":
        return cache.family(b, tuple(sorted(g.parents[b] | {a}))) - fam[b]
    if kind == "delete":
        return cache.family(b, tuple(sorted(g.parents[b] - {a}))) - fam[b]
    return (
        cache.family(b, tuple(sorted(g.parents[b] - {a})))
        - fam[b]
        + cache.family(a, tuple(sorted(g.parents[a] | {b})))
        - fam[a]
    )


def _total(fam: list[float]) -> float:
    s = 0.0
    for v in fam:
        s += v
    return s


def _inverse(kind: str, a: int, b: int) -> tuple[str, int, int]:
    if kind == "add":
        return "delete", a, b
    if kind == "delete":
        return "add", a, b
    return "reverse", b, a


def _climb(g: _Graph, cache: ScoreCache, cfg: SearchConfig) -> SearchTrace:
    fam = [cache.family(i, g.key(i)) for i in range(g.n)]
    total = _total(fam)
    trace = SearchTrace()
    for it in range(1, cfg.max_iterations + 1):
        best, best_delta = None, 0.0
        tol = TIE_RTOL * max(1.0, abs(total))
        for kind, a, b in legal_moves(g, cfg):
            d = _move_delta(g, cache, fam, kind, a, b)
            if d > 0 and (best is None or d > best_delta + tol):
                best, best_delta = (kind, a, b), d
        if best is None:
            break
        kind, a, b = best
        g.apply(kind, a, b)
        new_fam = list(fam)
        for node in (a, b):
            new_fam[node] = cache.family(node, g.key(node))
        new_total = _total(new_fam)
        if not new_total > total:
            # delta was positive but vanished in the node-ordered sum
            g.apply(*_inverse(kind, a, b))
            break
        fam = new_fam
        trace.steps.append(TraceStep(it, kind, a, b, total, new_total))
        total = new_total
    return trace


def hill_climb(
    data: np.ndarray,
    schema: Schema,
    params: BdeuParams = BdeuParams(),
    cfg: SearchConfig = SearchConfig(),
    cache: ScoreCache | None = None,
) -> tuple[Dag, SearchTrace]:
    """Greedy hill climbing from the empty graph.

    Each iteration scores every legal add/delete/reverse move and applies the
    best strict improvement; near-ties go to the lexicographically first move.
    With ``cfg.restarts > 0`` the best graph is randomly perturbed and climbed
    again; the returned trace belongs to the climb that produced the result.
    """
    if len(data) == 0:
        raise DataError("structure search needs a non-empty dataset")
    if cache is None:
        cache = ScoreCache(data, schema, params)
    g = _Graph(Dag.empty(len(schema)))
    trace = _climb(g, cache, cfg)
    best_dag = g.to_dag()
    best_score = bdeu_score(best_dag, data, schema, params, cache)

    rng = np.random.Generator(np.random.Philox(cfg.seed))
    for _ in range(cfg.restarts):
        g = _Graph(best_dag)
        for _ in range(max(1, g.n)):
            moves = list(legal_moves(g, SearchConfig(cfg.max_parents)))
            if not moves:
                break
            g.apply(*moves[int(rng.integers(len(moves)))])
        t = _climb(g, cache, cfg)
        dag = g.to_dag()
        score = bdeu_score(dag, data, schema, params, cache)
        if score > best_score + TIE_RTOL * max(1.0, abs(best_score)):
            best_dag, best_score, trace = dag, score, t
    return best_dag, trace


def is_local_optimum(dag: Dag, data: np.ndarray, schema: Schema, params: BdeuParams, cfg: SearchConfig) -> bool:
    """True when no single legal move strictly improves the score (beyond tie tolerance)."""
    cache = ScoreCache(data, schema, params)
    g = _Graph(dag)
    fam = [cache.family(i, g.key(i)) for i in range(g.n)]
    tol = TIE_RTOL * max(1.0, abs(_total(fam)))
    return all(_move_delta(g, cache, fam, *m) <= tol for m in legal_moves(g, cfg))


# -- exhaustive oracle ---------------------------------------------------------

MAX_EXHAUSTIVE_N = 4


def enumerate_dags(n: int) -> Iterator[Dag]:
    """All labelled DAGs on n nodes (each node pair: absent, forward or backward)."""
    pairs = list(itertools.combinations(range(n), 2))
    for choice in itertools.product((0, 1, 2), repeat=len(pairs)):
        edges = []
        for (a, b), c in zip(pairs, choice):
            if c == 1:
                edges.append((a, b))
            elif c == 2:
                edges.append((b, a))
        dag = Dag.from_edges(n, edges)
        if is_acyclic(dag):
            yield dag


def exhaustive_best(
    data: np.ndarray,
    schema: Schema,
    params: BdeuParams = BdeuParams(),
    max_n: int = MAX_EXHAUSTIVE_N,
) -> tuple[Dag, float]:
    """Score-maximizing DAG by brute force; ties go to fewer edges, then edge list order."""
    n = len(schema)
    if n > max_n:
        raise DataError(
            f"exhaustive search over {n} variables refused (limit {max_n}); use hill_climb instead"
        )
    cache = ScoreCache(data, schema, params)
    best: tuple[Dag, float] | None = None
    for dag in enumerate_dags(n):
        s = bdeu_score(dag, data, schema, params, cache)
        if best is None:
            best = (dag, s)
            continue
        tol = TIE_RTOL * max(1.0, abs(best[1]))
        if s > best[1] + tol:
            best = (dag, s)
        elif abs(s - best[1]) <= tol:
            if (len(dag.edges), dag.edges) < (len(best[0].edges), best[0].edges):
                best = (dag, s)
    assert best is not None
    return best


# -- equivalence classes -------------------------------------------------------


@dataclass(frozen=True)
class Pdag:
    """Partially directed graph: directed (a, b) pairs plus undirected pairs with a < b."""

    n: int
    directed: frozenset[tuple[int, int]]
    undirected: frozenset[tuple[int, int]]

    @property
    def skeleton(self) -> frozenset[tuple[int, int]]:
        return frozenset(tuple(sorted(e)) for e in self.directed) | self.undirected

    def adjacent(self, a: int, b: int) -> bool:
        return tuple(sorted((a, b))) in self.skeleton

    def mark(self, a: int, b: int) -> str:
        """Edge mark between a < b: '', '->', '<-' or '--'."""
        if (a, b) in self.directed:
            return "->"
        if (b, a) in self.directed:
            return "<-"
        if (min(a, b), max(a, b)) in self.undirected:
            return "--"
        return ""


def v_structures(dag: Dag) -> set[tuple[int, int, int]]:
    out = set()
    for c, ps in enumerate(dag.parent_sets):
        for a, b in itertools.combinations(ps, 2):
            if not dag.adjacent(a, b):
                out.add((a, c, b))
    return out


def to_cpdag(dag: Dag) -> Pdag:
    """Skeleton plus compelled orientations (v-structures closed under Meek rules 1-3)."""
    if not is_acyclic(dag):
        raise CyclicGraphError("to_cpdag needs an acyclic graph")
    n = dag.n
    directed: set[tuple[int, int]] = set()
    for a, c, b in v_structures(dag):
        directed.add((a, c))
        directed.add((b, c))
    undirected = {tuple(sorted(e)) for e in dag.edges} - {tuple(sorted(e)) for e in directed}

    def adj(a, b):
        return dag.adjacent(a, b)

    def und(a, b):
        return (min(a, b), max(a, b)) in undirected

    def orient(a, b):
        undirected.discard((min(a, b), max(a, b)))
        directed.add((a, b))

    changed = True
    while changed:
        changed = False
        for a, b in sorted(undirected):
            for x, y in ((a, b), (b, a)):
                if not und(x, y):
                    break
                # R1: z -> x -- y, z and y non-adjacent  =>  x -> y
                r1 = any((z, x) in directed and not adj(z, y) for z in range(n) if z != y)
                # R2: x -> z -> y and x -- y  =>  x -> y
                r2 = any((x, z) in directed and (z, y) in directed for z in range(n))
                # R3: x -- z1 -> y, x -- z2 -> y, z1, z2 non-adjacent  =>  x -> y
                zs = [z for z in range(n) if und(x, z) and (z, y) in directed]
                r3 = any(not adj(z1, z2) for z1, z2 in itertools.combinations(zs, 2))
                if r1 or r2 or r3:
                    orient(x, y)
                    changed = True
                    break
    return Pdag(n, frozenset(directed), frozenset(undirected))


def structural_hamming_distance(g1: Pdag, g2: Pdag) -> int:
    """Number of node pairs whose edge mark (absent, either direction, undirected) differs."""
    return sum(
        g1.mark(a, b) != g2.mark(a, b) for a, b in itertools.combinations(range(g1.n), 2)
    )
