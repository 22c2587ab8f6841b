"""DAGs, family count tables, the BDeu score and the BayesNet text format."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import CyclicGraphError, DataError, SchemaError
from .records import Schema
from .special import lgamma


@dataclass(frozen=True)
class Dag:
    n: int
    parent_sets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.parent_sets) != self.n:
            raise DataError(f"expected {self.n} parent sets, got {len(self.parent_sets)}")
        for child, ps in enumerate(self.parent_sets):
            if tuple(sorted(set(ps))) != tuple(ps):
                raise DataError(f"parent set of node {child} must be sorted and unique: {ps}")
            if child in ps:
                raise CyclicGraphError(f"self-loop on node {child}")
            if any(not 0 <= p < self.n for p in ps):
                raise DataError(f"parent index out of range for node {child}: {ps}")

    @classmethod
    def empty(cls, n: int) -> "Dag":
        return cls(n, tuple(() for _ in range(n)))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Dag":
        parents: list[set[int]] = [set() for _ in range(n)]
        for a, b in edges:
            parents[b].add(a)
        return cls(n, tuple(tuple(sorted(p)) for p in parents))

    @property
    def edges(self) -> list[tuple[int, int]]:
        """Directed edges sorted by (source, target)."""
        return sorted((p, c) for c, ps in enumerate(self.parent_sets) for p in ps)

    def has_edge(self, a: int, b: int) -> bool:
        return a in self.parent_sets[b]

    def adjacent(self, a: int, b: int) -> bool:
        return self.has_edge(a, b) or self.has_edge(b, a)

    def with_parents(self, node: int, parents: Iterable[int]) -> "Dag":
        ps = list(self.parent_sets)
        ps[node] = tuple(sorted(parents))
        return Dag(self.n, tuple(ps))

    def children(self, node: int) -> list[int]:
        return [c for c, ps in enumerate(self.parent_sets) if node in ps]


def topological_order(dag: Dag) -> list[int]:
    """Kahn's algorithm, smallest ready index first; raises on cycles."""
    indeg = [len(ps) for ps in dag.parent_sets]
    children = [[] for _ in range(dag.n)]
    for c, ps in enumerate(dag.parent_sets):
        for p in ps:
            children[p].append(c)
    ready = sorted(i for i in range(dag.n) if indeg[i] == 0)
    order = []
    while ready:
        node = ready.pop(0)
        order.append(node)
        for c in children[node]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
        ready.sort()
    if len(order) != dag.n:
        raise CyclicGraphError("graph contains a directed cycle")
    return order


def is_acyclic(dag: Dag) -> bool:
    try:
        topological_order(dag)
    except CyclicGraphError:
        return False
    return True


# -- sufficient statistics ---------------------------------------------------


@dataclass(frozen=True)
class FamilyCounts:
    node: int
    parents: tuple[int, ...]
    q: int
    r: int
    counts: np.ndarray  # (q, r) int64

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def parent_config_index(data: np.ndarray, parents: Sequence[int], cards: Sequence[int]) -> np.ndarray:
    """Mixed-radix parent configuration per row; lowest parent index is most significant."""
    idx = np.zeros(len(data), dtype=np.int64)
    for p in parents:
        idx = idx * cards[p] + data[:, p]
    return idx


def count_family(node: int, parents: Sequence[int], data: np.ndarray, schema: Schema) -> FamilyCounts:
    cards = schema.cardinalities
    parents = tuple(sorted(parents))
    q = int(np.prod([cards[p] for p in parents], dtype=np.int64)) if parents else 1
    r = cards[node]
    if len(data):
        j = parent_config_index(data, parents, cards)
        flat = np.bincount(j * r + data[:, node], minlength=q * r)
    else:
        flat = np.zeros(q * r, dtype=np.int64)
    return FamilyCounts(node, parents, q, r, flat.astype(np.int64).reshape(q, r))


# -- BDeu --------------------------------------------------------------------


@dataclass(frozen=True)
class BdeuParams:
    alpha: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise DataError(f"equivalent sample size must be positive, got {self.alpha}")


def bdeu_family_score(fc: FamilyCounts, params: BdeuParams) -> float:
    """Log BDeu marginal likelihood of one family (natural log)."""
    a_ij = params.alpha / fc.q
    a_ijk = params.alpha / (fc.q * fc.r)
    n_ij = fc.row_totals
    row_part = lgamma(np.full(fc.q, a_ij)) - lgamma(a_ij + n_ij.astype(np.float64))
    cell_part = lgamma(a_ijk + fc.counts.astype(np.float64)) - lgamma(np.full(fc.counts.shape, a_ijk))
    total = 0.0
    # fixed summation order: ascending j, then k
    for j in range(fc.q):
        s = float(row_part[j])
        for k in range(fc.r):
            s += float(cell_part[j, k])
        total += s
    return total


class ScoreCache:
    """Family-score memo keyed on (node, parent set) for one dataset and alpha."""

    def __init__(self, data: np.ndarray, schema: Schema, params: BdeuParams):
        self.data = data
        self.schema = schema
        self.params = params
        self._scores: dict[tuple[int, tuple[int, ...]], float] = {}
        self.hits = 0
        self.misses = 0

    def family(self, node: int, parents: Sequence[int]) -> float:
        key = (node, tuple(parents))
        try:
            value = self._scores[key]
        except KeyError:
            self.misses += 1
            value = bdeu_family_score(count_family(node, key[1], self.data, self.schema), self.params)
            self._scores[key] = value
            return value
        self.hits += 1
        return value

    def invalidate(self, node: int):
        for key in [k for k in self._scores if k[0] == node]:
            del self._scores[key]

    def __len__(self) -> int:
        return len(self._scores)


def bdeu_score(
    dag: Dag,
    data: np.ndarray,
    schema: Schema,
    params: BdeuParams = BdeuParams(),
    cache: ScoreCache | None = None,
) -> float:
    topological_order(dag)  # raises on cycles
    if cache is None:
        cache = ScoreCache(data, schema, params)
    elif cache.params != params or cache.data is not data:
        raise DataError("score cache was built for a different dataset or alpha")
    total = 0.0
    for node in range(dag.n):
        total += cache.family(node, dag.parent_sets[node])
    return total


# -- parameterized networks --------------------------------------------------


@dataclass(frozen=True)
class BayesNet:
    dag: Dag
    schema: Schema
    cpts: tuple[np.ndarray, ...]  # per node, (q_i, r_i) rows sum to 1

    def __post_init__(self):
        if self.dag.n != len(self.schema):
            raise SchemaError("DAG size does not match schema")
        if len(self.cpts) != self.dag.n:
            raise DataError("one CPT per node required")
        cards = self.schema.cardinalities
        for i, cpt in enumerate(self.cpts):
            q = int(np.prod([cards[p] for p in self.dag.parent_sets[i]], dtype=np.int64))
            if cpt.shape != (q, cards[i]):
                raise DataError(
                    f"CPT of {self.schema.codes[i]} has shape {cpt.shape}, expected {(q, cards[i])}"
                )
            if np.any(cpt < 0) or np.any(np.abs(cpt.sum(axis=1) - 1.0) > 1e-9):
                raise DataError(f"CPT rows of {self.schema.codes[i]} must be distributions")

    def cpt(self, code: str) -> np.ndarray:
        return self.cpts[self.schema.index(code)]

    def parents_of(self, code: str) -> tuple[str, ...]:
        return tuple(self.schema.codes[p] for p in self.dag.parent_sets[self.schema.index(code)])


def format_bayesnet(dag: Dag, schema: Schema, cpts: Sequence[np.ndarray] | None = None) -> str:
    """Serialize in the ``bn v1`` text format; ``cpts=None`` gives structure only."""
    codes = schema.codes
    lines = [f"bn v1 {dag.n}"]
    for i in range(dag.n):
        pnames = " ".join(codes[p] for p in dag.parent_sets[i])
        lines.append(f"node {codes[i]} states {schema.cardinalities[i]} parents {pnames}".rstrip())
        if cpts is not None:
            for row in cpts[i]:
                lines.append(" ".join(format(float(p), ".17g") for p in row))
    return "\n".join(lines) + "\n"


def parse_bayesnet(text: str, schema: Schema | None = None) -> tuple[Dag, Schema, tuple[np.ndarray, ...] | None]:
    """Inverse of :func:`format_bayesnet`.

    Returns ``(dag, schema, cpts)``; ``cpts`` is None for a structure-only file.
    When ``schema`` is given, codes and cardinalities must agree with it.
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or lines[0].split()[:2] != ["bn", "v1"]:
        raise DataError("not a 'bn v1' file")
    n = int(lines[0].split()[2])
    nodes: list[tuple[str, int, list[str], list[list[float]]]] = []
    for ln in lines[1:]:
        tok = ln.split()
        if tok[0] == "node":
            if len(tok) < 5 or tok[2] != "states" or tok[4] != "parents":
                raise DataError(f"malformed node line: {ln!r}")
            nodes.append((tok[1], int(tok[3]), tok[5:], []))
        else:
            if not nodes:
                raise DataError("CPT row before first node line")
            nodes[-1][3].append([float(t) for t in tok])
    if len(nodes) != n:
        raise DataError(f"header declares {n} nodes, found {len(nodes)}")
    codes = [nd[0] for nd in nodes]
    cards = [nd[1] for nd in nodes]
    if schema is None:
        schema = Schema.generic(cards, codes)
    elif list(schema.codes) != codes or list(schema.cardinalities) != cards:
        raise SchemaError("network file does not match the schema (codes or state counts differ)")
    parent_sets = []
    for code, _, pnames, _ in nodes:
        try:
            parent_sets.append(tuple(sorted(codes.index(p) for p in pnames)))
        except ValueError:
            raise DataError(f"node {code}: unknown parent in {pnames}") from None
    dag = Dag(n, tuple(parent_sets))
    topological_order(dag)
    if all(not nd[3] for nd in nodes):
        return dag, schema, None
    cpts = tuple(np.array(nd[3], dtype=np.float64) for nd in nodes)
    return dag, schema, cpts


def write_bayesnet(path, net: BayesNet):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_bayesnet(net.dag, net.schema, net.cpts))


def read_bayesnet(path, schema: Schema | None = None) -> BayesNet:
    with open(path, encoding="utf-8") as fh:
        dag, schema, cpts = parse_bayesnet(fh.read(), schema)
    if cpts is None:
        raise DataError(f"{path}: structure-only file has no CPTs")
    return BayesNet(dag, schema, cpts)


def _dot_id(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def dag_to_dot(dag: Dag, schema: Schema, name: str = "structure") -> str:
    lines = [f"digraph {_dot_id(name)} {{"]
    for code in schema.codes:
        lines.append(f"  {_dot_id(code)};")
    for a, b in dag.edges:
        lines.append(f"  {_dot_id(schema.codes[a])} -> {_dot_id(schema.codes[b])};")
    lines.append("}")
    return "\n".join(lines) + "\n"
