import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import all_digraphs, bdeu_direct, bdeu_product_form, has_cycle, prequential_log_ml, tally

from medassure.bn_core import (
    BayesNet,
    BdeuParams,
    Dag,
    FamilyCounts,
    ScoreCache,
    bdeu_family_score,
    bdeu_score,
    count_family,
    dag_to_dot,
    format_bayesnet,
    is_acyclic,
    parse_bayesnet,
    topological_order,
)
from medassure.errors import CyclicGraphError, DataError, SchemaError
from medassure.records import Schema


def _fc(counts):
    c = np.asarray(counts, dtype=np.int64)
    return FamilyCounts(0, (), c.shape[0], c.shape[1], c)


# -- Dag ------------------------------------------------------------------------


def test_dag_validation():
    with pytest.raises(DataError):
        Dag(2, ((1,), (0, 0)))
    with pytest.raises(CyclicGraphError):
        Dag(2, ((0,), ()))
    with pytest.raises(DataError):
        Dag(2, ((), (5,)))
    d = Dag.from_edges(3, [(0, 2), (1, 2)])
    assert d.parent_sets == ((), (), (0, 1))
    assert d.edges == [(0, 2), (1, 2)]
    assert d.children(0) == [2]


def test_acyclicity_matches_dfs_oracle_on_all_three_node_digraphs():
    accepted = 0
    total = 0
    for edges in all_digraphs(3):
        total += 1
        ok = is_acyclic(Dag.from_edges(3, edges))
        assert ok == (not has_cycle(3, edges))
        accepted += ok
    assert total == 64
    assert accepted == 25


def test_topological_order_smallest_first():
    d = Dag.from_edges(4, [(3, 0), (2, 1)])
    assert topological_order(d) == [2, 1, 3, 0]
    with pytest.raises(CyclicGraphError):
        topological_order(Dag(2, ((1,), (0,))))


# -- counts ---------------------------------------------------------------------


def test_count_hand_examples():
    s = Schema.generic([2, 2], ["A", "B"])
    data = np.array([[0, 0], [0, 1], [1, 1]])
    fc = count_family(1, (0,), data, s)
    assert fc.counts.tolist() == [[1, 1], [0, 1]]
    s1 = Schema.generic([2])
    fc = count_family(0, (), np.array([[1]] * 4 + [[0]] * 6), s1)
    assert fc.counts.tolist() == [[6, 4]]


@given(st.integers(0, 2**32 - 1), st.lists(st.integers(0, 3), max_size=3, unique=True), st.integers(0, 3))
def test_counts_match_nested_loop_tally(seed, parents, node):
    if node in parents:
        parents = [p for p in parents if p != node]
    cards = [2, 3, 2, 4]
    rng = np.random.Generator(np.random.Philox(seed))
    data = np.column_stack([rng.integers(0, r, 200) for r in cards])
    s = Schema.generic(cards)
    fc = count_family(node, sorted(parents), data, s)
    assert fc.counts.tolist() == tally(data.tolist(), node, parents, cards)
    assert fc.row_totals.sum() == 200
    assert (fc.counts >= 0).all()


# -- BDeu -----------------------------------------------------------------------


def test_zero_counts_score_zero():
    for alpha in (0.1, 1.0, 7.5):
        assert bdeu_family_score(_fc([[0, 0], [0, 0]]), BdeuParams(alpha)) == 0.0


def test_binary_no_parents_closed_form():
    # Gamma(1.5) = Gamma(0.5)/2 collapses the formula to -3 ln 2
    got = bdeu_family_score(_fc([[1, 1]]), BdeuParams(1.0))
    assert got == pytest.approx(-3 * math.log(2), abs=1e-12)
    assert got == pytest.approx(bdeu_direct([[1, 1]], 1.0), abs=1e-12)


@given(
    st.integers(1, 4),
    st.integers(2, 3),
    st.floats(0.05, 20),
    st.data(),
)
def test_matches_product_form(q, r, alpha, data):
    counts = [[data.draw(st.integers(0, 20)) for _ in range(r)] for _ in range(q)]
    got = bdeu_family_score(_fc(counts), BdeuParams(alpha))
    assert abs(got - bdeu_product_form(counts, alpha)) <= 1e-9
    assert abs(got - bdeu_direct(counts, alpha)) <= 1e-9


def test_alpha_must_be_positive():
    with pytest.raises(DataError):
        BdeuParams(0.0)


def _two_node(n=500, seed=3):
    rng = np.random.Generator(np.random.Philox(seed))
    a = rng.integers(0, 2, n)
    flip = rng.random(n) < 0.1
    b = np.where(flip, 1 - a, a)
    return np.column_stack([a, b]), Schema.generic([2, 2], ["A", "B"])


def test_empty_dataset_scores_zero():
    s = Schema.generic([2, 3, 2])
    d = Dag.from_edges(3, [(0, 1), (1, 2)])
    assert bdeu_score(d, np.zeros((0, 3), dtype=np.int64), s) == 0.0


def test_strong_dependence_beats_empty():
    data, s = _two_node()
    ab = bdeu_score(Dag.from_edges(2, [(0, 1)]), data, s)
    assert ab > bdeu_score(Dag.empty(2), data, s)


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10))
def test_two_node_score_equivalence(seed, alpha):
    rng = np.random.Generator(np.random.Philox(seed))
    data = rng.integers(0, 2, (int(rng.integers(1, 300)), 2))
    s = Schema.generic([2, 2])
    p = BdeuParams(alpha)
    ab = bdeu_score(Dag.from_edges(2, [(0, 1)]), data, s, p)
    ba = bdeu_score(Dag.from_edges(2, [(1, 0)]), data, s, p)
    assert abs(ab - ba) <= 1e-9


def test_cyclic_dag_rejected_by_score():
    s = Schema.generic([2, 2])
    with pytest.raises(CyclicGraphError):
        bdeu_score(Dag(2, ((1,), (0,))), np.zeros((3, 2), dtype=np.int64), s)


def test_decomposable_and_cache_transparent(rng):
    cards = [2, 3, 2, 2]
    s = Schema.generic(cards)
    data = np.column_stack([rng.integers(0, r, 150) for r in cards])
    d = Dag.from_edges(4, [(0, 1), (1, 2), (0, 3), (2, 3)])
    p = BdeuParams(2.0)
    total = bdeu_score(d, data, s, p)
    parts = 0.0
    for node in range(4):
        parts += bdeu_family_score(count_family(node, d.parent_sets[node], data, s), p)
    assert total == parts
    cache = ScoreCache(data, s, p)
    assert bdeu_score(d, data, s, p, cache) == total
    assert bdeu_score(d, data, s, p, cache) == total
    assert cache.hits == 4 and cache.misses == 4


def test_cache_invalidation_is_per_node(rng):
    s = Schema.generic([2, 2, 2])
    data = rng.integers(0, 2, (50, 3))
    cache = ScoreCache(data, s, BdeuParams())
    for node in range(3):
        cache.family(node, ())
    cache.family(2, (0,))
    cache.invalidate(2)
    assert len(cache) == 2
    assert (0, ()) in cache._scores and (1, ()) in cache._scores


def test_cache_mismatch_refused(rng):
    s = Schema.generic([2, 2])
    data = rng.integers(0, 2, (20, 2))
    cache = ScoreCache(data, s, BdeuParams(1.0))
    with pytest.raises(DataError):
        bdeu_score(Dag.empty(2), data, s, BdeuParams(2.0), cache)


@given(st.integers(0, 2**32 - 1), st.integers(1, 20), st.floats(0.2, 5))
def test_score_is_prequential_log_likelihood(seed, n, alpha):
    cards = [2, 3, 2]
    rng = np.random.Generator(np.random.Philox(seed))
    data = np.column_stack([rng.integers(0, r, n) for r in cards])
    d = Dag.from_edges(3, [(0, 2), (1, 2), (0, 1)])
    s = Schema.generic(cards)
    got = bdeu_score(d, data, s, BdeuParams(alpha))
    assert abs(got - prequential_log_ml(data.tolist(), d.parent_sets, cards, alpha)) <= 1e-8


# -- BayesNet text format -------------------------------------------------------


def test_bayesnet_round_trip(planted):
    text = format_bayesnet(planted.dag, planted.schema, planted.cpts)
    assert text.startswith("bn v1 6\n")
    dag, schema, cpts = parse_bayesnet(text, planted.schema)
    assert dag == planted.dag
    for a, b in zip(cpts, planted.cpts):
        assert np.array_equal(a, b)
    assert format_bayesnet(dag, schema, cpts) == text


def test_structure_only_file():
    s = Schema.generic([2, 2], ["A", "B"])
    d = Dag.from_edges(2, [(0, 1)])
    text = format_bayesnet(d, s)
    assert "node B states 2 parents A" in text
    dag, schema, cpts = parse_bayesnet(text)
    assert dag == d and cpts is None and schema.codes == ("A", "B")


def test_parse_errors():
    with pytest.raises(DataError):
        parse_bayesnet("hello")
    with pytest.raises(DataError):
        parse_bayesnet("bn v1 2\nnode A states 2 parents\n")
    with pytest.raises(SchemaError):
        parse_bayesnet("bn v1 1\nnode A states 2 parents\n", Schema.generic([3], ["A"]))


def test_bayesnet_rejects_bad_rows():
    s = Schema.generic([2])
    with pytest.raises(DataError):
        BayesNet(Dag.empty(1), s, (np.array([[0.6, 0.6]]),))
    with pytest.raises(DataError):
        BayesNet(Dag.empty(1), s, (np.array([[0.5, 0.5], [0.5, 0.5]]),))


def test_dag_to_dot():
    s = Schema.generic([2, 2, 2], ["A", "B", "C"])
    text = dag_to_dot(Dag.from_edges(3, [(0, 1), (2, 1)]), s)
    assert text.splitlines() == [
        'digraph "structure" {',
        '  "A";',
        '  "B";',
        '  "C";',
        '  "A" -> "B";',
        '  "C" -> "B";',
        "}",
    ]
