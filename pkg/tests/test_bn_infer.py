import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import joint_posterior

from medassure.bn_core import BayesNet, BdeuParams, Dag, count_family
from medassure.bn_infer import (
    ClassifierMetrics,
    RiskReport,
    confusion_metrics,
    d_separated,
    evaluate_classifier,
    fit_parameters,
    infer,
    infer_enumeration,
    posterior_scores,
    risk_report,
    roc_points,
    train_test_split,
)
from medassure.errors import DataError, ZeroProbabilityEvidence
from medassure.records import TABLE2_SCHEMA, Schema
from medassure.synthgen import make_rng, random_bayesnet, sample_array

# -- parameter fitting -----------------------------------------------------------


def test_unseen_parent_configuration_is_uniform():
    s = Schema.generic([2, 2], ["A", "B"])
    data = np.array([[0, 0], [0, 1], [0, 1]])
    net = fit_parameters(Dag.from_edges(2, [(0, 1)]), data, s)
    assert net.cpts[1][1].tolist() == [0.5, 0.5]


def test_posterior_mean_hand_value():
    s = Schema.generic([2])
    data = np.array([[0]] * 6 + [[1]] * 4)
    net = fit_parameters(Dag.empty(1), data, s, BdeuParams(1.0))
    # (4 + 1/2) / (10 + 1)
    assert net.cpts[0][0, 1] == pytest.approx(4.5 / 11, abs=1e-15)


def test_small_alpha_approaches_maximum_likelihood(planted):
    data = sample_array(planted, 3000, 21)
    net = fit_parameters(planted.dag, data, TABLE2_SCHEMA, BdeuParams(1e-6))
    for node in range(6):
        fc = count_family(node, planted.dag.parent_sets[node], data, TABLE2_SCHEMA)
        for j in range(fc.q):
            if fc.row_totals[j] > 0:
                ml = fc.counts[j] / fc.row_totals[j]
                assert np.max(np.abs(net.cpts[node][j] - ml)) <= 1e-4


def test_rows_sum_to_one(planted):
    net = fit_parameters(planted.dag, sample_array(planted, 500, 2), TABLE2_SCHEMA, BdeuParams(3.0))
    for cpt in net.cpts:
        assert np.allclose(cpt.sum(axis=1), 1.0, atol=1e-12)


def test_fitted_parameters_near_planted(planted):
    data = sample_array(planted, 100000, 3)
    net = fit_parameters(planted.dag, data, TABLE2_SCHEMA)
    for node in range(6):
        fc = count_family(node, planted.dag.parent_sets[node], data, TABLE2_SCHEMA)
        big = fc.row_totals >= 1000
        assert np.max(np.abs(net.cpts[node][big] - planted.cpts[node][big])) <= 0.01


# -- inference -------------------------------------------------------------------


def _random_case(seed):
    rng = make_rng(seed)
    n = int(rng.integers(2, 9))
    cards = [int(c) for c in rng.integers(2, 4, n)]
    s = Schema.generic(cards)
    net = random_bayesnet(s, rng, edge_prob=0.4, max_parents=3)
    target = int(rng.integers(n))
    others = [i for i in range(n) if i != target]
    k = int(rng.integers(0, len(others) + 1))
    ev_vars = rng.permutation(others)[:k]
    ev = {int(v): int(rng.integers(cards[v])) for v in ev_vars}
    return net, s, ev, target


def test_variable_elimination_matches_joint_oracle():
    checked = 0
    for seed in range(200):
        net, s, ev, t = _random_case(seed)
        ref = joint_posterior(net.dag.parent_sets, [c.tolist() for c in net.cpts], list(s.cardinalities), ev, t)
        got = infer(net, {s.codes[v]: st for v, st in ev.items()}, s.codes[t])
        assert max(abs(got[k] - ref[k]) for k in range(len(ref))) <= 1e-12
        checked += 1
    assert checked == 200


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_elimination_agrees_with_enumeration(seed):
    net, s, ev, t = _random_case(seed)
    evc = {s.codes[v]: st for v, st in ev.items()}
    a = infer(net, evc, s.codes[t])
    b = infer_enumeration(net, evc, s.codes[t])
    assert sum(a.values()) == pytest.approx(1.0, abs=1e-12)
    assert all(abs(a[k] - b[k]) <= 1e-12 for k in a)


def test_uniform_root_without_evidence():
    s = Schema.generic([3])
    net = BayesNet(Dag.empty(1), s, (np.full((1, 3), 1 / 3),))
    post = infer(net, {}, "X0")
    assert all(p == pytest.approx(1 / 3, abs=1e-15) for p in post.values())


def test_zero_probability_evidence():
    s = Schema.generic([2, 2], ["A", "B"])
    net = BayesNet(
        Dag.from_edges(2, [(0, 1)]), s, (np.array([[1.0, 0.0]]), np.array([[1.0, 0.0], [0.5, 0.5]]))
    )
    with pytest.raises(ZeroProbabilityEvidence):
        infer(net, {"A": 1}, "B")


def test_evidence_validation(planted):
    with pytest.raises(DataError):
        infer(planted, {"Surgery": 3}, "AF")
    with pytest.raises(DataError):
        infer(planted, {"AF": 1}, "AF")


def test_d_separation_examples():
    chain = Dag.from_edges(3, [(0, 1), (1, 2)])
    collider = Dag.from_edges(3, [(0, 2), (1, 2)])
    assert not d_separated(chain, 0, 2, set())
    assert d_separated(chain, 0, 2, {1})
    assert d_separated(collider, 0, 1, set())
    assert not d_separated(collider, 0, 1, {2})
    # conditioning on a descendant of the collider also opens it
    desc = Dag.from_edges(4, [(0, 2), (1, 2), (2, 3)])
    assert not d_separated(desc, 0, 1, {3})


def test_d_separation_implies_numerical_independence():
    for seed in range(40):
        net, s, _, _ = _random_case(seed)
        n = net.dag.n
        for x in range(n):
            for y in range(x + 1, n):
                if d_separated(net.dag, x, y, set()):
                    px = infer(net, {}, s.codes[x])
                    pxy = infer(net, {s.codes[y]: 0}, s.codes[x])
                    assert all(abs(px[k] - pxy[k]) <= 1e-12 for k in px)


# -- risk ------------------------------------------------------------------------


def test_d_separated_exposure_gives_exact_zero():
    s = Schema.generic([2, 2, 2], ["X", "Y", "Z"])
    net = BayesNet(
        Dag.from_edges(3, [(2, 1)]),
        s,
        (np.array([[0.3, 0.7]]), np.array([[0.9, 0.1], [0.2, 0.8]]), np.array([[0.4, 0.6]])),
    )
    rep = risk_report(net, {}, "X", "Y")
    assert rep.absolute_risk_reduction == 0.0
    assert rep.number_needed_to_treat is None
    assert rep.nnt_display is None
    assert "NNT undefined" in rep.summary()


def test_planted_risk_matches_hand_values(planted):
    rep = risk_report(planted, {"Surgery": 2, "Pre_beta": 1}, "Post_beta", "AF")
    assert abs(rep.p_reference - 0.60) <= 1e-12
    assert abs(rep.p_treated - 0.49) <= 1e-12
    assert abs(rep.absolute_risk_reduction - 0.11) <= 1e-12
    assert rep.nnt_display == 9
    # Hypotension -> Post_beta given Pre_beta=1, summing out Epidural by hand:
    # 0.85*0.65 + 0.15*0.06 and 0.85*0.06 + 0.15*0.01
    rep = risk_report(planted, {"Pre_beta": 1}, "Hypotension", "Post_beta")
    assert abs(rep.p_reference - 0.5615) <= 1e-12
    assert abs(rep.p_treated - 0.0525) <= 1e-12


def test_marginal_risk_against_joint_oracle(planted):
    rep = risk_report(planted, {}, "Post_beta", "AF")
    ps, cpts, cards = planted.dag.parent_sets, [c.tolist() for c in planted.cpts], list(TABLE2_SCHEMA.cardinalities)
    p0 = joint_posterior(ps, cpts, cards, {2: 0}, 5)[1]
    p1 = joint_posterior(ps, cpts, cards, {2: 1}, 5)[1]
    assert abs(rep.absolute_risk_reduction - (p0 - p1)) <= 1e-12


def test_risk_report_arithmetic():
    rep = RiskReport((("Surgery", 2),), "Post_beta", "AF", 0.60, 0.49)
    assert rep.absolute_risk_reduction == pytest.approx(0.11)
    assert rep.number_needed_to_treat == pytest.approx(1 / 0.11)
    assert rep.nnt_display == 9
    assert rep.summary().endswith("ARR 11%, NNT 9")
    harm = RiskReport((), "E", "O", 0.2, 0.45)
    assert harm.absolute_risk_reduction == pytest.approx(-0.25)
    assert harm.nnt_display == 4


def test_risk_rejects_bad_queries(planted):
    with pytest.raises(DataError):
        risk_report(planted, {}, "Surgery", "AF")
    with pytest.raises(DataError):
        risk_report(planted, {"AF": 1}, "Post_beta", "AF")


# -- classifier ------------------------------------------------------------------


def _hand_net():
    # A -> Y with P(Y=1|A=0)=0.2, P(Y=1|A=1)=0.7
    s = Schema.generic([2, 2], ["A", "Y"])
    net = BayesNet(Dag.from_edges(2, [(0, 1)]), s, (np.array([[0.5, 0.5]]), np.array([[0.8, 0.2], [0.3, 0.7]])))
    return net


def test_hand_classifier_oracle():
    net = _hand_net()
    data = np.array([[0, 0], [0, 1], [1, 1], [1, 0]])
    # predictions are 0, 0, 1, 1
    m = evaluate_classifier(net, data, "Y")
    assert (m.tp, m.tn, m.fp, m.fn) == (1, 1, 1, 1)
    assert m.accuracy == 0.5 and m.sensitivity == 0.5 and m.specificity == 0.5
    assert posterior_scores(net, data, "Y").tolist() == pytest.approx([0.2, 0.2, 0.7, 0.7])


def test_deterministic_net_is_perfect():
    s = Schema.generic([2, 2], ["A", "Y"])
    net = BayesNet(Dag.from_edges(2, [(0, 1)]), s, (np.array([[0.5, 0.5]]), np.array([[1.0, 0.0], [0.0, 1.0]])))
    data = np.array([[0, 0], [1, 1], [1, 1], [0, 0], [1, 1]])
    m = evaluate_classifier(net, data, "Y")
    assert m.accuracy == m.sensitivity == m.specificity == 1.0


def test_metrics_undefined_without_class():
    m = confusion_metrics([0, 0], [0, 1])
    assert m.sensitivity is None and m.specificity == 0.5
    with pytest.raises(DataError):
        confusion_metrics([], [])
    with pytest.raises(DataError):
        evaluate_classifier(_hand_net(), np.zeros((0, 2), dtype=np.int64), "Y")
    assert ClassifierMetrics(1, 2, 3, 4).total == 10


def test_roc_points_endpoints():
    scores = np.array([0.1, 0.4, 0.35, 0.8])
    y = np.array([0, 0, 1, 1])
    pts = roc_points(scores, y, [0.0, 0.35, 0.5, 1.01])
    assert pts[0] == (0.0, 1.0, 0.0)
    assert pts[1] == (0.35, 1.0, 0.5)
    assert pts[2] == (0.5, 0.5, 1.0)
    assert pts[3] == (1.01, 0.0, 1.0)
    assert len(roc_points(scores, y)) == 101


# -- split -----------------------------------------------------------------------


def test_split_sizes():
    tr, te = train_test_split(np.arange(10), 0.8, 0)
    assert (len(tr), len(te)) == (8, 2)
    tr, te = train_test_split(np.arange(7202), 0.8, 0)
    assert (len(tr), len(te)) == (5762, 1440)


def test_split_is_partition_and_deterministic():
    data = np.arange(101)
    a = train_test_split(data, 0.7, 5)
    b = train_test_split(data, 0.7, 5)
    c = train_test_split(data, 0.7, 6)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert not np.array_equal(a[0], c[0])
    assert sorted(np.concatenate(a).tolist()) == list(range(101))


def test_split_lists_and_validation():
    tr, te = train_test_split(list("abcde"), 0.5, 1)
    assert len(tr) == 3 and sorted(tr + te) == list("abcde")
    for f in (0.0, 1.0, 1.5):
        with pytest.raises(DataError):
            train_test_split([1, 2], f)
