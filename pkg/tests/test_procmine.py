import io
import logging
import re

import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import dfg_tally

from medassure.errors import EventLogError
from medassure.procmine import (
    END,
    START,
    DfgModel,
    case_ids,
    contains,
    dfg_to_dot,
    discover_dfg,
    excludes,
    filter_log,
    parse_event_log,
    parse_filter,
)

HEAD = "case_id,activity,timestamp\n"


def log_from(traces):
    """Event-log CSV with one-minute spacing per trace; traces are activity lists."""
    rows = [HEAD]
    for i, acts in enumerate(traces):
        for k, a in enumerate(acts):
            rows.append(f"c{i:03d},{a},2130-01-01T{i % 24:02d}:{k:02d}:00Z\n")
    return parse_event_log(io.StringIO("".join(rows)))


def test_three_rows_sorted_by_time():
    text = HEAD + "c1,B,2130-01-01T02:00:00Z\nc1,A,2130-01-01T01:00:00Z\nc1,C,2130-01-01T03:00:00+00:00\n"
    (t,) = parse_event_log(io.StringIO(text))
    assert t.activities == ["A", "B", "C"]


def test_equal_timestamps_keep_input_order():
    text = HEAD + "c1,Y,2130-01-01T01:00:00Z\nc1,X,2130-01-01T01:00:00Z\n"
    (t,) = parse_event_log(io.StringIO(text))
    assert t.activities == ["Y", "X"]
    assert [e.tie_index for e in t.events] == [0, 1]


def test_traces_ordered_by_first_event_then_case():
    text = HEAD + "b,X,2130-01-02T00:00:00Z\na,X,2130-01-02T00:00:00Z\nz,X,2130-01-01T00:00:00Z\n"
    assert [t.case_id for t in parse_event_log(io.StringIO(text))] == ["z", "a", "b"]


def test_blank_timestamps_dropped_with_count(caplog):
    text = HEAD + "c1,A,2130-01-01T01:00:00Z\nc1,Epidural,\nc2,Epidural,  \n"
    with caplog.at_level(logging.WARNING, logger="medassure.procmine"):
        traces = parse_event_log(io.StringIO(text))
    assert [t.activities for t in traces] == [["A"]]
    assert "dropped 2 events" in caplog.text


def test_bad_timestamp_names_row():
    with pytest.raises(EventLogError, match="row 3"):
        parse_event_log(io.StringIO(HEAD + "c1,A,2130-01-01T01:00:00Z\nc1,B,yesterday\n"))


def test_missing_column():
    with pytest.raises(EventLogError, match="timestamp"):
        parse_event_log(io.StringIO("case_id,activity\nc1,A\n"))


def test_empty_file_gives_empty_log(caplog):
    with caplog.at_level(logging.WARNING):
        assert parse_event_log(io.StringIO("")) == []
    assert "empty" in caplog.text


# -- discovery -------------------------------------------------------------------


def test_single_trace_hand_counts():
    m = discover_dfg(log_from([["A", "B", "B", "C"]]))
    assert dict(m.activity_counts) == {"A": 1, "B": 2, "C": 1}
    assert dict(m.arc_counts) == {("A", "B"): 1, ("B", "B"): 1, ("B", "C"): 1}
    assert dict(m.start_counts) == {"A": 1}
    assert dict(m.end_counts) == {"C": 1}


HAND_LOG = [
    ["Surgery", "Epidural", "Hypotension", "AF"],
    ["Epidural", "Hypotension", "Hypotension"],
    ["Pre_beta", "Post_beta"],
    ["Epidural"],
    ["Surgery", "Epidural", "Post_beta", "AF", "AF"],
]


def _as_dicts(m):
    return dict(m.activity_counts), dict(m.arc_counts), dict(m.start_counts), dict(m.end_counts)


def test_hand_log_matches_tally():
    m = discover_dfg(log_from(HAND_LOG))
    assert _as_dicts(m) == dfg_tally(HAND_LOG)
    assert m.arc_counts[("Epidural", "Hypotension")] == 2


activity = st.sampled_from(["A", "B", "C", "D"])
traces_st = st.lists(st.lists(activity, min_size=1, max_size=8), min_size=1, max_size=12)


@given(traces_st)
def test_conservation_and_oracle(traces):
    m = discover_dfg(log_from(traces))
    assert sum(m.activity_counts.values()) == sum(len(t) for t in traces)
    assert sum(m.arc_counts.values()) == sum(len(t) - 1 for t in traces)
    assert sum(m.start_counts.values()) == sum(m.end_counts.values()) == len(traces)
    assert _as_dicts(m) == dfg_tally(traces)


@given(traces_st, st.randoms(use_true_random=False))
def test_permutation_invariance(traces, rnd):
    log = log_from(traces)
    shuffled = list(log)
    rnd.shuffle(shuffled)
    assert _as_dicts(discover_dfg(log)) == _as_dicts(discover_dfg(shuffled))


def test_conservation_over_one_hundred_logs():
    import random

    for seed in range(100):
        r = random.Random(seed)
        traces = [[r.choice("ABCDE") for _ in range(r.randint(1, 9))] for _ in range(r.randint(1, 15))]
        m = discover_dfg(log_from(traces))
        assert _as_dicts(m) == dfg_tally(traces)


# -- filters ---------------------------------------------------------------------


def test_contains_two_of_five():
    log = log_from([["A"], ["Epidural", "B"], ["C"], ["D", "Epidural"], ["E"]])
    assert len(filter_log(log, contains("Epidural"))) == 2


def test_excludes_absent_activity_is_identity():
    log = log_from(HAND_LOG)
    assert filter_log(log, excludes("Nowhere")) == log


@given(traces_st, activity)
def test_filter_idempotent_and_order_preserving(traces, act):
    log = log_from(traces)
    for p in (contains(act), excludes(act)):
        once = filter_log(log, p)
        assert filter_log(once, p) == once
        assert [t.case_id for t in once] == [t.case_id for t in log if t in once]


def test_parse_filter_kinds():
    log = log_from(HAND_LOG)
    assert filter_log(log, parse_filter("contains=AF")) == filter_log(log, contains("AF"))
    assert [t.case_id for t in filter_log(log, parse_filter("cases=c001;c003"))] == ["c001", "c003"]
    assert filter_log(log, case_ids([])) == []
    with pytest.raises(EventLogError):
        parse_filter("startswith=A")


# -- DOT -------------------------------------------------------------------------


def _edges(dot):
    return re.findall(r'^\s*"([^"]+)" -> "([^"]+)" \[label="(\d+)"\];$', dot, re.M)


def _nodes(dot):
    return re.findall(r'^\s*"([^"]+)" \[', dot, re.M)


def test_empty_model_has_only_pseudo_nodes():
    dot = dfg_to_dot(DfgModel())
    assert _nodes(dot) == [START, END]
    assert _edges(dot) == []


def test_single_trace_rendering():
    dot = dfg_to_dot(discover_dfg(log_from([["A", "B", "B", "C"]])))
    acts = [n for n in _nodes(dot) if n not in (START, END)]
    assert acts == ["A", "B", "C"]
    edges = _edges(dot)
    assert len(edges) == 5
    assert [c for _, _, c in edges] == ["1"] * 5
    assert (START, "A", "1") in edges and ("C", END, "1") in edges


def test_threshold_omits_rare_arc():
    m = discover_dfg(log_from([["A", "B"], ["A", "B"], ["A", "C"]]))
    dot = dfg_to_dot(m, min_arc_count=2)
    pairs = {(a, b) for a, b, _ in _edges(dot)}
    assert ("A", "B") in pairs
    assert ("A", "C") not in pairs
    assert dfg_to_dot(m, 2) == dot


def test_quotes_escaped():
    m = discover_dfg(log_from([['say "hi"']]))
    assert '"say \\"hi\\""' in dfg_to_dot(m)
