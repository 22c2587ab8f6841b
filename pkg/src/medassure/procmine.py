"""Event logs and directly-follows-graph discovery."""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import EventLogError

log = logging.getLogger(__name__)

START = "__start__"
END = "__end__"


@dataclass(frozen=True)
class Event:
    case_id: str
    activity: str
    timestamp: datetime
    tie_index: int


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple[Event, ...]

    @property
    def activities(self) -> list[str]:
        return [e.activity for e in self.events]


@dataclass
class DfgModel:
    activity_counts: Counter = field(default_factory=Counter)
    arc_counts: Counter = field(default_factory=Counter)
    start_counts: Counter = field(default_factory=Counter)
    end_counts: Counter = field(default_factory=Counter)


def parse_timestamp(text: str) -> datetime:
    """RFC 3339 timestamp; naive values are taken as UTC."""
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    ts = datetime.fromisoformat(s)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


def load_event_log(path: str | Path) -> list[Trace]:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_event_log(fh)


def parse_event_log(fh: Iterable[str]) -> list[Trace]:
    """Group CSV rows (case_id, activity, timestamp) into time-ordered traces.

    Rows with a blank timestamp are dropped and counted in a warning; an
    unparseable timestamp is an error.
    """
    reader = csv.DictReader(fh)
    if reader.fieldnames is None:
        log.warning("event log is empty")
        return []
    missing = {"case_id", "activity", "timestamp"} - set(reader.fieldnames)
    if missing:
        raise EventLogError(f"event log missing columns: {', '.join(sorted(missing))}")
    by_case: dict[str, list[Event]] = {}
    dropped = 0
    for tie, row in enumerate(reader):
        rowno = tie + 2
        activity = (row["activity"] or "").strip()
        if not activity:
            raise EventLogError(f"row {rowno}: empty activity")
        raw = (row["timestamp"] or "").strip()
        if not raw:
            dropped += 1
            continue
        try:
            ts = parse_timestamp(raw)
        except ValueError:
            raise EventLogError(f"row {rowno}: unparseable timestamp {raw!r}") from None
        case = row["case_id"].strip()
        by_case.setdefault(case, []).append(Event(case, activity, ts, tie))
    if dropped:
        log.warning("dropped %d events without timestamps", dropped)
    if not by_case:
        log.warning("event log contains no events")
    traces = [
        Trace(case, tuple(sorted(evs, key=lambda e: (e.timestamp, e.tie_index))))
        for case, evs in by_case.items()
    ]
    traces.sort(key=lambda t: (t.events[0].timestamp, t.case_id))
    return traces


# -- filtering ---------------------------------------------------------------------


def contains(activity: str) -> Callable[[Trace], bool]:
    return lambda t: any(e.activity == activity for e in t.events)


def excludes(activity: str) -> Callable[[Trace], bool]:
    return lambda t: all(e.activity != activity for e in t.events)


def case_ids(ids: Iterable[str]) -> Callable[[Trace], bool]:
    wanted = frozenset(ids)
    return lambda t: t.case_id in wanted


def parse_filter(spec: str) -> Callable[[Trace], bool]:
    """``contains=X``, ``excludes=X`` or ``cases=a;b;c``."""
    kind, _, arg = spec.partition("=")
    kind = kind.strip()
    if kind == "contains":
        return contains(arg)
    if kind == "excludes":
        return excludes(arg)
    if kind == "cases":
        return case_ids(a for a in arg.split(";") if a)
    raise EventLogError(f"unknown filter {spec!r} (use contains=, excludes= or cases=)")


def filter_log(traces: Sequence[Trace], predicate: Callable[[Trace], bool]) -> list[Trace]:
    return [t for t in traces if predicate(t)]


# -- discovery ---------------------------------------------------------------------


def discover_dfg(traces: Sequence[Trace]) -> DfgModel:
    model = DfgModel()
    for t in traces:
        acts = t.activities
        if not acts:
            continue
        model.activity_counts.update(acts)
        model.arc_counts.update(zip(acts, acts[1:]))
        model.start_counts[acts[0]] += 1
        model.end_counts[acts[-1]] += 1
    return model


def _esc(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def _q(s: str) -> str:
    return '"' + _esc(s) + '"'


def dfg_to_dot(model: DfgModel, min_arc_count: int = 1) -> str:
    """Deterministic DOT rendering; arcs (incl. start/end) below the threshold are omitted."""
    lines = [
        "digraph dfg {",
        "  rankdir=TB;",
        f'  {_q(START)} [label="start", shape=circle, style=filled, fillcolor="#dddddd"];',
        f'  {_q(END)} [label="end", shape=doublecircle, style=filled, fillcolor="#dddddd"];',
    ]
    for act in sorted(model.activity_counts):
        lines.append(f'  {_q(act)} [label="{_esc(act)}\\n{model.activity_counts[act]}", shape=box];')
    edges = [((START, a), c) for a, c in model.start_counts.items()]
    edges += list(model.arc_counts.items())
    edges += [((a, END), c) for a, c in model.end_counts.items()]
    for (a, b), c in sorted(edges):
        if c >= min_arc_count:
            lines.append(f'  {_q(a)} -> {_q(b)} [label="{c}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
