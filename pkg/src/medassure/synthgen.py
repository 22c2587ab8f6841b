"""Synthetic encounter data by forward sampling a planted network.

Random streams come from numpy's Philox4x32-10 counter-based generator
(``np.random.Philox(seed)``), whose reference implementation is published by
Salmon et al. (Random123).  Stream layout for :func:`forward_sample`: one
block of ``n_records`` uniform doubles per node, drawn in topological order;
the sampled state is the number of cumulative CPT entries below the uniform.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from importlib import resources

import numpy as np

from .bn_core import BayesNet, Dag, parent_config_index, parse_bayesnet, topological_order
from .errors import DataError
from .records import TABLE2_SCHEMA, EncounterRecord, Schema, from_array

MAX_SEED = 2**64 - 1


def make_rng(seed: int) -> np.random.Generator:
    if not 0 <= seed <= MAX_SEED:
        raise DataError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class PlantedModel:
    net: BayesNet
    seed: int
    n_records: int

    def __post_init__(self):
        if self.n_records <= 0:
            raise DataError("n_records must be positive")
        make_rng(self.seed)


def sample_array(net: BayesNet, n: int, seed: int) -> np.ndarray:
    rng = make_rng(seed)
    cards = net.schema.cardinalities
    out = np.zeros((n, net.dag.n), dtype=np.int64)
    for node in topological_order(net.dag):
        cpt = net.cpts[node]
        if cpt is None:
            raise DataError(f"node {net.schema.codes[node]} has no CPT")
        j = parent_config_index(out, net.dag.parent_sets[node], cards)
        u = rng.random(n)
        cum = np.cumsum(cpt, axis=1)[j]  # (n, r)
        state = (u[:, None] >= cum[:, :-1]).sum(axis=1)
        out[:, node] = np.minimum(state, cards[node] - 1)
    return out


def forward_sample(model: PlantedModel) -> list[EncounterRecord]:
    """Sample ``model.n_records`` records; identical inputs give identical output."""
    return from_array(sample_array(model.net, model.n_records, model.seed))


def load_planted_model(schema: Schema = TABLE2_SCHEMA) -> BayesNet:
    """The shipped six-variable ground-truth network (``data/planted.bn``)."""
    text = resources.files("medassure").joinpath("data/planted.bn").read_text(encoding="utf-8")
    dag, schema, cpts = parse_bayesnet(text, schema)
    return BayesNet(dag, schema, cpts)


def random_dag(n: int, rng: np.random.Generator, edge_prob: float = 0.5, max_parents: int = 3) -> Dag:
    order = rng.permutation(n)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < edge_prob:
                edges.append((int(order[i]), int(order[j])))
    dag = Dag.from_edges(n, edges)
    # drop surplus parents, highest index first
    ps = tuple(p[:max_parents] for p in dag.parent_sets)
    return Dag(n, ps)


def random_bayesnet(
    schema: Schema,
    rng: np.random.Generator,
    edge_prob: float = 0.5,
    max_parents: int = 3,
    concentration: float = 1.0,
    dag: Dag | None = None,
) -> BayesNet:
    """Random DAG with Dirichlet(concentration) CPT rows."""
    if dag is None:
        dag = random_dag(len(schema), rng, edge_prob, max_parents)
    cards = schema.cardinalities
    cpts = []
    for i, ps in enumerate(dag.parent_sets):
        q = int(np.prod([cards[p] for p in ps], dtype=np.int64))
        rows = rng.dirichlet(np.full(cards[i], concentration), size=q)
        rows = rows / rows.sum(axis=1, keepdims=True)
        cpts.append(rows)
    return BayesNet(dag, schema, tuple(cpts))


# -- event log synthesis -------------------------------------------------------

EPOCH = datetime(2130, 1, 1, tzinfo=timezone.utc)


def synthesize_event_log(
    records: list[EncounterRecord],
    schema: Schema = TABLE2_SCHEMA,
    seed: int = 0,
    missing_epidural_time: float = 0.05,
) -> str:
    """Event-log CSV derived from encounter flags.

    One activity per flagged variable, stamped when its defining observation
    would occur: Pre_beta before the operation, Surgery at the operation,
    Epidural shortly around it, Hypotension at the first BP reading after
    06:00 next day, Post_beta within 24 h, AF at some point afterwards.
    Timestamps are jittered so activity orders vary between cases.  A fraction
    of Epidural events gets a blank timestamp, mimicking unrecorded times.
    """
    rng = make_rng(seed)
    idx = {c: schema.index(c) for c in schema.codes}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case_id", "activity", "timestamp"])
    for k, rec in enumerate(records):
        v = rec.values
        day = EPOCH + timedelta(days=k % 1000)
        op = day + timedelta(hours=8 + float(rng.uniform(0, 6)))
        events = []
        if v[idx["Pre_beta"]]:
            events.append(("Pre_beta", op - timedelta(hours=float(rng.uniform(2, 48)))))
        if v[idx["Surgery"]]:
            events.append(("Surgery", op))
        if v[idx["Epidural"]]:
            t = op + timedelta(hours=float(rng.uniform(-2, 6)))
            events.append(("Epidural", None if rng.random() < missing_epidural_time else t))
        if v[idx["Hypotension"]]:
            events.append(("Hypotension", day + timedelta(days=1, hours=6, minutes=float(rng.uniform(0, 120)))))
        if v[idx["Post_beta"]]:
            events.append(("Post_beta", op + timedelta(hours=float(rng.uniform(1, 24)))))
        if v[idx["AF"]]:
            events.append(("AF", op + timedelta(hours=float(rng.uniform(0, 96)))))
        for act, ts in events:
            w.writerow([rec.encounter_id, act, "" if ts is None else ts.strftime("%Y-%m-%dT%H:%M:%SZ")])
    return buf.getvalue()
