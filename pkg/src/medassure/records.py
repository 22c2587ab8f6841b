"""Discrete variable schema, encounter CSV I/O and raw-field encoding rules."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, RecordError, SchemaError

ID_COLUMN = "encounter_id"


@dataclass(frozen=True)
class VariableSpec:
    code: str
    display_name: str
    states: tuple[tuple[int, str], ...]

    def __post_init__(self):
        if len(self.states) < 2:
            raise SchemaError(f"variable {self.code!r} needs at least 2 states")
        values = [v for v, _ in self.states]
        if values != list(range(len(values))):
            raise SchemaError(
                f"variable {self.code!r}: state values must be 0..{len(values) - 1}, got {values}"
            )

    @property
    def cardinality(self) -> int:
        return len(self.states)

    def label(self, value: int) -> str:
        return self.states[value][1]


@dataclass(frozen=True)
class Schema:
    """Ordered variables; the order is the index order for counts and CPTs."""

    variables: tuple[VariableSpec, ...]

    def __post_init__(self):
        codes = [v.code for v in self.variables]
        dupes = sorted({c for c in codes if codes.count(c) > 1})
        if dupes:
            raise SchemaError(f"duplicate variable codes: {', '.join(dupes)}")

    def __len__(self) -> int:
        return len(self.variables)

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(v.code for v in self.variables)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(v.cardinality for v in self.variables)

    def index(self, code: str) -> int:
        try:
            return self.codes.index(code)
        except ValueError:
            raise SchemaError(f"unknown variable {code!r}") from None

    def __getitem__(self, code: str) -> VariableSpec:
        return self.variables[self.index(code)]

    @classmethod
    def generic(cls, cardinalities: Sequence[int], codes: Sequence[str] | None = None) -> "Schema":
        """Schema with placeholder labels, handy for tests and random nets."""
        if codes is None:
            codes = [f"X{i}" for i in range(len(cardinalities))]
        return cls(
            tuple(
                VariableSpec(c, c, tuple((k, str(k)) for k in range(r)))
                for c, r in zip(codes, cardinalities)
            )
        )


def _binary(code: str, name: str, no: str, yes: str) -> VariableSpec:
    return VariableSpec(code, name, ((0, no), (1, yes)))


TABLE2_SCHEMA = Schema(
    (
        VariableSpec(
            "Surgery",
            "Surgery",
            ((0, "not thoracic"), (1, "might be thoracic"), (2, "definitely thoracic")),
        ),
        _binary("Pre_beta", "Receiving BB before surgery", "not receiving BB", "receiving BB"),
        _binary("Post_beta", "Receiving BB after surgery", "not receiving BB", "receiving BB"),
        _binary("Hypotension", "Hypotension", "no Hypotension", "has Hypotension"),
        _binary("Epidural", "Epidural catheter placed", "no Epidural", "has Epidural"),
        _binary("AF", "Having AF during the encounter", "no AF", "has AF"),
    )
)


@dataclass(frozen=True)
class EncounterRecord:
    encounter_id: str
    values: tuple[int, ...]

    def get(self, schema: Schema, code: str) -> int:
        return self.values[schema.index(code)]


def load_records(path: str | Path, schema: Schema = TABLE2_SCHEMA) -> list[EncounterRecord]:
    """Read an encounter CSV; columns may appear in any order."""
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_records(fh, schema)


def parse_records(fh: Iterable[str], schema: Schema = TABLE2_SCHEMA) -> list[EncounterRecord]:
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("empty file: missing header row") from None
    if ID_COLUMN not in header:
        raise SchemaError(f"missing column {ID_COLUMN!r}")
    positions = []
    for code in schema.codes:
        if code not in header:
            raise SchemaError(f"missing column {code!r}")
        positions.append(header.index(code))
    id_pos = header.index(ID_COLUMN)
    cards = schema.cardinalities

    records = []
    seen: set[str] = set()
    for rowno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise RecordError(f"expected {len(header)} cells, got {len(row)}", rowno)
        eid = row[id_pos].strip()
        if not eid:
            raise RecordError("blank encounter_id", rowno, "")
        if eid in seen:
            raise RecordError(f"duplicate encounter_id {eid!r}", rowno, eid)
        seen.add(eid)
        values = []
        for code, pos, r in zip(schema.codes, positions, cards):
            cell = row[pos].strip()
            try:
                v = int(cell)
            except ValueError:
                raise RecordError(f"{code}: non-integer value {cell!r}", rowno, cell) from None
            if not 0 <= v < r:
                raise RecordError(f"{code}: value {v} out of range 0..{r - 1}", rowno, cell)
            values.append(v)
        records.append(EncounterRecord(eid, tuple(values)))
    return records


def format_records(records: Sequence[EncounterRecord], schema: Schema = TABLE2_SCHEMA) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow((ID_COLUMN,) + schema.codes)
    for rec in records:
        writer.writerow((rec.encounter_id,) + rec.values)
    return buf.getvalue()


def write_records(path: str | Path, records: Sequence[EncounterRecord], schema: Schema = TABLE2_SCHEMA):
    Path(path).write_text(format_records(records, schema), encoding="utf-8")


def to_array(records: Sequence[EncounterRecord] | np.ndarray, schema: Schema | None = None) -> np.ndarray:
    """Records as an ``(N, n)`` int64 matrix in schema column order."""
    if isinstance(records, np.ndarray):
        return records.astype(np.int64, copy=False)
    width = len(schema) if schema is not None else (len(records[0].values) if records else 0)
    if not records:
        return np.zeros((0, width), dtype=np.int64)
    return np.array([r.values for r in records], dtype=np.int64)


def from_array(data: np.ndarray, prefix: str = "e") -> list[EncounterRecord]:
    width = len(str(len(data)))
    return [
        EncounterRecord(f"{prefix}{i:0{width}d}", tuple(int(v) for v in row))
        for i, row in enumerate(data, start=1)
    ]


# -- encoding of raw fields -------------------------------------------------


def _default_cpt_map() -> dict[str, int]:
    text = resources.files("medassure").joinpath("data/cpt_map.csv").read_text(encoding="utf-8")
    return parse_cpt_map(io.StringIO(text))


@dataclass(frozen=True)
class EncodingRules:
    hypotension_threshold_mmhg: float = 100.0
    post_beta_window_hours: float = 24.0
    thoracic_cpt_map: Mapping[str, int] = field(default_factory=_default_cpt_map)
    af_icd9_prefix: str = "427"
    bp_read_time_rule: str = "first reading after 06:00 on the day following surgery"

    def __post_init__(self):
        if self.hypotension_threshold_mmhg <= 0:
            raise DataError("hypotension threshold must be positive")
        if self.post_beta_window_hours <= 0:
            raise DataError("post-beta window must be positive")
        bad = {c: s for c, s in self.thoracic_cpt_map.items() if s not in (0, 1, 2)}
        if bad:
            raise DataError(f"CPT codes mapped to invalid Surgery states: {bad}")


def parse_cpt_map(fh: Iterable[str]) -> dict[str, int]:
    reader = csv.DictReader(fh)
    if reader.fieldnames is None or {"cpt_code", "surgery_state"} - set(reader.fieldnames):
        raise SchemaError("CPT map needs columns cpt_code,surgery_state")
    out = {}
    for rowno, row in enumerate(reader, start=2):
        try:
            out[row["cpt_code"].strip()] = int(row["surgery_state"])
        except ValueError:
            raise RecordError(f"bad surgery_state {row['surgery_state']!r}", rowno) from None
    return out


def load_cpt_map(path: str | Path) -> dict[str, int]:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_cpt_map(fh)


def encode_surgery(cpt_codes: Iterable[str], rules: EncodingRules) -> int:
    # definite (2) dominates possible (1) dominates not thoracic (0)
    return max((rules.thoracic_cpt_map.get(c.strip(), 0) for c in cpt_codes), default=0)


def encode_hypotension(bp_mmhg: float, rules: EncodingRules) -> int:
    if not bp_mmhg > 0:
        raise DataError(f"blood pressure reading must be positive, got {bp_mmhg}")
    return int(bp_mmhg < rules.hypotension_threshold_mmhg)


def encode_af(icd9_codes: Iterable[str], rules: EncodingRules) -> int:
    return int(any(c.strip().startswith(rules.af_icd9_prefix) for c in icd9_codes))
