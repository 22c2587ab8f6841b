import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from medassure.errors import DataError, RecordError, SchemaError
from medassure.records import (
    TABLE2_SCHEMA,
    EncodingRules,
    EncounterRecord,
    Schema,
    VariableSpec,
    encode_af,
    encode_hypotension,
    encode_surgery,
    format_records,
    from_array,
    load_records,
    parse_cpt_map,
    parse_records,
    to_array,
)

HEADER = "encounter_id,Surgery,Pre_beta,Post_beta,Hypotension,Epidural,AF\n"
RULES = EncodingRules()


def parse(text):
    return parse_records(io.StringIO(text), TABLE2_SCHEMA)


def test_table2_schema_shape():
    assert TABLE2_SCHEMA.codes == ("Surgery", "Pre_beta", "Post_beta", "Hypotension", "Epidural", "AF")
    assert TABLE2_SCHEMA.cardinalities == (3, 2, 2, 2, 2, 2)
    assert TABLE2_SCHEMA["Surgery"].label(2) == "definitely thoracic"


def test_variable_spec_invariants():
    with pytest.raises(SchemaError):
        VariableSpec("X", "X", ((0, "only"),))
    with pytest.raises(SchemaError):
        VariableSpec("X", "X", ((0, "a"), (2, "b")))
    with pytest.raises(SchemaError):
        Schema.generic([2, 2], ["A", "A"])


def test_row_maps_fields():
    (rec,) = parse(HEADER + "e1,2,1,1,0,0,0\n")
    assert rec.encounter_id == "e1"
    assert rec.values == (2, 1, 1, 0, 0, 0)
    assert rec.get(TABLE2_SCHEMA, "Post_beta") == 1


def test_columns_in_any_order():
    text = "AF,Epidural,Hypotension,Post_beta,Pre_beta,Surgery,encounter_id\n0,0,0,1,1,2,e1\n"
    (rec,) = parse(text)
    assert rec.values == (2, 1, 1, 0, 0, 0)


def test_out_of_range_cites_row():
    with pytest.raises(RecordError) as ei:
        parse(HEADER + "e1,0,0,0,0,0,0\ne2,3,1,1,0,0,0\n")
    assert ei.value.row == 3
    assert "3" in str(ei.value.value)
    assert "row 3" in str(ei.value)


def test_non_integer_cell():
    with pytest.raises(RecordError, match="row 2"):
        parse(HEADER + "e1,x,1,1,0,0,0\n")


def test_blank_cell_rejected():
    with pytest.raises(RecordError):
        parse(HEADER + "e1,,1,1,0,0,0\n")


def test_missing_column_named():
    with pytest.raises(SchemaError, match="Epidural"):
        parse("encounter_id,Surgery,Pre_beta,Post_beta,Hypotension,AF\ne1,0,0,0,0,0\n")


def test_duplicate_id():
    with pytest.raises(RecordError, match="duplicate"):
        parse(HEADER + "e1,0,0,0,0,0,0\ne1,1,0,0,0,0,0\n")


def test_cohort_sized_file_loads_every_row(tmp_path):
    rows = [EncounterRecord(f"e{i}", (i % 3, i % 2, 0, 1, 0, i % 2)) for i in range(7202)]
    path = tmp_path / "cohort.csv"
    path.write_text(format_records(rows, TABLE2_SCHEMA))
    assert len(load_records(str(path), TABLE2_SCHEMA)) == 7202


def test_shipped_demo_loads():
    from importlib import resources

    path = resources.files("medassure").joinpath("data/demo/records.csv")
    assert len(load_records(str(path), TABLE2_SCHEMA)) == 15000


def test_array_round_trip():
    data = np.array([[2, 1, 1, 0, 0, 0], [0, 0, 0, 1, 1, 1]])
    recs = from_array(data)
    assert [r.encounter_id for r in recs] == ["e1", "e2"]
    assert np.array_equal(to_array(recs, TABLE2_SCHEMA), data)


row_values = st.tuples(
    st.integers(0, 2), *[st.integers(0, 1) for _ in range(5)]
)


@given(st.lists(row_values, min_size=0, max_size=30))
def test_write_load_round_trip(rows):
    recs = [EncounterRecord(f"id{i}", v) for i, v in enumerate(rows)]
    text = format_records(recs, TABLE2_SCHEMA)
    back = parse(text)
    assert back == recs
    assert len(back) == len(rows)


# -- encoding rules -------------------------------------------------------------


def test_surgery_codes():
    assert encode_surgery(["43415"], RULES) == 1
    assert encode_surgery(["31760"], RULES) == 2
    assert encode_surgery(["43415", "31760"], RULES) == 2
    assert encode_surgery([], RULES) == 0
    assert encode_surgery(["99999"], RULES) == 0


codes = st.lists(st.sampled_from(["43415", "31760", "43112", "11111", "22222"]), max_size=5)


@given(codes, codes)
def test_surgery_monotone_under_inclusion(a, b):
    assert encode_surgery(a + b, RULES) >= encode_surgery(a, RULES)


def test_hypotension_boundary():
    assert encode_hypotension(99, RULES) == 1
    assert encode_hypotension(100, RULES) == 0
    assert encode_hypotension(180, RULES) == 0
    with pytest.raises(DataError):
        encode_hypotension(0, RULES)
    with pytest.raises(DataError):
        encode_hypotension(-5, RULES)


@given(st.floats(min_value=1e-3, max_value=400, allow_nan=False))
def test_hypotension_iff_below_threshold(bp):
    assert encode_hypotension(bp, RULES) == int(bp < 100)


def test_af_prefix():
    assert encode_af(["427.31"], RULES) == 1
    assert encode_af(["428.0"], RULES) == 0
    assert encode_af([], RULES) == 0


def test_rules_validation():
    with pytest.raises(DataError):
        EncodingRules(hypotension_threshold_mmhg=0)
    with pytest.raises(DataError):
        EncodingRules(post_beta_window_hours=-1)
    with pytest.raises(DataError):
        EncodingRules(thoracic_cpt_map={"1": 3})


def test_cpt_map_csv():
    m = parse_cpt_map(io.StringIO("cpt_code,surgery_state\n31760,2\n43415,1\n"))
    assert m == {"31760": 2, "43415": 1}
    with pytest.raises(SchemaError):
        parse_cpt_map(io.StringIO("code,state\n1,1\n"))
