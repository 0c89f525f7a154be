import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rctpolicy.cohort import (
    Cohort,
    CohortFormat,
    FeatureSchema,
    PatientRecord,
    load_cohort,
    outcome_deltas,
    remission_label,
    save_cohort,
    save_manifest,
    save_matrix,
    standardize,
)
from rctpolicy.errors import ParseError, ValidationError

HEADER = "id,arm,pec_start,pec_end,a__start,b__start,a__end,b__end\n"


def write(tmp_path, text, name="c.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_three_rows(tmp_path):
    p = write(tmp_path, HEADER + "p1,0,40,10,1,2,0,2\np2,1,30,20,3,4,1,1\np3,0,25,5,5,6,2,3\n")
    c = load_cohort(p)
    assert len(c) == 3
    assert c.arm_counts() == (2, 1)
    assert c.schema.names == ("a", "b")
    np.testing.assert_array_equal(c.x_start[1], [3, 4])


def test_empty_cell_is_missing(tmp_path):
    p = write(tmp_path, HEADER + "p1,0,40,10,,2,0,2\n")
    c = load_cohort(p)
    assert len(c) == 1
    assert math.isnan(c.x_start[0, 0])
    assert c.x_start[0, 1] == 2


def test_arm_two_is_rejected_with_row(tmp_path):
    p = write(tmp_path, HEADER + "p1,0,40,10,1,2,0,2\np2,2,30,20,3,4,1,1\n")
    with pytest.raises(ValidationError, match="row 3"):
        load_cohort(p)


def test_arm_aliases(tmp_path):
    p = write(tmp_path, HEADER + "p1,1FED,40,10,1,2,0,2\np2,6fed,30,20,3,4,1,1\n")
    assert load_cohort(p).arms.tolist() == [0, 1]
    fmt = CohortFormat(arm_aliases={"milk": 0, "six": 1})
    p = write(tmp_path, HEADER + "p1,milk,40,10,1,2,0,2\np2,six,30,20,3,4,1,1\n")
    assert load_cohort(p, fmt).arms.tolist() == [0, 1]


def test_duplicate_id(tmp_path):
    p = write(tmp_path, HEADER + "p1,0,40,10,1,2,0,2\np1,1,30,20,3,4,1,1\n")
    with pytest.raises(ValidationError, match="duplicate"):
        load_cohort(p)


@pytest.mark.parametrize("text,match", [
    ("id,arm,pec_start,a__start,a__end\np,0,1,2,3\n", "pec_end"),
    (HEADER + "p1,0,40,10,1,x,0,2\n", "b__start"),
    (HEADER + "p1,0,40,10,1,2\n", "row 2"),
    ("id,arm,pec_start,pec_end,a__start\np,0,1,2,3\n", "start and end"),
    ("id,arm,pec_start,pec_end,weird\np,0,1,2,3\n", "weird"),
])
def test_malformed(tmp_path, text, match):
    with pytest.raises(ParseError, match=match):
        load_cohort(write(tmp_path, text))


def test_negative_pec_rejected(tmp_path):
    with pytest.raises(ValidationError, match="pec_end"):
        load_cohort(write(tmp_path, HEADER + "p1,0,40,-1,1,2,0,2\n"))


def test_missing_file(tmp_path):
    with pytest.raises(ValidationError, match="nope.csv"):
        load_cohort(tmp_path / "nope.csv")


def test_groups_and_delimiter(tmp_path):
    text = HEADER.replace(",", ";") + "p1;0;40;10;1;2;0;2\n"
    fmt = CohortFormat(delimiter=";", groups={"a": "endoscopy"})
    c = load_cohort(write(tmp_path, text), fmt)
    assert c.schema.groups == ("endoscopy", "other")


def test_schema_invariants():
    with pytest.raises(ValidationError):
        FeatureSchema(("a", "a"))
    with pytest.raises(ValidationError):
        FeatureSchema(("a", ""))
    with pytest.raises(ValidationError):
        FeatureSchema(("a",), ("bogus",))


def test_record_invariants():
    with pytest.raises(ValidationError):
        PatientRecord("x", 2, [1.0], [1.0])
    with pytest.raises(ValidationError):
        PatientRecord("x", 0, [1.0], [1.0, 2.0])
    with pytest.raises(ValidationError):
        PatientRecord("x", 0, [1.0], [1.0], pec_start=-3)


def test_cohort_is_read_only():
    c = Cohort.from_arrays(FeatureSchema(("a",)), ["p"], [0], [[1.0]], [[2.0]], [20], [3])
    with pytest.raises(ValueError):
        c.x_start[0, 0] = 5.0


def _cohort(xs, xe, pec=None):
    xs, xe = np.atleast_2d(xs), np.atleast_2d(xe)
    n, d = xs.shape
    schema = FeatureSchema(tuple(f"f{j}" for j in range(d)))
    pec = pec if pec is not None else (np.full(n, 20.0), np.full(n, 10.0))
    return Cohort.from_arrays(schema, [f"p{i}" for i in range(n)], np.arange(n) % 2, xs, xe, *pec)


def test_outcome_deltas_examples():
    c = _cohort([[4.0], [np.nan], [7.0]], [[1.0], [5.0], [7.0]])
    d = outcome_deltas(c, include_pec=False)
    assert d.values[0, 0] == -3
    assert math.isnan(d.values[1, 0])
    assert d.values[2, 0] == 0


def test_outcome_deltas_pec_column_first():
    c = _cohort([[1.0], [2.0]], [[1.0], [2.0]], (np.array([40.0, 20.0]), np.array([10.0, 25.0])))
    d = outcome_deltas(c)
    assert d.columns == ("pec", "f0")
    np.testing.assert_array_equal(d.column("pec"), [-30.0, 5.0])


def test_standardize_examples():
    om = standardize(np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(om.values[:, 0], [-1.224744871391589, 0.0, 1.224744871391589], atol=1e-9)
    assert om.feature_stds[0] == pytest.approx(math.sqrt(2 / 3), abs=1e-12)
    om = standardize(np.array([-1.0, 1.0]))
    np.testing.assert_allclose(om.values[:, 0], [-1.0, 1.0], atol=1e-12)


def test_standardize_drops_constant_column():
    vals = np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]])
    with pytest.warns(UserWarning, match="c0"):
        om = standardize(vals)
    assert om.columns == ("c1",)
    assert om.dropped == ("c0",)


def test_standardize_all_degenerate():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ValidationError):
            standardize(np.array([[5.0], [5.0]]))


def test_standardize_train_only_rows():
    om = standardize(np.array([0.0, 2.0, 100.0]), fit_rows=[0, 1])
    np.testing.assert_allclose(om.values[:, 0], [-1.0, 1.0, 99.0])


def test_remission_boundary():
    assert remission_label(14) == 1.0
    assert remission_label(15) == 0.0
    assert remission_label(0) == 1.0
    assert math.isnan(remission_label(float("nan")))
    np.testing.assert_array_equal(remission_label([3.0, 30.0]), [1.0, 0.0])


matrices = arrays(np.float64, st.tuples(st.integers(3, 12), st.integers(1, 4)),
                  elements=st.one_of(st.floats(-1e3, 1e3), st.just(np.nan)))


@settings(max_examples=60, deadline=None)
@given(matrices)
def test_standardize_properties(vals):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            om = standardize(vals)
        except ValidationError:
            return
    kept = [f"c{j}" for j in range(vals.shape[1])]
    idx = [kept.index(c) for c in om.columns]
    raw = vals[:, idx]
    # round trip and missingness
    np.testing.assert_allclose(om.unstandardize(), raw, rtol=0, atol=1e-9 * max(1.0, np.nanmax(np.abs(raw))))
    np.testing.assert_array_equal(np.isnan(om.values), np.isnan(raw))
    for j in range(om.values.shape[1]):
        z = om.values[:, j]
        z = z[~np.isnan(z)]
        assert abs(z.mean()) < 1e-9
        assert abs(z.std() - 1) < 1e-9


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (6, 3), elements=st.one_of(st.floats(-50, 50), st.just(np.nan))),
       arrays(np.float64, (6, 3), elements=st.one_of(st.floats(-50, 50), st.just(np.nan))))
def test_delta_missing_mask_is_union(xs, xe):
    d = outcome_deltas(_cohort(xs, xe), include_pec=False)
    np.testing.assert_array_equal(np.isnan(d.values), np.isnan(xs) | np.isnan(xe))


def test_load_save_load_idempotent(tmp_path):
    p = write(tmp_path, HEADER + "p1,0,40,10,,2.5,0,2\np2,1,30,,3,4,1,1e-3\np3,1,0.1,5,5,6,,3\n")
    c1 = load_cohort(p)
    c2 = load_cohort(save_cohort(c1, tmp_path / "again.csv"))
    assert c1.equals(c2)
    assert (tmp_path / "again.csv").read_text() == save_cohort(c2, tmp_path / "third.csv").read_text()


def test_matrix_and_manifest_written(tmp_path):
    c = _cohort([[1.0, 2.0], [2.0, 2.0], [4.0, 2.0]], [[0.0, 2.0], [3.0, 2.0], [4.0, 2.0]],
                (np.array([30.0, 40.0, 20.0]), np.array([10.0, 12.0, 30.0])))
    with pytest.warns(UserWarning):
        om = standardize(outcome_deltas(c))
    save_matrix(om, tmp_path / "z.csv")
    save_manifest(om, tmp_path / "z.json", c.schema)
    import json
    man = json.loads((tmp_path / "z.json").read_text())
    assert man["dropped"] == ["f1"]
    assert man["columns"] == ["pec", "f0"]
    assert man["schema"]["names"] == ["f0", "f1"]
    assert (tmp_path / "z.csv").read_text().splitlines()[0] == "id,pec,f0"
