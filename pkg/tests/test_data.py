import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from proxpath.data import (ColumnSchema, Dataset, FeatureSpec, Observation, corrupt_values, evaluate_features,
                           feature_matrix, load_csv, write_csv)
from proxpath.errors import ConfigurationError, ParseError, SchemaError

HEADER = "y,a,d1,m1,z1,w1,x1\n"


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_three_rows(tmp_path):
    p = _write(tmp_path, HEADER + "1,1,0.1,0.2,0.3,0.4,0.5\n2,0,1,2,3,4,5\n3.5,1,-1,-2,-3,-4,-5\n")
    ds = load_csv(p)
    assert ds.n == 3
    assert ds.schema == ColumnSchema(1, 1, 1, 1, 1)
    np.testing.assert_array_equal(ds.y, [1, 2, 3.5])
    np.testing.assert_array_equal(ds.z[:, 0], [0.3, 3, -3])


def test_bad_treatment_cites_row(tmp_path):
    rows = ["1,1,0,0,0,0,0\n"] * 4 + ["1,2,0,0,0,0,0\n"]
    with pytest.raises(ParseError) as exc:
        load_csv(_write(tmp_path, HEADER + "".join(rows)))
    assert exc.value.row == 5
    assert "row 5" in str(exc.value)


def test_non_numeric_cell(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_csv(_write(tmp_path, HEADER + "1,1,0,0,0,0,0\n1,0,x,0,0,0,0\n"))
    assert exc.value.row == 2


def test_missing_column_named(tmp_path):
    with pytest.raises(SchemaError, match="w1"):
        load_csv(_write(tmp_path, "y,a,d1,m1,z1,x1\n1,1,0,0,0,0\n"))
    with pytest.raises(SchemaError, match="z2"):
        load_csv(_write(tmp_path, HEADER + "1,1,0,0,0,0,0\n"), schema=ColumnSchema(z=2))


def test_multivariate_header_and_no_covariates(tmp_path):
    p = _write(tmp_path, "y,a,d1,m1,m2,z1,w1,w2,w3\n0,1,1,2,3,4,5,6,7\n")
    ds = load_csv(p)
    assert ds.schema == ColumnSchema(d=1, m=2, z=1, w=3, x=0)
    assert ds.x.shape == (1, 0)
    np.testing.assert_array_equal(ds.w, [[5, 6, 7]])


def test_round_trip(tmp_path, small):
    p = tmp_path / "out.csv"
    write_csv(small, p)
    back = load_csv(p)
    assert back == small
    write_csv(back, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == p.read_bytes()


finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(hnp.arrays(float, (7, 6), elements=finite), hnp.arrays(np.int8, 7, elements=st.integers(0, 1)))
def test_round_trip_property(tmp_path_factory, vals, a):
    ds = Dataset(vals[:, 0], a, vals[:, 1], vals[:, 2], vals[:, 3], vals[:, 4], vals[:, 5])
    p = tmp_path_factory.mktemp("rt") / "d.csv"
    write_csv(ds, p)
    assert load_csv(p) == ds


def test_dataset_is_immutable(small):
    with pytest.raises(AttributeError):
        small.n = 3
    with pytest.raises(ValueError):
        small.y[0] = 1.0


def test_dataset_invariants():
    with pytest.raises(ParseError):
        Dataset([1.0], [0.5], [0], [0], [0], [0])
    with pytest.raises(ParseError):
        Dataset([np.nan], [1], [0], [0], [0], [0])
    with pytest.raises(SchemaError):
        Dataset([1.0, 2.0], [1], [0, 0], [0, 0], [0, 0], [0, 0])
    with pytest.raises(ParseError):
        Observation(1.0, 2, (0,), (0,), (0,), (0,))


def test_equality_is_order_sensitive(small):
    idx = np.arange(small.n)
    assert small.take(idx) == small
    assert small.take(idx[::-1]) != small


def test_rows_round_trip(small):
    sub = small.take(np.arange(10))
    assert Dataset.from_rows(sub.rows) == sub


def _obs(z=2.0, x=3.0):
    return Observation(y=0.0, a=1, d=(4.0,), m=(5.0,), z=(z,), w=(6.0,), x=(x,))


def test_evaluate_features_concatenation():
    np.testing.assert_array_equal(evaluate_features(FeatureSpec("c0", ("intercept", "z", "x")), _obs()), [1, 2, 3])


def test_instrument_c2_layout():
    spec = FeatureSpec("c2", ("intercept", "z", "m", "d", "x"))
    np.testing.assert_array_equal(evaluate_features(spec, _obs()), [1, 2, 5, 4, 3])


def test_corruption_arithmetic():
    np.testing.assert_array_equal(corrupt_values([1.0, -1.0]), [1.5, 1.5])
    assert corrupt_values(0.0) == 0.0


def test_corrupted_transform_twice_is_not_identity():
    base = FeatureSpec("h2.reg", ("intercept", "w", "x"))
    cor = base.with_transform("corrupted")
    obs = _obs(x=-2.0)
    once = evaluate_features(cor, obs)
    np.testing.assert_array_equal(once, [1, 6 + 18, 2 + 2])
    twice = corrupt_values(once[1:])
    assert not np.allclose(twice, evaluate_features(base, obs)[1:])
    # zero covariates still give a finite vector
    ds = Dataset([1.0], [1], [0.0], [0.0], [0.0], [0.0])
    out = feature_matrix(cor, ds)
    assert out.shape == (1, 2) and np.all(np.isfinite(out))


def test_binary_columns_are_not_corrupted():
    spec = FeatureSpec("q", ("intercept", "x"), transform="corrupted", binary={"x1"})
    np.testing.assert_array_equal(evaluate_features(spec, _obs(x=1.0)), [1, 1])


def test_unknown_role():
    with pytest.raises(ConfigurationError):
        FeatureSpec("bad", ("intercept", "u"))
    with pytest.raises(ConfigurationError):
        FeatureSpec("bad", ("intercept",), transform="square")


def test_feature_matrix_matches_rowwise(small):
    spec = FeatureSpec("c1", ("intercept", "z", "d", "x"), transform="corrupted")
    mat = feature_matrix(spec, small)
    for i in (0, 7, 99):
        np.testing.assert_array_equal(mat[i], evaluate_features(spec, small.row(i)))
