import numpy as np
import pytest

from src.dataio import (Dataset, load_matrix_csv, quadratic_features, standardize, synth_coherent, synth_gaussian,
                        synth_powerlaw_rows, write_matrix_csv)
from src.errors import InvalidDimensions, ParseError, RaggedRows, ShapeMismatch, ZeroVariance
from src.matcore import leverage_scores


def test_csv_round_trip_is_exact(tmp_path, rng):
    M = rng.standard_normal((6, 3)) * 1e5
    path = tmp_path / "m.csv"
    write_matrix_csv(path, M, header=["a", "b", "c"])
    loaded = load_matrix_csv(path, has_header=True)
    np.testing.assert_array_equal(loaded.X, M)
    assert loaded.name == "m"


def test_csv_response_column_by_name_and_index(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x1,y,x2\n1,10,2\n3,30,4\n5,50,7\n")
    by_name = load_matrix_csv(path, has_header=True, response_column="y")
    np.testing.assert_array_equal(by_name.X, [[1, 2], [3, 4], [5, 7]])
    np.testing.assert_array_equal(by_name.y, [[10], [30], [50]])
    by_index = load_matrix_csv(path, has_header=True, response_column=1)
    np.testing.assert_array_equal(by_index.y, by_name.y)
    with pytest.raises(ValueError):
        load_matrix_csv(path, has_header=True, response_column="z")


def test_csv_parse_error_reports_position(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n3,oops\n")
    with pytest.raises(ParseError) as excinfo:
        load_matrix_csv(path, has_header=True)
    assert (excinfo.value.row, excinfo.value.column) == (3, 2)


def test_csv_ragged_rows(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("1,2\n3\n")
    with pytest.raises(RaggedRows):
        load_matrix_csv(path)


def test_dataset_shape_check():
    with pytest.raises(ShapeMismatch):
        Dataset(X=np.ones((3, 2)), y=np.ones((2, 1)))


def test_standardize_columns_and_response():
    ds = Dataset(X=np.array([[1.0, 10.0], [2.0, 20.0], [3.0, 60.0]]), y=np.array([[1.0], [3.0], [5.0]]))
    out = standardize(ds, "both")
    np.testing.assert_allclose(out.X.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.X.std(axis=0, ddof=1), 1.0)
    np.testing.assert_allclose(out.X[:, 0], [-1.0, 0.0, 1.0])
    np.testing.assert_allclose(out.y.ravel(), [-1.0, 0.0, 1.0])
    assert out.provenance["standardized"] == "both"
    only_y = standardize(ds, "response")
    np.testing.assert_array_equal(only_y.X, ds.X)


def test_standardize_constant_column():
    ds = Dataset(X=np.array([[1.0, 5.0], [2.0, 5.0]]))
    with pytest.raises(ZeroVariance) as excinfo:
        standardize(ds, "columns")
    assert excinfo.value.column == 1


def test_quadratic_features():
    ds = Dataset(X=np.array([[1.0, 2.0, 3.0]]))
    np.testing.assert_array_equal(quadratic_features(ds).X, [[1, 2, 3, 1, 4, 9, 2, 3, 6]])


def test_synth_gaussian_is_seeded():
    a = synth_gaussian(50, 3, np.random.default_rng(1))
    b = synth_gaussian(50, 3, np.random.default_rng(1))
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)
    assert len(a.provenance["beta0"]) == 3
    with pytest.raises(InvalidDimensions):
        synth_gaussian(2, 3, np.random.default_rng(1))


def test_synth_coherent_concentrates_leverage(rng):
    n, p = 512, 8
    ds = synth_coherent(n, p, p // 2, rng)
    lev = leverage_scores(ds.X)
    assert lev[:p // 2].mean() >= 0.5
    assert lev[p // 2:].mean() < 2 * p / n


def test_synth_powerlaw_rows_decay(rng):
    ds = synth_powerlaw_rows(400, 4, 1.0, rng, noise_std=0.0)
    norms = np.linalg.norm(ds.X, axis=1)
    assert norms[:10].mean() > 10 * norms[-100:].mean()
    np.testing.assert_allclose(ds.y.ravel(), ds.X @ np.array(ds.provenance["beta0"]))
