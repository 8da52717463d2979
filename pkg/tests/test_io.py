import numpy as np
import pytest

from uiforecast.fcs import FcsConfig, fit_fcs, impute_rows
from uiforecast.io import DataError, config_hash, load_model, read_series_csv, read_table, \
    save_model, write_series_csv, write_table
from uiforecast.rf import ForestConfig
from uiforecast.simulate import gen_bounded_sites, inject_sporadic


def test_series_csv_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    values = gen_bounded_sites(2, 300, rng)
    mask = np.vstack([inject_sporadic(300, 0.2, rng), inject_sporadic(300, 0.1, rng)])
    values[mask] = np.nan
    path = tmp_path / "s.csv"
    write_series_csv(path, values, ["a", "b"], comment="test")
    stamps, names, back = read_series_csv(path)
    assert names == ["a", "b"] and len(stamps) == 300
    np.testing.assert_array_equal(np.isnan(back), mask)
    assert np.array_equal(back[~mask], values[~mask])


def test_series_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("timestamp,a\n0,1.0\n1,x\n")
    with pytest.raises(DataError):
        read_series_csv(p)
    p.write_text("timestamp,a\n0,1.0,2.0\n")
    with pytest.raises(DataError):
        read_series_csv(p)
    p.write_text("timestamp,a\n")
    with pytest.raises(DataError):
        read_series_csv(p)
    p.write_text("timestamp,a\n0,NA\n1,\n2,0.5\n")
    _, _, v = read_series_csv(p)
    assert np.isnan(v[0, :2]).all() and v[0, 2] == 0.5


def test_table_provenance(tmp_path):
    p = tmp_path / "t.csv"
    write_table(p, ["a", "b"], [[1, 0.1]], {"config_hash": "abc", "version": "0"})
    assert p.read_text().splitlines()[0] == "# config_hash=abc version=0"
    header, rows = read_table(p)
    assert header == ["a", "b"] and rows == [["1", "0.1"]]


def test_config_hash_is_order_independent():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_model_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    z = rng.normal(size=(80, 4)).cumsum(axis=1)
    m = rng.random(z.shape) < 0.2
    m[m.all(axis=1), 0] = False
    cfg = FcsConfig(iterations=2, d=3, forest=ForestConfig(n_trees=3, seed=4), seed=2,
                    n_imputations=5)
    model = fit_fcs((np.where(m, 0, z), m), cfg)
    path = tmp_path / "model.npz"
    save_model(path, model, {"note": "x"})
    back, meta = load_model(path)
    assert meta == {"note": "x"} and back.config == model.config
    rows, masks = z[:10], m[:10].copy()
    masks[:, -1] = True
    np.testing.assert_array_equal(impute_rows(model, rows, masks, seed=9),
                                  impute_rows(back, rows, masks, seed=9))


def test_load_model_rejects_garbage(tmp_path):
    p = tmp_path / "junk.npz"
    p.write_bytes(b"not a model")
    with pytest.raises(DataError):
        load_model(p)
