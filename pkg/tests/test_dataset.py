import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binequiv.dataset import (
    DatasetError,
    MetricDataset,
    Schema,
    load_datasets,
    normalize_weights,
    write_datasets,
)

from conftest import make_ds


def _csv(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_two_metrics_200_rows(tmp_path, rng):
    lines = ["id,weight,P_inj,t_nr"]
    for i in range(200):
        lines.append(f"s{i},{rng.uniform(0.5, 2):.6f},{rng.uniform(0, 1):.6f},{-rng.uniform(0, 3):.6f}")
    p = _csv(tmp_path, "\n".join(lines) + "\n")
    ds = load_datasets(p, Schema(metrics=["P_inj", "t_nr"], id="id"))
    assert [d.metric_id for d in ds] == ["P_inj", "t_nr"]
    assert all(d.n == 200 for d in ds)
    assert ds[0].ids[:2] == ("s0", "s1")
    np.testing.assert_array_equal(ds[0].weights, ds[1].weights)
    assert ds[0].outcomes is None


def test_missing_weight_column_means_unit_weights(tmp_path):
    p = _csv(tmp_path, "scenario_id,m\na,1.5\nb,2.5\nc,0.5\n")
    (d,) = load_datasets(p, Schema(metrics=["m"]))
    np.testing.assert_array_equal(d.weights, [1.0, 1.0, 1.0])
    np.testing.assert_array_equal(d.values, [1.5, 2.5, 0.5])


def test_negative_weight_names_row(tmp_path):
    p = _csv(tmp_path, "scenario_id,weight,m\na,1,1.0\nb,-0.5,2.0\n")
    with pytest.raises(DatasetError, match="row 2"):
        load_datasets(p, Schema(metrics=["m"]))


@pytest.mark.parametrize(
    "body, pattern",
    [
        ("scenario_id,weight,m\na,1,abc\nb,1,2\n", "row 1.*non-numeric"),
        ("scenario_id,weight,m\na,1,1\nb,1\n", "row 2"),
        ("scenario_id,weight,m\na,1,\nb,1,2\n", "row 1.*empty"),
        ("scenario_id,weight,m\na,1,1\nb,1,2\n", None),
    ],
)
def test_malformed_rows(tmp_path, body, pattern):
    p = _csv(tmp_path, body)
    if pattern is None:
        assert load_datasets(p, Schema(metrics=["m"]))[0].n == 2
    else:
        with pytest.raises(DatasetError, match=pattern):
            load_datasets(p, Schema(metrics=["m"]))


def test_empty_file_and_missing_metric(tmp_path):
    with pytest.raises(DatasetError, match="empty"):
        load_datasets(_csv(tmp_path, ""), Schema(metrics=["m"]))
    with pytest.raises(DatasetError, match="no data rows"):
        load_datasets(_csv(tmp_path, "scenario_id,m\n", "h.csv"), Schema(metrics=["m"]))
    with pytest.raises(DatasetError, match="'q' not found"):
        load_datasets(_csv(tmp_path, "scenario_id,m\na,1\nb,2\n", "q.csv"), Schema(metrics=["q"]))


def test_outcome_column_and_range(tmp_path):
    p = _csv(tmp_path, "scenario_id,weight,m,resim_outcome\na,1,1,0.1\nb,1,2,\n")
    (d,) = load_datasets(p, Schema(metrics=["m"]))
    assert d.outcomes[0] == 0.1 and math.isnan(d.outcomes[1])
    assert not d.has_outcomes
    bad = _csv(tmp_path, "scenario_id,weight,m,resim_outcome\na,1,1,1.5\nb,1,2,0\n", "bad.csv")
    with pytest.raises(DatasetError, match="row 1.*outside"):
        load_datasets(bad, Schema(metrics=["m"]))


def test_support_violation_warns_only(tmp_path):
    p = _csv(tmp_path, "scenario_id,t_nr\na,-1\nb,0.5\n")
    with pytest.warns(UserWarning, match="outside declared support"):
        (d,) = load_datasets(p, Schema(metrics=["t_nr"]))
    assert d.n == 2


def test_json_mirror_roundtrip(tmp_path, rng):
    d = make_ds(rng.normal(size=20), rng.uniform(0, 3, 20), rng.uniform(0, 1, 20), metric="a")
    e = make_ds(rng.normal(size=20), d.weights, d.outcomes, metric="b")
    p = tmp_path / "out.json"
    write_datasets(p, [d, e])
    assert isinstance(json.loads(p.read_text()), list)
    a2, b2 = load_datasets(p, Schema(metrics=["a", "b"]))
    np.testing.assert_array_equal(a2.values, d.values)
    np.testing.assert_array_equal(b2.weights, d.weights)
    np.testing.assert_array_equal(a2.outcomes, d.outcomes)


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=60, deadline=None)
@given(
    values=st.lists(finite, min_size=2, max_size=30),
    data=st.data(),
)
def test_csv_roundtrip_is_bit_exact(tmp_path_factory, values, data):
    n = len(values)
    weights = data.draw(st.lists(st.floats(0, 1e12, allow_nan=False), min_size=n, max_size=n))
    if sum(weights) <= 0:
        weights[0] = 1.0
    d = make_ds(values, weights)
    p = tmp_path_factory.mktemp("rt") / "d.csv"
    write_datasets(p, [d])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        (back,) = load_datasets(p, Schema(metrics=["x"]))
    assert back.values.tobytes() == d.values.tobytes()
    assert back.weights.tobytes() == d.weights.tobytes()


class TestNormalize:
    def test_identity_for_unit_weights(self):
        d = normalize_weights(make_ds([1, 2, 3, 4]), "sum_to_n")
        np.testing.assert_array_equal(d.weights, [1, 1, 1, 1])

    def test_two_twos_become_ones(self):
        d = normalize_weights(make_ds([1, 2], [2, 2]), "sum_to_n")
        np.testing.assert_array_equal(d.weights, [1, 1])

    def test_none_mode_is_identity(self):
        d = make_ds([1, 2, 3], [0.5, 3, 1])
        assert normalize_weights(d, "none") is d

    def test_all_zero_weights_rejected(self):
        with pytest.raises(DatasetError):
            make_ds([1, 2], [0, 0])

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            normalize_weights(make_ds([1, 2]), "sum_to_one")

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(1e-6, 1e6), min_size=2, max_size=50))
    def test_idempotent_and_ratio_preserving(self, w):
        d = make_ds(np.arange(len(w)), w)
        once = normalize_weights(d, "sum_to_n")
        twice = normalize_weights(once, "sum_to_n")
        assert math.isclose(once.weights.sum(), d.n, rel_tol=1e-12)
        np.testing.assert_allclose(twice.weights, once.weights, rtol=1e-13)
        np.testing.assert_allclose(once.weights / once.weights[0], np.asarray(w) / w[0], rtol=1e-12)


class TestMetricDataset:
    def test_needs_two_samples(self):
        with pytest.raises(DatasetError, match="at least 2"):
            make_ds([1.0])

    def test_rejects_non_finite(self):
        with pytest.raises(DatasetError, match="non-finite"):
            make_ds([1.0, np.inf])

    def test_arrays_are_read_only(self):
        d = make_ds([1.0, 2.0])
        with pytest.raises(ValueError):
            d.values[0] = 5.0

    def test_samples_view(self):
        d = make_ds([1.0, 2.0], [1.0, 0.0], [0.2, np.nan])
        s = d.samples
        assert s[0].outcome == 0.2 and s[1].outcome is None and s[1].weight == 0.0

    def test_take_resets_weights(self):
        d = make_ds([1.0, 2.0, 3.0], [3.0, 2.0, 1.0])
        t = d.take(np.array([2, 2, 0]), unit_weights=True, role="synthetic")
        np.testing.assert_array_equal(t.values, [3.0, 3.0, 1.0])
        np.testing.assert_array_equal(t.weights, [1.0, 1.0, 1.0])
        assert t.role == "synthetic"
