import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binequiv.bayes import SamplerConfig
from binequiv.power import PowerResult, bootstrap_power, fit_reference_models, resample_rows, wilson_interval

from conftest import make_ds

TINY = SamplerConfig(chains=2, warmup=400, draws=500)


class TestWilson:
    def test_table_oracles(self):
        a = wilson_interval(870, 1000)
        assert abs(a.lo - 0.848) <= 1e-3 and abs(a.hi - 0.889) <= 1e-3
        b = wilson_interval(1000, 1000)
        assert abs(b.lo - 0.996) <= 1e-3 and b.hi == 1.0

    def test_textbook_value(self):
        # 7/10 at 95%: (0.3968, 0.8922)
        iv = wilson_interval(7, 10)
        assert iv.lo == pytest.approx(0.39677, abs=1e-4)
        assert iv.hi == pytest.approx(0.89222, abs=1e-4)

    def test_boundaries(self):
        iv = wilson_interval(0, 1)
        assert iv.lo == 0.0 and iv.hi < 1.0
        iv = wilson_interval(1, 1)
        assert iv.hi == 1.0 and iv.lo > 0.0

    @pytest.mark.parametrize("args", [(1, 0), (-1, 5), (6, 5), (1, 5, 1.0)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            wilson_interval(*args)

    @settings(max_examples=500)
    @given(st.integers(1, 10_000), st.floats(0, 1), st.floats(0.5, 0.999))
    def test_contains_point_estimate(self, n, frac, level):
        k = int(round(frac * n))
        iv = wilson_interval(k, n, level)
        assert 0.0 <= iv.lo <= k / n <= iv.hi <= 1.0

    @settings(max_examples=200)
    @given(st.integers(1, 50), st.integers(1, 200), st.integers(2, 20))
    def test_width_shrinks_with_n(self, k, n, factor):
        n = max(n, k)
        a = wilson_interval(k, n)
        b = wilson_interval(k * factor, n * factor)
        assert b.hi - b.lo < a.hi - a.lo


class TestPowerResult:
    def test_definition(self):
        r = PowerResult(10, {("m", "theta"): 7, ("m", "Theta"): 10}, {"m": 0}, ())
        assert r.power("m", "theta") == 0.7
        assert r.power("m", "Theta") == 1.0
        rows = {row["statistic"]: row for row in r.rows()}
        assert rows["theta"]["wilson_ci"] == pytest.approx([0.39677, 0.89222], abs=1e-4)
        json.dumps(r.to_dict())


class TestResample:
    def test_weights_drive_membership(self):
        d = make_ds([0.0, 1.0, 2.0], weights=[0.0, 1.0, 3.0], outcomes=[0, 0, 0])
        out = resample_rows([d], 4000, np.random.default_rng(0))[0]
        assert 0.0 not in out.values
        assert np.mean(out.values == 2.0) == pytest.approx(0.75, abs=0.03)
        assert np.all(out.weights == 1.0) and out.role == "synthetic"

    def test_rows_shared_across_metrics(self):
        ids = np.arange(50)
        a = make_ds(ids.astype(float), metric="a")
        b = make_ds(2.0 * ids, metric="b")
        ra, rb = resample_rows([a, b], 200, np.random.default_rng(1))
        np.testing.assert_array_equal(rb.values, 2.0 * ra.values)


@pytest.fixture(scope="module")
def pair():
    rng = np.random.default_rng(5)
    parent = make_ds(rng.lognormal(0.0, 0.5, 2000), metric="m", role="synthetic")
    ref = make_ds(rng.lognormal(0.0, 0.5, 200), outcomes=np.full(200, 0.0041), metric="m")
    models = fit_reference_models([ref], ("lognormal",), replace(TINY, seed=1), seed=3)
    return parent, ref, models


class TestBootstrap:
    def test_self_replicates_always_pass(self, pair):
        _, ref, models = pair
        res = bootstrap_power(
            ref, ref, reps=3, seed=0, families=("lognormal",), sampler=TINY, ref_models=models, resample=False
        )
        # different sampler seed, same data: draws differ so this is not exactly zero, but deep in the ROPE
        assert res.successes[("m", "theta")] == 3 and res.successes[("m", "Theta")] == 3

    def test_same_seed_bit_reproducible(self, pair):
        parent, ref, models = pair
        kw = dict(replicate_size=300, reps=3, seed=9, families=("lognormal",), sampler=TINY, ref_models=models)
        a = bootstrap_power(parent, ref, **kw)
        b = bootstrap_power(parent, ref, **kw)
        assert a.to_dict() == b.to_dict()
        c = bootstrap_power(parent, ref, **{**kw, "seed": 10})
        assert [r.sampler_seed for r in c.records] != [r.sampler_seed for r in a.records]

    def test_thread_count_irrelevant(self, pair):
        parent, ref, models = pair
        kw = dict(replicate_size=300, reps=3, seed=9, families=("lognormal",), sampler=TINY, ref_models=models)
        a = bootstrap_power(parent, ref, threads=1, **kw)
        b = bootstrap_power(parent, ref, threads=3, **kw)
        assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())

    def test_power_bounds(self, pair):
        parent, ref, models = pair
        res = bootstrap_power(parent, ref, 300, 2, seed=1, families=("lognormal",), sampler=TINY, ref_models=models)
        for (m, s), k in res.successes.items():
            assert 0 <= k <= res.reps
            assert res.power(m, s) == k / res.reps

    def test_validation(self, pair):
        parent, ref, models = pair
        with pytest.raises(ValueError, match="reps"):
            bootstrap_power(parent, ref, reps=0, ref_models=models)
        with pytest.raises(ValueError, match="reference lacks"):
            bootstrap_power(replace(parent, metric_id="other"), ref, reps=1, ref_models=models)
