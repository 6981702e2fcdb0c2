import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chaosrc.errors import ConfigError, SeriesTooShortError
from chaosrc.features import (FeatureConfig, FeatureMap, assemble, build_heng_nonlinear, build_linear,
                              build_ngrc_nonlinear, delay_window, evaluate_term, featurize_series,
                              iter_feature_chunks, n_samples, nonlinear_count_heng, nonlinear_count_ng,
                              plan_features)
from chaosrc.timeseries import TimeSeries


def random_window(rng, cfg):
    return rng.standard_normal((cfg.q, cfg.depth + 1))


configs = st.builds(
    FeatureConfig,
    family=st.sampled_from(["heng_rc", "ng_rc"]),
    q=st.integers(3, 9),
    k=st.integers(1, 3),
    include_constant=st.booleans(),
    constant_value=st.floats(-2, 2, allow_nan=False),
    neighbor_wrap=st.sampled_from(["periodic", "clamped"]),
    heng_variant=st.sampled_from(["full", "first_dim_only"]),
    delay_offset=st.sampled_from([0, 1]),
)


class TestPlan:
    def test_ng_table_count(self):
        fm = plan_features(FeatureConfig("ng_rc", 64, 1))
        assert (fm.dim_constant, fm.dim_linear, fm.dim_nonlinear, fm.total_dim) == (0, 128, 8256, 8384)

    def test_heng_q64_k2(self):
        assert plan_features(FeatureConfig("heng_rc", 64, 2)).dim_nonlinear == 768

    def test_heng_q3_with_constant(self):
        fm = plan_features(FeatureConfig("heng_rc", 3, 1, include_constant=True))
        assert (fm.dim_constant, fm.dim_linear, fm.dim_nonlinear, fm.total_dim) == (1, 6, 18, 25)

    @pytest.mark.parametrize("q,k", [(64, 2), (256, 2), (512, 2)])
    def test_large_grid_counts(self, q, k):
        fm = plan_features(FeatureConfig("heng_rc", q, k))
        assert fm.dim_nonlinear == 6 * q * k
        d = q * (k + 1)
        assert 6 * q * k < d * (d + 1) // 2

    def test_heng_smaller_than_ng_for_lorenz_configs(self):
        for k in (1, 2):
            assert nonlinear_count_heng(3, k) < nonlinear_count_ng(3, k)

    @settings(max_examples=100, deadline=None)
    @given(configs)
    def test_count_laws(self, cfg):
        fm = plan_features(cfg)
        assert fm.total_dim == fm.dim_constant + fm.dim_linear + fm.dim_nonlinear == len(fm.term_index)
        assert fm.dim_linear == cfg.q * (cfg.k + 1)
        if cfg.family == "ng_rc":
            assert fm.dim_nonlinear == nonlinear_count_ng(cfg.q, cfg.k)
        elif cfg.heng_variant == "full":
            assert fm.dim_nonlinear == nonlinear_count_heng(cfg.q, cfg.k)
        else:
            assert fm.dim_nonlinear == 6 * cfg.k

    def test_term_order(self):
        fm = plan_features(FeatureConfig("heng_rc", 3, 2, include_constant=True))
        assert fm.term_index[0] == ("const",)
        assert fm.term_index[1:10] == tuple(("lin", i, d) for d in range(3) for i in range(3))
        nl = fm.term_index[10:]
        # Block j=1, dimension 0, then the six products in order.
        assert nl[:6] == (("nl", (0, 0), (2, 0)), ("nl", (0, 0), (0, 0)), ("nl", (0, 0), (1, 0)),
                          ("nl", (0, 0), (2, 1)), ("nl", (0, 0), (0, 1)), ("nl", (0, 0), (1, 1)))
        assert nl[18][1] == (0, 1)  # block j=2 reads delay 1

    def test_invalid_configs(self):
        with pytest.raises(ConfigError):
            FeatureConfig("heng_rc", 2, 1)
        with pytest.raises(ConfigError):
            FeatureConfig("ng_rc", 3, 0)
        with pytest.raises(ConfigError):
            FeatureConfig("other", 3, 1)
        with pytest.raises(ConfigError):
            FeatureConfig("heng_rc", 3, 1, delay_offset=2)
        FeatureConfig("heng_rc", 2, 1, neighbor_wrap="clamped")

    def test_text_round_trip(self, tmp_path):
        fm = plan_features(FeatureConfig("heng_rc", 5, 2, include_constant=True, neighbor_wrap="clamped"))
        back = FeatureMap.from_text(fm.to_text())
        assert back == fm
        path = tmp_path / "terms.csv"
        fm.write_term_index(path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["slot", "block", "dims", "delays"]
        assert len(rows) == fm.total_dim + 1


class TestBuilders:
    def test_linear_examples(self):
        cfg = FeatureConfig("ng_rc", 2, 1)
        np.testing.assert_array_equal(build_linear([[1, 3], [2, 4]], cfg), [1, 2, 3, 4])
        assert not build_linear(np.zeros((2, 2)), cfg).any()

    def test_linear_single_block(self):
        cfg = FeatureConfig("ng_rc", 2, 1)
        # A config that reads only u(t) and u(t-1) ignores deeper columns.
        np.testing.assert_array_equal(build_linear([[1, 3, 9], [2, 4, 9]], cfg), [1, 2, 3, 4])

    def test_linear_too_short(self):
        with pytest.raises(SeriesTooShortError):
            build_linear(np.zeros((2, 1)), FeatureConfig("ng_rc", 2, 1))

    def test_ngrc_examples(self):
        np.testing.assert_array_equal(build_ngrc_nonlinear([3.0]), [9.0])
        np.testing.assert_array_equal(build_ngrc_nonlinear([1.0, 2.0]), [1.0, 2.0, 4.0])
        assert build_ngrc_nonlinear(np.ones(128)).shape == (8256,)

    def test_heng_hand_example(self):
        a, b, c, d, e, f = 2.0, 3.0, 5.0, 7.0, 11.0, 13.0
        # delay_offset=1: the first block multiplies H(t-1) with H(t-1) and H(t-2).
        cfg = FeatureConfig("heng_rc", 3, 1, delay_offset=1)
        window = np.array([[0.0, a, d], [0.0, b, e], [0.0, c, f]])
        out = build_heng_nonlinear(window, cfg)
        np.testing.assert_array_equal(out[:6], [a * c, a * a, a * b, a * f, a * d, a * e])
        # The same products with the default offset read u(t) and u(t-1).
        out0 = build_heng_nonlinear(window[:, 1:], FeatureConfig("heng_rc", 3, 1))
        np.testing.assert_array_equal(out0, out)

    def test_heng_clamped_boundary(self):
        cfg = FeatureConfig("heng_rc", 3, 1, neighbor_wrap="clamped")
        window = np.array([[2.0, 7.0], [3.0, 11.0], [5.0, 13.0]])
        out = build_heng_nonlinear(window, cfg)
        np.testing.assert_array_equal(out[:6], [4.0, 4.0, 6.0, 14.0, 14.0, 22.0])

    def test_heng_ones_and_zeros(self):
        cfg = FeatureConfig("heng_rc", 5, 2)
        np.testing.assert_array_equal(build_heng_nonlinear(np.ones((5, 3)), cfg), np.ones(60))
        assert not build_heng_nonlinear(np.zeros((5, 3)), cfg).any()

    def test_heng_too_short(self):
        with pytest.raises(SeriesTooShortError):
            build_heng_nonlinear(np.ones((3, 2)), FeatureConfig("heng_rc", 3, 2))

    def test_assemble_constant_survives(self):
        fm = plan_features(FeatureConfig("heng_rc", 3, 1, include_constant=True))
        out = assemble(np.zeros((3, 2)), fm)
        assert out.shape == (25,)
        assert out[0] == 1.0 and not out[1:].any()

    def test_lorenz_first_dim_only_terms(self):
        x, y, z = 1.5, -2.0, 3.0
        xp, yp, zp = 0.5, 4.0, -1.0
        fm = plan_features(FeatureConfig("heng_rc", 3, 1, heng_variant="first_dim_only"))
        assert fm.total_dim == 12
        out = assemble(np.array([[x, xp], [y, yp], [z, zp]]), fm)
        np.testing.assert_allclose(out[6:], [x * z, x * x, x * y, x * zp, x * xp, x * yp])

    @settings(max_examples=100, deadline=None)
    @given(configs, st.integers(0, 2 ** 32 - 1))
    def test_assemble_matches_term_index(self, cfg, seed):
        fm = plan_features(cfg)
        window = random_window(np.random.default_rng(seed), cfg)
        out = assemble(window, fm)
        assert out.shape == (fm.total_dim,)
        ref = [evaluate_term(t, window, cfg.constant_value) for t in fm.term_index]
        np.testing.assert_array_equal(out, ref)

    @settings(max_examples=50, deadline=None)
    @given(configs, st.integers(0, 2 ** 32 - 1))
    def test_deterministic(self, cfg, seed):
        fm = plan_features(cfg)
        window = random_window(np.random.default_rng(seed), cfg)
        assert assemble(window, fm).tobytes() == assemble(window.copy(), fm).tobytes()

    @settings(max_examples=50, deadline=None)
    @given(configs.filter(lambda c: c.family == "heng_rc"), st.integers(0, 2 ** 32 - 1), st.data())
    def test_heng_locality(self, cfg, seed, data):
        fm = plan_features(cfg)
        rng = np.random.default_rng(seed)
        window = random_window(rng, cfg)
        m = data.draw(st.integers(0, cfg.q - 1))
        lag = data.draw(st.integers(0, cfg.depth))
        bumped = window.copy()
        bumped[m, lag] += 1.0 + abs(rng.standard_normal())
        changed = np.flatnonzero(assemble(window, fm) != assemble(bumped, fm))
        for slot in changed:
            term = fm.term_index[slot]
            refs = {(term[1], term[2])} if term[0] == "lin" else {term[1], term[2]}
            assert (m, lag) in refs

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 20), st.integers(0, 2 ** 32 - 1))
    def test_ngrc_negation_invariance(self, d, seed):
        lin = np.random.default_rng(seed).standard_normal(d)
        np.testing.assert_array_equal(build_ngrc_nonlinear(lin), build_ngrc_nonlinear(-lin))


class TestSeries:
    def test_delay_window(self):
        data = np.arange(12.0).reshape(2, 6)
        np.testing.assert_array_equal(delay_window(data, 3, 2), [[3, 2, 1], [9, 8, 7]])
        with pytest.raises(SeriesTooShortError):
            delay_window(data, 1, 2)

    def test_boundary_count(self):
        fm = plan_features(FeatureConfig("heng_rc", 3, 2))
        series = TimeSeries(np.random.default_rng(0).standard_normal((3, fm.depth + 2)), 0.1)
        feats, targets = featurize_series(series, fm)
        assert feats.shape == (fm.total_dim, 1)
        np.testing.assert_array_equal(targets[:, 0], series.data[:, -1])
        assert n_samples(series.length, fm) == 1

    def test_too_short(self):
        fm = plan_features(FeatureConfig("heng_rc", 3, 2))
        with pytest.raises(SeriesTooShortError):
            featurize_series(TimeSeries(np.ones((3, fm.depth + 1)), 0.1), fm)

    @settings(max_examples=30, deadline=None)
    @given(configs, st.integers(0, 2 ** 32 - 1), st.integers(1, 40))
    def test_slice_equivalence(self, cfg, seed, extra):
        fm = plan_features(cfg)
        data = np.random.default_rng(seed).standard_normal((cfg.q, fm.depth + 1 + extra))
        feats, targets = featurize_series(TimeSeries(data, 1.0), fm)
        assert feats.shape[1] == extra
        for c in range(extra):
            t = fm.depth + c
            np.testing.assert_array_equal(feats[:, c], assemble(delay_window(data, t, fm.depth), fm))
            np.testing.assert_array_equal(targets[:, c], data[:, t + 1])

    @pytest.mark.parametrize("chunk", [1, 7, 64, 5000])
    def test_chunking_is_bitwise_invariant(self, chunk):
        fm = plan_features(FeatureConfig("ng_rc", 4, 2, include_constant=True))
        series = TimeSeries(np.random.default_rng(1).standard_normal((4, 300)), 1.0)
        whole, _ = featurize_series(series, fm)
        parts = np.concatenate([f for f, _ in iter_feature_chunks(series, fm, chunk=chunk)], axis=1)
        assert whole.tobytes() == parts.tobytes()

    def test_large_grid_smoke(self):
        fm = plan_features(FeatureConfig("heng_rc", 64, 2))
        series = TimeSeries(np.random.default_rng(2).standard_normal((64, 10000)), 0.25)
        n = 0
        for feats, _ in iter_feature_chunks(series, fm):
            assert feats.shape[0] == fm.total_dim == 960
            n += feats.shape[1]
        assert n == n_samples(10000, fm)

    def test_dimension_mismatch(self):
        fm = plan_features(FeatureConfig("heng_rc", 4, 1))
        with pytest.raises(ConfigError):
            featurize_series(TimeSeries(np.ones((3, 10)), 1.0), fm)
