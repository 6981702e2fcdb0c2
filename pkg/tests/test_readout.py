import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import sparse

from chaosrc.dynsys import LorenzParams, lorenz_generate
from chaosrc.errors import ConfigError, DimensionMismatchError, SeriesTooShortError, SingularSystemError
from chaosrc.features import FeatureConfig, assemble, featurize_series, iter_feature_chunks, plan_features
from chaosrc.metrics import valid_time
from chaosrc.readout import (EsnConfig, EsnState, GramAccumulator, Normalizer, ReadoutModel, Reservoir,
                             esn_predict, esn_step, esn_train, predict_closed_loop, ridge_solve, train,
                             train_model)
from chaosrc.timeseries import TimeSeries


def dense_ridge(s, y, lam):
    """Textbook formula with an explicit inverse."""
    return y @ s.T @ np.linalg.inv(s @ s.T + lam * np.eye(s.shape[0]))


@pytest.fixture(scope="module")
def lorenz():
    return lorenz_generate(LorenzParams(initial_state=(-3.0, 2.0, 25.0)), 4000).slice(1000)


class TestRidge:
    def test_identity(self):
        np.testing.assert_allclose(ridge_solve(np.eye(4), np.eye(4), 0.0), np.eye(4), atol=1e-15)

    def test_scalars(self):
        assert ridge_solve([[2.0]], [[4.0]], 0.0)[0, 0] == pytest.approx(2.0)
        assert ridge_solve([[1.0]], [[1.0]], 1.0)[0, 0] == pytest.approx(0.5)

    def test_matches_dense_inverse(self):
        rng = np.random.default_rng(0)
        s, y = rng.standard_normal((20, 200)), rng.standard_normal((3, 200))
        for lam in (0.0, 1e-3, 1.0):
            w, ref = ridge_solve(s, y, lam), dense_ridge(s, y, lam)
            assert np.linalg.norm(w - ref) <= 1e-10 * np.linalg.norm(ref)

    def test_residual_bound_random_instances(self):
        rng = np.random.default_rng(1)
        worst = 0.0
        for _ in range(100):
            f, t, q = rng.integers(2, 60), rng.integers(5, 400), rng.integers(1, 5)
            scale = 10.0 ** rng.uniform(-3, 3, size=(f, 1))
            s = scale * rng.standard_normal((f, t))
            y = rng.standard_normal((q, t))
            lam = 10.0 ** rng.uniform(-8, 1)
            _, rel = ridge_solve(s, y, lam, return_residual=True)
            worst = max(worst, rel)
        assert worst <= 1e-8

    def test_singular_without_regularization(self):
        s = np.vstack([np.ones(10), np.ones(10)])
        with pytest.raises(SingularSystemError):
            ridge_solve(s, np.ones((1, 10)), 0.0)
        w = ridge_solve(s, np.ones((1, 10)), 1e-6)
        assert np.all(np.isfinite(w))

    def test_errors(self):
        with pytest.raises(DimensionMismatchError):
            ridge_solve(np.ones((2, 5)), np.ones((1, 4)), 0.1)
        with pytest.raises(ConfigError):
            ridge_solve(np.ones((2, 5)), np.ones((1, 5)), -1.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 7))
    def test_streaming_gram_equivalence(self, seed, n_chunks):
        rng = np.random.default_rng(seed)
        s, y = rng.standard_normal((15, 210)), rng.standard_normal((2, 210))
        acc = GramAccumulator(15, 2)
        for part in np.array_split(np.arange(210), n_chunks):
            acc.add(s[:, part], y[:, part])
        g = s @ s.T
        assert np.linalg.norm(acc.full_gram() - g) <= 1e-12 * np.linalg.norm(g)
        c = y @ s.T
        assert np.linalg.norm(acc.cross - c) <= 1e-12 * np.linalg.norm(c)


class TestTrain:
    def test_fit_rmse_monotone_in_lambda(self, lorenz):
        fm = plan_features(FeatureConfig("ng_rc", 3, 1))
        series = lorenz.slice(0, 1000)
        rmse = [train(series, fm, lam)[1].fit_rmse for lam in (1e-9, 1e-6, 1e-3, 1.0)]
        assert all(a <= b * (1 + 1e-9) for a, b in zip(rmse, rmse[1:]))

    def test_lorenz_first_dim_only_fits(self, lorenz):
        fm = plan_features(FeatureConfig("heng_rc", 3, 1, heng_variant="first_dim_only"))
        model, summary = train(lorenz.slice(0, 400), fm, 1e-6)
        assert summary.fit_rmse < 0.1
        assert summary.n_samples == 400 - 1 - fm.depth
        assert summary.normal_eq_residual <= 1e-8
        assert model.w_out.shape == (3, 12)

    def test_constant_series_continues_constant(self):
        c = np.array([1.5, -0.5, 2.0])
        series = TimeSeries(np.tile(c[:, None], (1, 60)), 0.1)
        fm = plan_features(FeatureConfig("heng_rc", 3, 1, include_constant=True))
        model, _ = train(series, fm, 1e-12)
        pred = predict_closed_loop(model, series, 50)
        np.testing.assert_allclose(pred.data, np.tile(c[:, None], (1, 50)), rtol=1e-9)

    def test_delta_and_next_state_agree_at_zero_lambda(self):
        rng = np.random.default_rng(3)
        m = np.array([[0.9, -0.2], [0.3, 0.8]])
        data = np.empty((2, 300))
        data[:, 0] = [1.0, 0.0]
        for t in range(299):
            data[:, t + 1] = m @ data[:, t] + 0.1 * rng.standard_normal(2)
        series = TimeSeries(data, 1.0)
        fm = plan_features(FeatureConfig("ng_rc", 2, 1))
        a, _ = train(series, fm, 0.0, "next_state")
        b, _ = train(series, fm, 0.0, "delta")
        np.testing.assert_allclose(b.w_out[:, :2] + np.eye(2), a.w_out[:, :2], atol=1e-10)
        pa, pb = predict_closed_loop(a, series, 30), predict_closed_loop(b, series, 30)
        np.testing.assert_allclose(pa.data, pb.data, rtol=1e-8, atol=1e-10)

    def test_streamed_training_matches_materialized(self, monkeypatch):
        import chaosrc.readout as ro
        series = TimeSeries(np.random.default_rng(7).standard_normal((3, 2000)), 1.0)
        fm = plan_features(FeatureConfig("ng_rc", 3, 2))
        whole, _ = train(series, fm, 1e-6)
        monkeypatch.setattr(ro, "MATERIALIZE_LIMIT", 0)
        streamed, _ = train(series, fm, 1e-6, chunk=97)
        np.testing.assert_allclose(streamed.w_out, whole.w_out, rtol=1e-9, atol=1e-12)

    def test_too_short_and_underdetermined(self):
        fm = plan_features(FeatureConfig("ng_rc", 3, 2))
        with pytest.raises(SeriesTooShortError):
            train(TimeSeries(np.ones((3, 3)), 0.1), fm)
        data = np.random.default_rng(0).standard_normal((3, 5))
        with pytest.warns(UserWarning, match="underdetermined"):
            train(TimeSeries(data, 0.1), fm, 1e-3)

    def test_normalized_training_round_trips_scale(self, lorenz):
        fm = plan_features(FeatureConfig("heng_rc", 3, 1))
        model, _ = train(lorenz.slice(0, 800), fm, 1e-4, normalize=True)
        pred = predict_closed_loop(model, lorenz.slice(0, 800), 5)
        np.testing.assert_allclose(pred.data, lorenz.data[:, 800:805], atol=0.5)


@pytest.fixture(scope="module")
def model(lorenz):
    fm = plan_features(FeatureConfig("heng_rc", 3, 2, include_constant=True))
    return train(lorenz.slice(0, 400), fm, 1e-5)[0]


class TestClosedLoop:
    def test_one_step_is_readout_of_tail(self, model, lorenz):
        warm = lorenz.slice(0, 400)
        window = warm.data[:, -model.history_depth - 1:][:, ::-1]
        pred = predict_closed_loop(model, warm, 1)
        np.testing.assert_allclose(pred.data[:, 0], model.w_out @ assemble(window, model.feature_map),
                                   rtol=1e-14)
        assert pred.origin_time == pytest.approx(warm.origin_time + 400 * warm.dt)

    def test_bitwise_deterministic(self, model, lorenz):
        warm = lorenz.slice(0, 400)
        a = predict_closed_loop(model, warm, 500)
        b = predict_closed_loop(model, warm, 500)
        assert a.data.tobytes() == b.data.tobytes()

    def test_tracks_truth(self, model, lorenz):
        pred = predict_closed_loop(model, lorenz.slice(0, 400), 300)
        truth = lorenz.slice(400, 700)
        assert valid_time(truth, pred).valid_steps > 100

    def test_blow_up_truncates_and_flags(self):
        fm = plan_features(FeatureConfig("ng_rc", 1, 1))
        w = np.zeros((1, fm.total_dim))
        w[0, 0] = 2.0
        model = ReadoutModel(w, 0.0, fm)
        pred = predict_closed_loop(model, TimeSeries(np.ones((1, 2)), 1.0), 100)
        assert pred.blew_up
        assert pred.length == 19  # 2**19 < 1e6 <= 2**20
        assert pred.data[0, -1] == 2.0 ** 19

    def test_warmup_too_short(self, model):
        with pytest.raises(SeriesTooShortError):
            predict_closed_loop(model, TimeSeries(np.ones((3, 2)), 0.01), 5)

    def test_model_validation(self):
        fm = plan_features(FeatureConfig("ng_rc", 1, 1))
        with pytest.raises(DimensionMismatchError):
            ReadoutModel(np.zeros((1, 3)), 0.0, fm)
        with pytest.raises(ConfigError):
            ReadoutModel(np.full((1, fm.total_dim), np.nan), 0.0, fm)
        with pytest.raises(ConfigError):
            ReadoutModel(np.zeros((1, fm.total_dim)), 0.0, fm, target_mode="other")


class TestEsn:
    def test_zero_leak_keeps_state(self):
        cfg = EsnConfig(n_nodes=10, leak_rate=0.0)
        s = np.random.default_rng(0).uniform(-1, 1, 10)
        np.testing.assert_array_equal(esn_step(EsnState(s), [0.3, 0.1, -0.2], cfg).s, s)

    def test_zero_in_zero_out(self):
        cfg = EsnConfig(n_nodes=10, bias_scale=0.0)
        assert not esn_step(EsnState(np.zeros(10)), np.zeros(3), cfg).s.any()

    def test_direct_evaluation(self):
        cfg = EsnConfig(n_nodes=3, input_dim=3, spectral_radius=0.0)
        res = Reservoir.from_matrices(cfg, np.zeros((3, 3)), np.eye(3), np.zeros(3))
        out = esn_step(EsnState(np.zeros(3)), [0.5, 0.5, 0.5], cfg, res).s
        np.testing.assert_allclose(out, np.tanh(0.5))

    def test_row_vector_orientation(self):
        cfg = EsnConfig(n_nodes=2, input_dim=1)
        a = np.array([[0.0, 1.0], [0.0, 0.0]])
        res = Reservoir.from_matrices(cfg, a, np.zeros((2, 1)), np.zeros(2))
        out = esn_step(EsnState(np.array([1.0, 0.0])), [0.0], cfg, res).s
        # s @ A moves node 0 into node 1; A @ s would give zeros.
        np.testing.assert_allclose(out, [0.0, np.tanh(1.0)])

    @pytest.mark.parametrize("n", [50, 600])
    def test_spectral_radius_is_exact(self, n):
        cfg = EsnConfig(n_nodes=n, spectral_radius=0.9, seed=4)
        a = Reservoir(cfg).a
        rho = np.max(np.abs(np.linalg.eigvals(a.toarray())))
        assert abs(rho - 0.9) <= 1e-6
        assert sparse.issparse(a)
        assert a.nnz / n == pytest.approx(3.0, rel=0.25)

    def test_seeded_reservoir_is_reproducible(self):
        a, b = Reservoir(EsnConfig(seed=9)), Reservoir(EsnConfig(seed=9))
        assert (a.a != b.a).nnz == 0
        np.testing.assert_array_equal(a.w_in, b.w_in)
        np.testing.assert_array_equal(a.b, b.b)

    def test_echo_state_property(self, lorenz):
        x = Normalizer.fit(lorenz.data).forward(lorenz.data)[:, :300]
        res = Reservoir(EsnConfig(seed=1))
        a = res.drive(x)
        b = res.drive(x, np.random.default_rng(2).uniform(-1, 1, 28))
        assert np.abs(a[:, 100:] - b[:, 100:]).max() < 1e-6

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.0, 1.0), st.floats(0.0, 5.0))
    def test_state_stays_in_unit_box(self, seed, leak, spread):
        rng = np.random.default_rng(seed)
        cfg = EsnConfig(n_nodes=12, leak_rate=leak, spectral_radius=1.5, input_scale=2.0, seed=seed % 1000)
        res = Reservoir(cfg)
        s = rng.uniform(-1, 1, 12)
        for _ in range(20):
            s = res.step(s, spread * rng.standard_normal(3))
            assert np.max(np.abs(s)) <= 1.0

    def test_esn_28_on_lorenz(self, lorenz):
        cfg = EsnConfig(n_nodes=28, seed=0)
        model, summary = esn_train(lorenz.slice(0, 800), cfg, 1e-4)
        assert model.w_out.shape == (3, 28)
        assert summary.n_samples == 800 - 1 - 100
        pred = esn_predict(model, lorenz.slice(0, 800), 300)
        report = valid_time(lorenz.slice(800, 1100), pred)
        assert 0 < report.valid_steps < 300 or not pred.blew_up
        assert np.all(np.isfinite(pred.data))

    def test_esn_deterministic(self, lorenz):
        cfg = EsnConfig(seed=5)
        runs = [esn_predict(esn_train(lorenz.slice(0, 400), cfg, 1e-4)[0], lorenz.slice(0, 400), 100)
                for _ in range(2)]
        assert runs[0].data.tobytes() == runs[1].data.tobytes()

    def test_esn_errors(self, lorenz):
        with pytest.raises(DimensionMismatchError):
            esn_train(lorenz.slice(0, 400), EsnConfig(input_dim=4), 1e-4)
        with pytest.raises(SeriesTooShortError):
            esn_train(lorenz.slice(0, 50), EsnConfig(), 1e-4, washout=100)
        with pytest.raises(ConfigError):
            EsnConfig(leak_rate=1.5)
        fm = plan_features(FeatureConfig("ng_rc", 3, 1))
        with pytest.raises(ConfigError):
            esn_predict(train(lorenz.slice(0, 400), fm, 1e-4)[0], lorenz, 5)

    def test_dispatch(self, lorenz):
        m1, _ = train_model(lorenz.slice(0, 400), EsnConfig(), 1e-4, normalize=True, washout=50)
        assert m1.is_esn and m1.washout == 50
        m2, _ = train_model(lorenz.slice(0, 400), plan_features(FeatureConfig("ng_rc", 3, 1)), 1e-4)
        assert not m2.is_esn


def test_normalizer_round_trip():
    data = np.random.default_rng(0).normal(3.0, 2.0, (4, 100))
    data[2] = 7.0
    norm = Normalizer.fit(data)
    z = norm.forward(data)
    np.testing.assert_allclose(z[[0, 1, 3]].mean(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(norm.inverse(z), data, rtol=1e-12)
    again = Normalizer.from_dict(norm.to_dict())
    np.testing.assert_array_equal(again.mean, norm.mean)
