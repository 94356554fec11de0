"""Pinball objective, optimizer, early stopping and grid search."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _gradcheck import max_relative_error, numerical_grads
from lstm_htqf import lstm, train
from lstm_htqf.dataio import ReturnSeries, split_normalize
from lstm_htqf.features import build_window_batch
from lstm_htqf.numerics import DomainError, Prng
from lstm_htqf.train import DEFAULT_TAUS, TauGrid, TrainConfig


@pytest.fixture(scope="module")
def split():
    x = np.random.default_rng(0).standard_t(5, size=600)
    return split_normalize(ReturnSeries(x))


def _small_config(**kw):
    base = dict(L=5, H=2, max_epochs=3, patience=2, batch_size=64, taus=TauGrid((0.1, 0.5, 0.9)))
    base.update(kw)
    return TrainConfig(**base)


class TestPinball:
    @pytest.mark.parametrize("tau, y, q, expected", [
        (0.1, 1.0, 0.0, 0.1),
        (0.1, -1.0, 0.0, 0.9),
        (0.9, 2.0, 0.5, 1.35),
        (0.5, 0.3, 0.3, 0.0),
    ])
    def test_values(self, tau, y, q, expected):
        assert train.pinball(tau, y, q) == pytest.approx(expected)

    def test_tie_uses_lower_branch(self):
        assert train.pinball_subgrad_q(0.2, 1.0, 1.0) == pytest.approx(0.8)
        assert train.pinball_subgrad_q(0.2, 1.1, 1.0) == pytest.approx(-0.2)

    @given(st.floats(0.01, 0.99), st.floats(-10, 10), st.floats(-10, 10))
    def test_nonnegative_and_minimized_by_quantile(self, tau, y, q):
        assert train.pinball(tau, y, q) >= 0.0

    def test_sample_quantile_minimizes_mean_loss(self):
        y = np.random.default_rng(1).normal(size=2001)
        grid = np.linspace(-3, 3, 601)
        losses = [np.mean(train.pinball(0.25, y, q)) for q in grid]
        assert grid[int(np.argmin(losses))] == pytest.approx(np.quantile(y, 0.25), abs=0.02)

    def test_domain(self):
        with pytest.raises(DomainError):
            train.pinball(1.0, 0.0, 0.0)


class TestTauGrid:
    def test_default_grid(self):
        assert DEFAULT_TAUS.K == 21
        assert DEFAULT_TAUS.levels[:3] == (0.01, 0.05, 0.1)
        assert DEFAULT_TAUS.levels[-2:] == (0.95, 0.99)
        assert 0.5 in DEFAULT_TAUS.levels
        assert set(train.VAR_TAUS.levels) <= set(DEFAULT_TAUS.levels)

    def test_parse(self):
        assert TauGrid.parse("0.05, 0.5,0.95").levels == (0.05, 0.5, 0.95)

    @pytest.mark.parametrize("levels, exc", [((), ValueError), ((0.5, 0.1), ValueError),
                                             ((0.1, 0.1), ValueError), ((0.0, 0.5), DomainError)])
    def test_invalid(self, levels, exc):
        with pytest.raises(exc):
            TauGrid(levels)


class TestGradients:
    @pytest.mark.parametrize("head", ["htqf", "tqr"])
    def test_end_to_end(self, head):
        rng = np.random.default_rng(2)
        taus = TauGrid((0.1, 0.5, 0.9))
        w = build_window_batch(rng.normal(size=7), 5)
        assert len(w) == 2
        model = lstm.init(2, head, m=3 if head == "tqr" else None, rng=Prng(1))
        loss, analytic = train.loss_and_grads(model, w, taus)
        assert loss == pytest.approx(train.objective(model, w, taus))
        numeric = numerical_grads(lambda: train.objective(model, w, taus), model.params())
        assert max_relative_error(analytic, numeric) < 1e-3


class TestAdam:
    def test_first_steps_by_hand(self):
        p = {"w": np.array([1.0, -2.0])}
        opt = train._Adam(p, lr=0.1)
        g1, g2 = np.array([0.5, -1.0]), np.array([0.1, 0.2])
        opt.step(p, {"w": g1})
        # the first bias-corrected step is lr * sign(g) up to eps
        np.testing.assert_allclose(p["w"], [0.9, -1.9], rtol=1e-7)
        after_one = p["w"].copy()
        opt.step(p, {"w": g2})
        m = 0.9 * 0.1 * g1 + 0.1 * g2
        v = 0.999 * 0.001 * g1 ** 2 + 0.001 * g2 ** 2
        step = 0.1 * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
        np.testing.assert_allclose(p["w"], after_one - step, rtol=1e-12)

    def test_clip(self):
        g = {"a": np.array([3.0]), "b": np.array([4.0])}
        c = train._clip(g, 1.0)
        assert math.hypot(c["a"][0], c["b"][0]) == pytest.approx(1.0)
        assert train._clip(g, 10.0) is g


class TestFit:
    def test_history_starts_untrained(self, split):
        res = train.fit(split, _small_config(max_epochs=2))
        assert [e for e, _, _ in res.history] == [0, 1, 2]
        w_t, w_v = train._windows_for(split, 5)
        init = lstm.init(2, "htqf", 4, Prng(0))
        init.input_scale = train.feature_scale(w_t)
        assert res.history[0][2] == pytest.approx(train.objective(init, w_v, res.config.taus))

    def test_early_stopping_keeps_best_weights(self, split):
        scripted = [5.0, 4.0, 3.0, 2.5, 2.6, 2.7, 2.55, 2.8, 9.0]
        snapshots = {}

        def val(model, epoch):
            snapshots[epoch] = model.copy()
            return scripted[epoch]
        res = train.fit(split, _small_config(max_epochs=8, patience=3), validation_loss=val)
        assert res.best_epoch == 3
        assert res.stopped_early and res.history[-1][0] == 6
        np.testing.assert_array_equal(res.model.W, snapshots[3].W)
        assert res.best_validation_loss == 2.5

    def test_deterministic(self, split):
        a = train.fit(split, _small_config(seed=4))
        b = train.fit(split, _small_config(seed=4))
        np.testing.assert_array_equal(a.model.W, b.model.W)
        assert a.history == b.history

    def test_training_reduces_loss(self, split):
        res = train.fit(split, _small_config(max_epochs=15, patience=15, learning_rate=1e-2))
        assert res.history[res.best_epoch][2] < res.history[0][2]

    def test_non_finite_loss_raises(self, split):
        from lstm_htqf.errors import NumericFailure
        with pytest.raises(NumericFailure):
            train.fit(split, _small_config(), validation_loss=lambda m, e: math.nan)

    def test_feature_scaling_toggle(self, split):
        res = train.fit(split, _small_config(max_epochs=0, scale_features=False))
        np.testing.assert_array_equal(res.model.input_scale, np.ones(4))


class TestPredict:
    def test_tqr_sorted_and_htqf_params(self, split):
        taus = TauGrid((0.1, 0.5, 0.9))
        w = build_window_batch(split.test.values, 5)
        tqr = lstm.init(3, "tqr", m=3, rng=Prng(0))
        tqr.W_out[::-1] *= -3  # encourage crossings before sorting
        p = train.predict(tqr, w, taus)
        assert p.params is None and np.all(np.diff(p.quantiles, axis=1) >= 0)
        h = train.predict(lstm.init(3, rng=Prng(0)), w, taus)
        assert h.params.shape == (len(w), 4)
        assert np.all(np.diff(h.quantiles, axis=1) > 0)

    def test_tqr_width_mismatch(self, split):
        w = build_window_batch(split.test.values, 5)
        with pytest.raises(ValueError):
            train.predict(lstm.init(2, "tqr", m=4), w, TauGrid((0.1, 0.5, 0.9)))


class TestGridSearch:
    def test_ties_prefer_small_L_then_H(self, split, monkeypatch):
        def fake_fit(sp, config, head_kind="htqf", **kw):
            return train.FitResult(None, [(0, 1.0, 1.0)], 0, False, config)
        monkeypatch.setattr(train, "fit", fake_fit)
        res = train.grid_search(split, (20, 10), (16, 8), base=_small_config())
        assert (res.best.config.L, res.best.config.H) == (10, 8)
        assert [(r["L"], r["H"]) for r in res.table] == [(10, 8), (10, 16), (20, 8), (20, 16)]

    def test_failures_are_recorded(self, split, monkeypatch):
        from lstm_htqf.errors import NumericFailure

        def fake_fit(sp, config, head_kind="htqf", **kw):
            if config.H == 8:
                raise NumericFailure("boom")
            return train.FitResult(None, [(0, 2.0, 2.0)], 0, False, config)
        monkeypatch.setattr(train, "fit", fake_fit)
        res = train.grid_search(split, (5,), (8, 16), base=_small_config())
        assert res.best.config.H == 16
        assert res.table[0]["status"] == "boom" and math.isnan(res.table[0]["validation_loss"])

    def test_real_small_grid(self, split):
        res = train.grid_search(split, (4, 6), (2,), base=_small_config(max_epochs=1))
        best = min(r["validation_loss"] for r in res.table)
        assert res.best.best_validation_loss == best

    def test_history_csv(self, tmp_path):
        path = tmp_path / "h.csv"
        train.write_history_csv(path, [(0, 1.0, 2.0), (1, 0.123456789012, 1.5)])
        assert path.read_text().splitlines() == [
            "epoch,train_loss,validation_loss", "0,1,2", "1,0.123456789,1.5"]
