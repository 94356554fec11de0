"""LSTM cell, heads, backpropagation and model files."""

import json
import math

import numpy as np
import pytest

from _gradcheck import max_relative_error, numerical_grads
from lstm_htqf import lstm
from lstm_htqf.htqf import HtqfParams
from lstm_htqf.lstm import HeadBounds
from lstm_htqf.numerics import Prng


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def _loop_forward(model, X):
    """Scalar transcription of the cell for one window."""
    H, D = model.H, model.D
    h = [0.0] * H
    c = [0.0] * H
    for row in X:
        x = [row[d] / model.input_scale[d] for d in range(D)]
        a = []
        for r in range(4 * H):
            s = model.b[r]
            s += sum(model.W[r, d] * x[d] for d in range(D))
            s += sum(model.U[r, k] * h[k] for k in range(H))
            a.append(s)
        f = [_sig(a[k]) for k in range(H)]
        i = [_sig(a[H + k]) for k in range(H)]
        o = [_sig(a[2 * H + k]) for k in range(H)]
        g = [math.tanh(a[3 * H + k]) for k in range(H)]
        c = [f[k] * c[k] + i[k] * g[k] for k in range(H)]
        h = [o[k] * math.tanh(c[k]) for k in range(H)]
    off, sc = lstm.head_affine(model.head_kind, model.m, model.bounds)
    out = []
    for j in range(model.m):
        s = model.b_out[j] + sum(model.W_out[j, k] * h[k] for k in range(H))
        out.append(off[j] + sc[j] * math.tanh(s))
    return out


@pytest.fixture
def window():
    return np.random.default_rng(3).normal(size=(6, 4))


class TestForward:
    @pytest.mark.parametrize("head, H", [("htqf", 3), ("tqr", 2), ("htqf", 1)])
    def test_matches_loop(self, window, head, H):
        model = lstm.init(H, head, m=5 if head == "tqr" else None, rng=Prng(1))
        model.input_scale = np.array([1.0, 2.0, 0.5, 3.0])
        out, _ = lstm.forward(model, window)
        np.testing.assert_allclose(out, _loop_forward(model, window), rtol=1e-12, atol=1e-14)

    def test_batch_equals_singles(self, window):
        model = lstm.init(4, rng=Prng(2))
        batch = np.stack([window, window[::-1], 2 * window])
        out, _ = lstm.forward(model, batch)
        for k in range(3):
            np.testing.assert_allclose(out[k], lstm.forward(model, batch[k])[0], rtol=1e-13)

    def test_htqf_output_bounds(self):
        model = lstm.init(4, rng=Prng(0))
        model.W_out *= 50.0  # saturate the head
        X = np.random.default_rng(0).normal(size=(200, 8, 4)) * 10
        out, _ = lstm.forward(model, X)
        b = model.bounds
        lo = np.array([-b.c_mu, b.sigma_min, 0.0, 0.0])
        hi = np.array([b.c_mu, b.sigma_max, b.u_max, b.v_max])
        # the affine map reaches its ends up to rounding
        assert np.all(out >= lo - 1e-15) and np.all(out <= hi + 1e-15)
        assert np.all(out[:, 1] > 0)

    def test_identity_head(self, window):
        model = lstm.init(3, bounds=HeadBounds(identity=True), rng=Prng(0))
        out, trace = lstm.forward(model, window)
        np.testing.assert_array_equal(out, trace.raw[0])

    def test_wrong_width(self):
        with pytest.raises(ValueError):
            lstm.forward(lstm.init(2), np.zeros((5, 3)))


class TestMapHead:
    def test_htqf_params(self):
        p = lstm.map_head(np.array([0.0, -1.0, 1.0, 0.0]), "htqf", HeadBounds())
        assert isinstance(p, HtqfParams)
        assert (p.mu, p.u, p.v) == (0.0, 2.0, 1.0)
        assert p.sigma == pytest.approx(1e-3, rel=1e-12)

    def test_identity_allows_negative(self):
        p = lstm.map_head(np.array([0.1, -0.5, -0.2, 0.3]), "htqf", HeadBounds(identity=True))
        assert p.sigma == -0.5

    def test_tqr_scale(self):
        np.testing.assert_allclose(lstm.map_head(np.array([0.5, -1.0]), "tqr", HeadBounds()),
                                   [2.5, -5.0])

    @pytest.mark.parametrize("kw", [dict(sigma_min=0.0), dict(sigma_min=3.0), dict(u_max=-1.0)])
    def test_bad_bounds(self, kw):
        with pytest.raises(ValueError):
            HeadBounds(**kw)


class TestBackward:
    @pytest.mark.parametrize("head, m", [("htqf", 4), ("tqr", 3)])
    def test_against_finite_differences(self, head, m):
        rng = np.random.default_rng(5)
        model = lstm.init(3, head, m=m, rng=Prng(4))
        model.b += rng.normal(scale=0.3, size=model.b.shape)
        model.b_out += rng.normal(scale=0.3, size=model.b_out.shape)
        X = rng.normal(size=(2, 5, 4))
        weights = rng.normal(size=(2, m))

        def f():
            return float(np.sum(weights * lstm.forward(model, X)[0]))
        _, trace = lstm.forward(model, X)
        analytic = lstm.backward(model, trace, weights)
        numeric = numerical_grads(f, model.params())
        assert max_relative_error(analytic, numeric) < 1e-4

    def test_single_window_shape(self, window):
        model = lstm.init(2, rng=Prng(0))
        out, trace = lstm.forward(model, window)
        grads = lstm.backward(model, trace, np.ones(4))
        assert {k: v.shape for k, v in grads.items()} == \
            {k: v.shape for k, v in model.params().items()}

    def test_shape_mismatch(self, window):
        model = lstm.init(2, rng=Prng(0))
        _, trace = lstm.forward(model, window)
        with pytest.raises(ValueError):
            lstm.backward(model, trace, np.ones(3))


class TestModelFile:
    def test_round_trip_is_exact(self, tmp_path, window):
        model = lstm.init(5, "tqr", m=7, rng=Prng(9), bounds=HeadBounds(c_q=3.0), A=5.0)
        model.input_scale = np.array([0.3, 1.7, 2.2, 9.1])
        path = tmp_path / "m.json"
        lstm.save_model(path, model, {"L": 6})
        back, meta = lstm.load_model(path)
        assert meta == {"L": 6}
        for name, arr in model.params().items():
            np.testing.assert_array_equal(getattr(back, name), arr)
        assert back.bounds == model.bounds and back.A == 5.0 and back.head_kind == "tqr"
        np.testing.assert_array_equal(lstm.forward(back, window)[0],
                                      lstm.forward(model, window)[0])

    def test_rejects_foreign_files(self, tmp_path):
        d = lstm.model_to_dict(lstm.init(2))
        d["version"] = 99
        with pytest.raises(ValueError, match="version"):
            lstm.model_from_dict(d)
        with pytest.raises(ValueError):
            lstm.model_from_dict(json.loads('{"format": "other"}'))

    def test_layout(self):
        model = lstm.init(3, rng=Prng(0))
        d = lstm.model_to_dict(model)
        assert d["gate_order"] == ["f", "i", "o", "g"]
        assert len(d["weights"]["W"]) == 12 * 4
        np.testing.assert_array_equal(model.gate("f")[2], np.ones(3))
        assert model.n_params() == 12 * 4 + 12 * 3 + 12 + 4 * 3 + 4


class TestInit:
    def test_ranges(self):
        model = lstm.init(16, rng=Prng(0))
        assert np.max(np.abs(model.W)) <= 0.25 and np.max(np.abs(model.U)) <= 0.25
        np.testing.assert_array_equal(model.b[:16], 1.0)
        np.testing.assert_array_equal(model.b[16:], 0.0)

    def test_deterministic(self):
        a, b = lstm.init(4, rng=Prng(3)), lstm.init(4, rng=Prng(3))
        np.testing.assert_array_equal(a.W, b.W)
