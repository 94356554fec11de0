"""End-to-end helpers shared by the CLI and the acceptance checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import garch, train
from .dataio import SeriesSplit
from .features import WindowBatch, build_window_batch
from .lstm import LstmModel

__all__ = ["segment_windows", "lstm_forecast", "GarchForecast", "garch_forecast"]


def segment_windows(split: SeriesSplit, segment: str, L: int) -> WindowBatch:
    """Windows of one split segment with ``t_index`` in whole-series positions."""
    starts = dict(zip(("train", "validation", "test"), split.offsets))
    return build_window_batch(split.segment(segment).values, L, starts[segment])


def lstm_forecast(model: LstmModel, split: SeriesSplit, L: int, segment: str = "test",
                  taus=train.DEFAULT_TAUS) -> tuple[train.Prediction, np.ndarray]:
    """Predictions for a segment plus the realized (normalized) targets."""
    w = segment_windows(split, segment, L)
    return train.predict(model, w, taus), w.y


@dataclass
class GarchForecast:
    params: garch.GarchParams
    quantiles: np.ndarray  # (n_test, K)
    t_index: np.ndarray
    realized: np.ndarray


def garch_forecast(split: SeriesSplit, kind: str = "normal",
                   taus=train.DEFAULT_TAUS) -> GarchForecast:
    """Fit once on train + validation, filter through the test segment.

    The variance recursion starts from the fitting sample's variance and runs
    over the whole normalized series, so every test quantile uses only data
    observed before its target.
    """
    fit_values = np.concatenate([split.train.values, split.validation.values])
    params = garch.fit_mle(fit_values, kind)
    full = np.concatenate([fit_values, split.test.values])
    tau = np.asarray(getattr(taus, "levels", taus), dtype=float)
    q = garch.forecast_quantiles(params, full, tau, sigma2_init=float(np.var(fit_values)))
    start = fit_values.size
    t_index = np.arange(start, full.size)
    return GarchForecast(params, q[start:], t_index, full[start:])
