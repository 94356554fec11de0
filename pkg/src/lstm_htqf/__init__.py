"""Quantile forecasting with an LSTM driving a heavy-tailed quantile function.

Modules
-------
numerics   normal and Student-t quantiles, the seeded PRNG
htqf       the heavy-tailed quantile function and its gradients
dataio     CSV input, chronological split and normalization
features   sliding windows of return and centered-moment features
lstm       the LSTM cell, output heads, forward pass and BPTT
train      pinball objective, Adam training, grid search
garch      GARCH(1,1) baseline estimated by maximum likelihood
simulate   the time-varying-tail benchmark generator
backtest   coverage tests and pinball summaries
cli        the ``lstm-htqf`` command
"""

__version__ = "0.1.0"
