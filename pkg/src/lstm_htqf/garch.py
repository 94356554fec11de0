"""
GARCH(1,1) with constant mean and normal or unit-variance Student-t innovations.

    r_t = mu + eps_t,   eps_t = sigma_t z_t
    sigma_t^2 = omega + alpha eps_{t-1}^2 + beta sigma_{t-1}^2

The recursion starts from the sample variance of the demeaned fitting sample
unless an explicit starting variance is passed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .errors import DataError, NumericFailure
from .numerics import std_normal_quantile, student_t_quantile

__all__ = [
    "GarchParams",
    "GarchFitError",
    "filter_volatility",
    "log_likelihood",
    "fit_mle",
    "forecast_quantiles",
    "innovation_quantiles",
    "write_params",
    "read_params",
]

INNOVATIONS = ("normal", "t")
MIN_FIT_LENGTH = 100


@dataclass(frozen=True)
class GarchParams:
    mu: float
    omega: float
    alpha: float
    beta: float
    nu: float | None = None
    kind: str = "normal"

    def __post_init__(self):
        if self.kind not in INNOVATIONS:
            raise ValueError(f"innovation kind must be one of {INNOVATIONS}")
        if not (self.omega > 0.0 and self.alpha >= 0.0 and self.beta >= 0.0):
            raise ValueError("need omega > 0, alpha >= 0, beta >= 0")
        if not self.alpha + self.beta < 1.0:
            raise ValueError("need alpha + beta < 1 for covariance stationarity")
        if self.kind == "t" and not (self.nu is not None and self.nu > 2.0):
            raise ValueError("t innovations need nu > 2")
        if not all(math.isfinite(x) for x in (self.mu, self.omega, self.alpha, self.beta)):
            raise ValueError("non-finite GARCH parameters")

    @property
    def persistence(self) -> float:
        return self.alpha + self.beta

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.persistence)


class GarchFitError(NumericFailure):
    """Optimizer did not converge; ``best`` holds the best parameters found."""

    def __init__(self, message, best: GarchParams | None = None):
        super().__init__(message)
        self.best = best


def _initial_variance(series, mu) -> float:
    e = np.asarray(series, dtype=float) - mu
    return float(np.mean((e - e.mean()) ** 2))


def _variance_path(params: GarchParams, eps: np.ndarray, sigma2_init: float) -> np.ndarray:
    s2 = np.empty(eps.size)
    s2[0] = sigma2_init
    if eps.size > 1:
        drive = params.omega + params.alpha * eps[:-1] ** 2
        s2[1:] = lfilter([1.0], [1.0, -params.beta], drive, zi=[params.beta * sigma2_init])[0]
    return s2


def filter_volatility(params: GarchParams, series, sigma2_init: float | None = None):
    """Conditional volatilities sigma_t for every observation of ``series``."""
    r = np.asarray(series, dtype=float)
    if r.size == 0:
        raise DataError("empty series")
    eps = r - params.mu
    if sigma2_init is None:
        sigma2_init = _initial_variance(r, params.mu)
    if not sigma2_init > 0.0:
        raise DataError("starting variance must be positive")
    return np.sqrt(_variance_path(params, eps, sigma2_init))


def _loglik_terms(params: GarchParams, eps: np.ndarray, s2: np.ndarray) -> np.ndarray:
    if params.kind == "normal":
        return -0.5 * (math.log(2.0 * math.pi) + np.log(s2) + eps * eps / s2)
    nu = params.nu
    const = (math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu)
             - 0.5 * math.log(math.pi * (nu - 2.0)))
    return const - 0.5 * np.log(s2) - 0.5 * (nu + 1.0) * np.log1p(eps * eps / (s2 * (nu - 2.0)))


def log_likelihood(params: GarchParams, series, sigma2_init: float | None = None) -> float:
    """Sum of log densities; t innovations are scaled so Var(eps_t) = sigma_t^2."""
    r = np.asarray(series, dtype=float)
    sigma = filter_volatility(params, r, sigma2_init)
    ll = float(np.sum(_loglik_terms(params, r - params.mu, sigma * sigma)))
    if not math.isfinite(ll):
        raise NumericFailure("non-finite log-likelihood")
    return ll


def _logistic(x):
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def _logit(p):
    return math.log(p / (1.0 - p))


def _unpack(theta, kind) -> GarchParams:
    persistence = _logistic(theta[2])
    share = _logistic(theta[3])
    nu = 2.0 + math.exp(theta[4]) if kind == "t" else None
    return GarchParams(mu=float(theta[0]), omega=math.exp(theta[1]),
                       alpha=persistence * share, beta=persistence * (1.0 - share),
                       nu=nu, kind=kind)


def _pack(mu, omega, persistence, share, nu, kind):
    theta = [mu, math.log(omega), _logit(persistence), _logit(share)]
    if kind == "t":
        theta.append(math.log(nu - 2.0))
    return np.array(theta)


def fit_mle(series, kind: str = "normal", n_starts: int = 3, maxiter: int = 6000) -> GarchParams:
    """Maximum-likelihood fit by Nelder-Mead in an unconstrained parameterization.

    omega enters as log(omega), the persistence alpha + beta and the share
    alpha / (alpha + beta) through logits, and nu as log(nu - 2). Several
    starting points are tried and the highest likelihood kept.

    Raises
    ------
    DataError
        Series shorter than 100 points or with zero variance.
    GarchFitError
        No start converged within ``maxiter`` iterations.
    """
    if kind not in INNOVATIONS:
        raise ValueError(f"innovation kind must be one of {INNOVATIONS}")
    r = np.asarray(series, dtype=float)
    if r.size < MIN_FIT_LENGTH:
        raise DataError(f"need at least {MIN_FIT_LENGTH} observations, got {r.size}")
    var = float(np.var(r))
    if not var > 1e-14 * max(1.0, float(np.mean(r * r))):
        raise DataError("series has zero variance; likelihood is degenerate")
    sigma2_init = var
    mean = float(np.mean(r))

    def neg_ll(theta):
        try:
            p = _unpack(theta, kind)
        except (ValueError, OverflowError):
            return 1e300
        s2 = _variance_path(p, r - p.mu, sigma2_init)
        val = -float(np.sum(_loglik_terms(p, r - p.mu, s2))) / r.size
        return val if math.isfinite(val) else 1e300

    starts = [(0.90, 0.10), (0.97, 0.05), (0.60, 0.40), (0.80, 0.20), (0.99, 0.03)][:n_starts]
    best, best_val, any_ok = None, math.inf, False
    for persistence, share in starts:
        x0 = _pack(mean, var * (1.0 - persistence), persistence, share, 8.0, kind)
        res = minimize(neg_ll, x0, method="Nelder-Mead",
                       options={"maxiter": maxiter, "maxfev": 2 * maxiter, "xatol": 1e-8,
                                "fatol": 1e-12, "adaptive": True})
        if res.fun < best_val:
            best_val = res.fun
            best = _unpack(res.x, kind)
        any_ok |= bool(res.success)
    if best is None or not math.isfinite(best_val) or best_val >= 1e300:
        raise GarchFitError("likelihood could not be evaluated at any start")
    if not any_ok:
        raise GarchFitError(f"Nelder-Mead did not converge in {maxiter} iterations", best)
    return best


def innovation_quantiles(params: GarchParams, taus) -> np.ndarray:
    """Quantiles of the unit-variance innovation distribution."""
    tau = np.atleast_1d(np.asarray(taus, dtype=float))
    if params.kind == "normal":
        return std_normal_quantile(tau)
    nu = params.nu
    return student_t_quantile(tau, nu) * math.sqrt((nu - 2.0) / nu)


def forecast_quantiles(params: GarchParams, series, taus,
                       sigma2_init: float | None = None) -> np.ndarray:
    """One-step-ahead quantiles mu + sigma_t F^{-1}(tau) for every t, shape (n, K).

    sigma_t only uses observations before t, so these are genuine forecasts.
    """
    sigma = filter_volatility(params, series, sigma2_init)
    return params.mu + sigma[:, None] * innovation_quantiles(params, taus)[None, :]


def write_params(path, params: GarchParams):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"kind={params.kind}\n")
        for key in ("mu", "omega", "alpha", "beta"):
            fh.write(f"{key}={getattr(params, key)!r}\n")
        fh.write(f"nu={params.nu!r}\n" if params.nu is not None else "nu=\n")


def read_params(path) -> GarchParams:
    items = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                key, _, val = line.partition("=")
                items[key.strip()] = val.strip()
    nu = float(items["nu"]) if items.get("nu") else None
    return GarchParams(mu=float(items["mu"]), omega=float(items["omega"]),
                       alpha=float(items["alpha"]), beta=float(items["beta"]),
                       nu=nu, kind=items.get("kind", "normal"))
