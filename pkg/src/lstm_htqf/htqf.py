"""
Heavy-tailed quantile function (HTQF).

    Q(tau | mu, sigma, u, v) = mu + sigma * Z * (exp(u Z)/A + 1) * (exp(-v Z)/A + 1)

with Z the standard normal tau-quantile. ``u`` thickens the right tail, ``v``
the left one; ``u = v = 0`` gives a rescaled normal quantile function. The
curve is strictly increasing in tau for every ``A >= 3``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import DomainError, std_normal_quantile

__all__ = [
    "TAU_CLAMP",
    "HtqfParams",
    "InvalidParams",
    "evaluate",
    "grad_params",
    "check_monotone",
    "quantiles",
    "quantile_grads",
    "monotone_mask",
    "shape_derivative",
]

TAU_CLAMP = 1e-7
DEFAULT_A = 4.0


class InvalidParams(ValueError):
    pass


@dataclass(frozen=True)
class HtqfParams:
    mu: float
    sigma: float
    u: float
    v: float
    A: float = DEFAULT_A

    def __post_init__(self):
        vals = (self.mu, self.sigma, self.u, self.v, self.A)
        if not all(np.isfinite(vals)):
            raise InvalidParams(f"non-finite HTQF parameters: {vals}")
        if not self.sigma > 0.0:
            raise InvalidParams(f"sigma must be > 0, got {self.sigma}")
        if self.u < 0.0 or self.v < 0.0:
            raise InvalidParams(f"tail parameters must be >= 0, got u={self.u}, v={self.v}")
        if self.A < 3.0:
            raise InvalidParams(f"A must be >= 3 for monotonicity, got {self.A}")

    @classmethod
    def unchecked(cls, mu, sigma, u, v, A=DEFAULT_A) -> "HtqfParams":
        """Build without validation (diagnostics and the identity head only)."""
        obj = object.__new__(cls)
        for name, val in zip(("mu", "sigma", "u", "v", "A"), (mu, sigma, u, v, A)):
            object.__setattr__(obj, name, float(val))
        return obj

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.sigma, self.u, self.v])


def _z(tau):
    t = np.asarray(tau, dtype=float)
    if not np.all((t > 0.0) & (t < 1.0)):
        raise DomainError("tau must lie strictly inside (0, 1)")
    t = np.clip(t, TAU_CLAMP, 1.0 - TAU_CLAMP)
    return std_normal_quantile(float(t) if t.ndim == 0 else t)


def quantiles(mu, sigma, u, v, z, A=DEFAULT_A):
    """Vectorized HTQF on standard-normal quantiles ``z``; arguments broadcast."""
    fu = np.exp(u * z) / A + 1.0
    fv = np.exp(-v * z) / A + 1.0
    return mu + sigma * z * fu * fv


def quantile_grads(sigma, u, v, z, A=DEFAULT_A):
    """Partial derivatives of :func:`quantiles` w.r.t. (mu, sigma, u, v).

    Returns four broadcast arrays; d/dmu is identically one.
    """
    eu = np.exp(u * z) / A
    ev = np.exp(-v * z) / A
    fu = eu + 1.0
    fv = ev + 1.0
    z2 = z * z
    d_mu = np.ones(np.broadcast(sigma, z).shape)
    d_sigma = z * fu * fv
    d_u = sigma * z2 * eu * fv
    d_v = -sigma * z2 * fu * ev
    return d_mu, d_sigma, d_u, d_v


def evaluate(params: HtqfParams, tau):
    """Quantile(s) of the HTQF at probability level(s) ``tau``."""
    z = _z(tau)
    q = quantiles(params.mu, params.sigma, params.u, params.v, z, params.A)
    return float(q) if np.ndim(q) == 0 else q


def grad_params(params: HtqfParams, tau) -> np.ndarray:
    """Gradient (dQ/dmu, dQ/dsigma, dQ/du, dQ/dv) at ``tau``.

    For array ``tau`` the result has shape ``tau.shape + (4,)``.
    """
    z = _z(tau)
    grads = quantile_grads(params.sigma, params.u, params.v, z, params.A)
    return np.stack(np.broadcast_arrays(*grads), axis=-1)


def shape_derivative(x, u, v, A=DEFAULT_A):
    """g'(x) for g(x) = x (e^{ux}/A + 1)(e^{-vx}/A + 1)."""
    eu = np.exp(u * x) / A
    ev = np.exp(-v * x) / A
    return (eu + 1.0) * (ev + 1.0) + x * u * eu * (ev + 1.0) - x * v * (eu + 1.0) * ev


def _tau_grid(grid_size: int) -> np.ndarray:
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    return np.linspace(1e-4, 1.0 - 1e-4, grid_size)


def monotone_mask(mu, sigma, u, v, grid_size: int = 1001, A=DEFAULT_A) -> np.ndarray:
    """Per-parameter-set strict monotonicity on the equispaced check grid.

    ``mu, sigma, u, v`` are 1-d arrays of equal length; returns a boolean array.
    """
    z = std_normal_quantile(_tau_grid(grid_size))
    cols = [np.asarray(a, dtype=float)[:, None] for a in (mu, sigma, u, v)]
    q = quantiles(*cols, z[None, :], A)
    return np.all(np.diff(q, axis=1) > 0.0, axis=1)


def check_monotone(params: HtqfParams, grid_size: int = 1001) -> bool:
    """True iff Q is strictly increasing on an equispaced grid in [1e-4, 1 - 1e-4]."""
    z = std_normal_quantile(_tau_grid(grid_size))
    q = quantiles(params.mu, params.sigma, params.u, params.v, z, params.A)
    return bool(np.all(np.diff(q) > 0.0))
