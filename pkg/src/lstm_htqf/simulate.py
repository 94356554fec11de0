"""
Synthetic return series.

``generate_htqf_benchmark`` produces a GARCH-t-like series whose degrees of
freedom move over time::

    pi_t    = sqrt(0.136 + 0.257 r_{t-1}^2 + 0.717 pi_{t-1}^2)
    nu_t    = max(8 - 2 pi_t, 3)
    sigma_t = sqrt(0.293 + 0.161 r_{t-1}^2 + 0.575 sigma_{t-1}^2)
    r_t     = sigma_t z_t,   z_t ~ t(nu_t)

from r_0 = 0, sigma_0 = 1, pi_0 = 1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .garch import GarchParams
from .numerics import Prng, std_normal_quantile, student_t_quantile

__all__ = ["SimOutput", "generate_htqf_benchmark", "generate_garch", "write_sim_csv"]

DEFAULT_N = 10000


@dataclass
class SimOutput:
    returns: np.ndarray
    true_sigma: np.ndarray
    true_nu: np.ndarray
    true_pi: np.ndarray

    def __len__(self):
        return len(self.returns)


def generate_htqf_benchmark(n: int = DEFAULT_N, seed: int = 0, pi0: float = 1.0,
                            innovations=None) -> SimOutput:
    """Time-varying-tail benchmark series of length ``n``.

    ``innovations`` overrides the t draws with a fixed z sequence (e.g. zeros)
    for deterministic checks of the recursions.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = Prng(seed)
    r = np.empty(n)
    sig = np.empty(n)
    nus = np.empty(n)
    pis = np.empty(n)
    r_prev, s_prev, p_prev = 0.0, 1.0, float(pi0)
    for t in range(n):
        r2 = r_prev * r_prev
        p = math.sqrt(0.136 + 0.257 * r2 + 0.717 * p_prev * p_prev)
        nu = max(8.0 - 2.0 * p, 3.0)
        s = math.sqrt(0.293 + 0.161 * r2 + 0.575 * s_prev * s_prev)
        if innovations is None:
            z = student_t_quantile(rng.random_open(), nu)
        else:
            z = float(innovations[t])
        r_prev = s * z
        r[t], sig[t], nus[t], pis[t] = r_prev, s, nu, p
        s_prev, p_prev = s, p
    return SimOutput(r, sig, nus, pis)


def generate_garch(n: int, params: GarchParams, seed: int = 0):
    """GARCH(1,1) path with unit-variance innovations; returns (returns, sigma)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = Prng(seed)
    u = rng.random_open(n)
    if params.kind == "normal":
        z = std_normal_quantile(u)
    else:
        z = student_t_quantile(u, params.nu) * math.sqrt((params.nu - 2.0) / params.nu)
    r = np.empty(n)
    sig = np.empty(n)
    s2 = params.unconditional_variance
    for t in range(n):
        if t > 0:
            e = r[t - 1] - params.mu
            s2 = params.omega + params.alpha * e * e + params.beta * s2
        sig[t] = math.sqrt(s2)
        r[t] = params.mu + sig[t] * z[t]
    return r, sig


def write_sim_csv(path, sim: SimOutput):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "r", "sigma_true", "nu_true", "pi_true"])
        for t in range(len(sim)):
            w.writerow([t + 1, f"{sim.returns[t]:.9g}", f"{sim.true_sigma[t]:.9g}",
                        f"{sim.true_nu[t]:.9g}", f"{sim.true_pi[t]:.9g}"])
