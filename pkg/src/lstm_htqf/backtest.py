"""
Out-of-sample evaluation of quantile forecasts.

Hit sequence ``I_t = 1{r_t < q_t}`` and three likelihood-ratio statistics:

* Kupiec unconditional coverage (1 df): is the violation rate tau?
* Christoffersen independence (1 df): is ``I_t`` independent of ``I_{t-1}``?
* conditional coverage (2 df): the sum of the two.

Verdicts compare against the fixed 95% chi-square critical values 3.8415
(1 df) and 5.9915 (2 df). Zero counts follow the convention 0 * log 0 = 0.
Transition counts use the n - 1 pairs (I_{t-1}, I_t), so
``n01 + n11 = n1 - I_1`` and ``n00 + n10 = n - n1 - (1 - I_1)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .numerics import DomainError
from .train import DEFAULT_TAUS, VAR_TAUS, pinball

__all__ = [
    "CHI2_1DF_95",
    "CHI2_2DF_95",
    "BacktestReport",
    "hit_sequence",
    "transition_counts",
    "kupiec_uc",
    "christoffersen_ind",
    "conditional_coverage",
    "backtest",
    "pinball_table",
    "pinball_summary",
    "REPORT_COLUMNS",
    "report_row",
    "write_report_csv",
    "format_report_text",
]

CHI2_1DF_95 = 3.8415
CHI2_2DF_95 = 5.9915


def _xlogp(k: int, p: float) -> float:
    if k == 0:
        return 0.0
    if p <= 0.0:
        return -math.inf
    return k * math.log(p)


def _lr(log_null: float, log_alt: float) -> float:
    if log_null == -math.inf:
        return math.inf
    # the alternative nests the null, so only rounding can push this below 0
    return max(0.0, -2.0 * (log_null - log_alt))


def hit_sequence(returns, quantile_forecasts) -> np.ndarray:
    """1 where the realized value falls strictly below the forecast quantile."""
    r = np.asarray(returns, dtype=float)
    q = np.asarray(quantile_forecasts, dtype=float)
    if r.shape != q.shape:
        raise DataError(f"length mismatch: {r.shape} returns vs {q.shape} forecasts")
    return (r < q).astype(np.int64)


def transition_counts(hits) -> tuple[int, int, int, int]:
    """(n00, n01, n10, n11) over consecutive pairs; n_ij counts i followed by j."""
    h = np.asarray(hits, dtype=np.int64)
    prev, cur = h[:-1], h[1:]
    n11 = int(np.sum(prev & cur))
    n10 = int(np.sum(prev & (1 - cur)))
    n01 = int(np.sum((1 - prev) & cur))
    n00 = int(h.size - 1 - n11 - n10 - n01)
    return n00, n01, n10, n11


def _check_hits(hits, min_len: int) -> np.ndarray:
    h = np.asarray(hits)
    if h.ndim != 1 or h.size < min_len:
        raise DataError(f"need a hit sequence of length >= {min_len}")
    if not np.all((h == 0) | (h == 1)):
        raise DataError("hit sequence must be binary")
    return h.astype(np.int64)


def kupiec_uc(hits, tau: float) -> float:
    h = _check_hits(hits, 1)
    if not 0.0 < tau < 1.0:
        raise DomainError("tau must lie strictly inside (0, 1)")
    n = h.size
    n1 = int(h.sum())
    n0 = n - n1
    pi = n1 / n
    log_null = _xlogp(n0, 1.0 - tau) + _xlogp(n1, tau)
    log_alt = _xlogp(n0, 1.0 - pi) + _xlogp(n1, pi)
    return _lr(log_null, log_alt)


def christoffersen_ind(hits) -> float:
    h = _check_hits(hits, 2)
    n00, n01, n10, n11 = transition_counts(h)
    total = n00 + n01 + n10 + n11
    pi2 = (n01 + n11) / total
    pi01 = n01 / (n00 + n01) if n00 + n01 else 0.0
    pi11 = n11 / (n10 + n11) if n10 + n11 else 0.0
    log_null = _xlogp(n00 + n10, 1.0 - pi2) + _xlogp(n01 + n11, pi2)
    log_alt = (_xlogp(n00, 1.0 - pi01) + _xlogp(n01, pi01)
               + _xlogp(n10, 1.0 - pi11) + _xlogp(n11, pi11))
    return _lr(log_null, log_alt)


def conditional_coverage(hits, tau: float) -> float:
    return kupiec_uc(hits, tau) + christoffersen_ind(hits)


@dataclass(frozen=True)
class BacktestReport:
    tau: float
    n: int
    n1: int
    n00: int
    n01: int
    n10: int
    n11: int
    lr_uc: float
    lr_ind: float
    lr_cc: float

    @property
    def ideal_violations(self) -> float:
        return self.tau * self.n

    @property
    def reject_uc(self) -> bool:
        return self.lr_uc > CHI2_1DF_95

    @property
    def reject_ind(self) -> bool:
        return self.lr_ind > CHI2_1DF_95

    @property
    def reject_cc(self) -> bool:
        return self.lr_cc > CHI2_2DF_95


def backtest(returns, quantile_forecasts, tau: float) -> BacktestReport:
    """Coverage statistics for one probability level."""
    h = hit_sequence(returns, quantile_forecasts)
    if h.size < 2:
        raise DataError("need at least two observations to backtest")
    uc = kupiec_uc(h, tau)
    ind = christoffersen_ind(h)
    return BacktestReport(float(tau), int(h.size), int(h.sum()), *transition_counts(h),
                          lr_uc=uc, lr_ind=ind, lr_cc=uc + ind)


def pinball_table(returns, quantiles, taus=DEFAULT_TAUS, subset=None) -> float:
    """Mean pinball loss over the levels in ``subset`` (all of ``taus`` if omitted).

    ``quantiles`` has one column per level of ``taus``.
    """
    tau = np.asarray(getattr(taus, "levels", taus), dtype=float)
    q = np.asarray(quantiles, dtype=float)
    r = np.asarray(returns, dtype=float)
    if q.ndim != 2 or q.shape != (r.size, tau.size):
        raise DataError(f"quantiles shape {q.shape} does not match ({r.size}, {tau.size})")
    if subset is None:
        cols = np.arange(tau.size)
    else:
        sub = np.asarray(getattr(subset, "levels", subset), dtype=float)
        cols = []
        for s in sub:
            hit = np.nonzero(np.isclose(tau, s, rtol=0.0, atol=1e-12))[0]
            if hit.size == 0:
                raise DataError(f"subset level {s} not among the forecast levels")
            cols.append(int(hit[0]))
        cols = np.array(cols)
    return float(np.mean(pinball(tau[cols][None, :], r[:, None], q[:, cols])))


def pinball_summary(returns, quantiles, taus=DEFAULT_TAUS) -> dict[str, float]:
    """Losses over the full grid and over the VaR levels present in it."""
    tau = np.asarray(getattr(taus, "levels", taus), dtype=float)
    out = {"full": pinball_table(returns, quantiles, tau)}
    var_levels = [t for t in VAR_TAUS.levels if np.any(np.isclose(tau, t, atol=1e-12))]
    if var_levels:
        out["var"] = pinball_table(returns, quantiles, tau, var_levels)
    return out


REPORT_COLUMNS = ("tau", "n", "violations", "ideal_violations", "lr_uc", "lr_ind", "lr_cc",
                  "reject_uc", "reject_ind", "reject_cc")


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.9g}"


def report_row(rep: BacktestReport) -> list[str]:
    return [_fmt(rep.tau), str(rep.n), str(rep.n1), _fmt(rep.ideal_violations),
            _fmt(rep.lr_uc), _fmt(rep.lr_ind), _fmt(rep.lr_cc),
            str(int(rep.reject_uc)), str(int(rep.reject_ind)), str(int(rep.reject_cc))]


def write_report_csv(path, reports, model: str | None = None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow((["model"] if model is not None else []) + list(REPORT_COLUMNS))
        for rep in reports:
            w.writerow(([model] if model is not None else []) + report_row(rep))


def _cell(stat: float, reject: bool) -> str:
    s = "Inf" if math.isinf(stat) else f"{stat:.4f}"
    return s + ("*" if reject else "")


def format_report_text(reports_by_model: dict[str, list[BacktestReport]]) -> str:
    """Plain-text tables, one per test, models as rows and levels as columns.

    Starred entries exceed the 95% threshold; the coverage table annotates
    each cell with (violations/ideal violations).
    """
    models = list(reports_by_model)
    taus = [r.tau for r in next(iter(reports_by_model.values()))] if models else []
    width = max([len(m) for m in models] + [6]) + 2
    blocks = []
    specs = [
        ("Unconditional coverage (1 df, threshold %.4f)" % CHI2_1DF_95, "lr_uc", "reject_uc"),
        ("Independence (1 df, threshold %.4f)" % CHI2_1DF_95, "lr_ind", "reject_ind"),
        ("Conditional coverage (2 df, threshold %.4f)" % CHI2_2DF_95, "lr_cc", "reject_cc"),
    ]
    for title, stat, rej in specs:
        lines = [title]
        lines.append("Method".ljust(width) + "".join(f"tau={t:<16g}" for t in taus))
        for m in models:
            cells = []
            for rep in reports_by_model[m]:
                c = _cell(getattr(rep, stat), getattr(rep, rej))
                if stat == "lr_uc":
                    c += f" ({rep.n1}/{round(rep.ideal_violations)})"
                cells.append(f"{c:<20}")
            lines.append(m.ljust(width) + "".join(cells).rstrip())
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
