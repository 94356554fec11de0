"""
Pinball-loss training of the LSTM heads.

The objective averages the pinball loss over all windows and all probability
levels. For the ``htqf`` head every quantile comes from the four predicted
HTQF parameters; for the ``tqr`` head the network emits one quantile per
level directly and predictions are sorted afterwards.
"""

from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import lstm
from .dataio import SeriesSplit
from .errors import DataError, NumericFailure
from .features import WindowBatch, build_window_batch
from .htqf import DEFAULT_A, quantile_grads, quantiles
from .numerics import DomainError, Prng, std_normal_quantile

__all__ = [
    "DEFAULT_TAUS",
    "VAR_TAUS",
    "TauGrid",
    "TrainConfig",
    "FitResult",
    "Prediction",
    "GridSearchResult",
    "pinball",
    "pinball_subgrad_q",
    "objective",
    "loss_and_grads",
    "fit",
    "predict",
    "grid_search",
    "write_history_csv",
    "feature_scale",
]


@dataclass(frozen=True)
class TauGrid:
    levels: tuple[float, ...]

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        if lv.ndim != 1 or lv.size == 0:
            raise ValueError("tau grid must be a nonempty sequence")
        if not np.all((lv > 0.0) & (lv < 1.0)):
            raise DomainError("tau levels must lie strictly inside (0, 1)")
        if not np.all(np.diff(lv) > 0.0):
            raise ValueError("tau levels must be strictly increasing")
        object.__setattr__(self, "levels", tuple(float(x) for x in lv))

    @property
    def K(self) -> int:
        return len(self.levels)

    def array(self) -> np.ndarray:
        return np.array(self.levels)

    @classmethod
    def parse(cls, text: str) -> "TauGrid":
        return cls(tuple(float(x) for x in text.split(",") if x.strip()))


DEFAULT_TAUS = TauGrid(tuple(np.round(
    np.concatenate([[0.01], np.arange(0.05, 0.951, 0.05), [0.99]]), 2)))
VAR_TAUS = TauGrid((0.01, 0.05, 0.1))


@dataclass(frozen=True)
class TrainConfig:
    L: int = 40
    H: int = 8
    learning_rate: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    clip_norm: float = 5.0
    taus: TauGrid = DEFAULT_TAUS
    bounds: lstm.HeadBounds = field(default_factory=lstm.HeadBounds)
    A: float = DEFAULT_A
    scale_features: bool = True

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("L must be >= 2")
        if self.H < 1:
            raise ValueError("H must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size must be >= 1 and max_epochs >= 0")


def pinball(tau, y, q):
    """Pinball loss: tau*|y-q| if y > q, else (1-tau)*|y-q|."""
    tau_a = np.asarray(tau, dtype=float)
    if not np.all((tau_a > 0.0) & (tau_a < 1.0)):
        raise DomainError("tau must lie strictly inside (0, 1)")
    diff = np.asarray(y, dtype=float) - np.asarray(q, dtype=float)
    loss = np.where(diff > 0.0, tau_a * diff, (tau_a - 1.0) * diff)
    return float(loss) if loss.ndim == 0 else loss


def pinball_subgrad_q(tau, y, q):
    """d pinball / d q; the tie y == q takes the (1 - tau) branch."""
    tau_a = np.asarray(tau, dtype=float)
    g = np.where(np.asarray(y) > np.asarray(q), -tau_a, 1.0 - tau_a)
    return float(g) if g.ndim == 0 else g


def _head_quantiles(model: lstm.LstmModel, out: np.ndarray, z: np.ndarray) -> np.ndarray:
    if model.head_kind == "htqf":
        return quantiles(out[:, 0:1], out[:, 1:2], out[:, 2:3], out[:, 3:4], z[None, :], model.A)
    return out


def _taus(taus) -> np.ndarray:
    if isinstance(taus, TauGrid):
        return taus.array()
    return TauGrid(tuple(np.atleast_1d(taus))).array()


def objective(model: lstm.LstmModel, windows: WindowBatch, taus=DEFAULT_TAUS) -> float:
    """Mean pinball loss over windows and levels."""
    tau = _taus(taus)
    if len(windows) == 0:
        raise ValueError("no windows to evaluate")
    if model.head_kind == "tqr" and model.m != tau.size:
        raise ValueError(f"tqr head has {model.m} outputs but {tau.size} levels given")
    out, _ = lstm.forward(model, windows.X)
    q = _head_quantiles(model, out, std_normal_quantile(tau))
    return float(np.mean(pinball(tau[None, :], windows.y[:, None], q)))


def loss_and_grads(model: lstm.LstmModel, batch: WindowBatch, taus=DEFAULT_TAUS):
    """Mean pinball loss on ``batch`` and its gradient w.r.t. every weight."""
    tau = _taus(taus)
    out, trace = lstm.forward(model, batch.X)
    z = std_normal_quantile(tau)
    q = _head_quantiles(model, out, z)
    y = batch.y[:, None]
    loss = float(np.mean(pinball(tau[None, :], y, q)))
    dq = pinball_subgrad_q(tau[None, :], y, q) / q.size
    if model.head_kind == "htqf":
        partials = quantile_grads(out[:, 1:2], out[:, 2:3], out[:, 3:4], z[None, :], model.A)
        d_out = np.stack([(dq * p).sum(axis=1) for p in partials], axis=1)
    else:
        d_out = dq
    return loss, lstm.backward(model, trace, d_out)


class _Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def _clip(grads: dict, max_norm: float) -> dict:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        s = max_norm / total
        return {k: g * s for k, g in grads.items()}
    return grads


def feature_scale(windows: WindowBatch) -> np.ndarray:
    """Per-column standard deviation of the training windows (1 where degenerate)."""
    sd = windows.X.reshape(-1, windows.X.shape[-1]).std(axis=0)
    return np.where(sd > 0.0, sd, 1.0)


@dataclass
class FitResult:
    model: lstm.LstmModel
    history: list[tuple[int, float, float]]  # (epoch, train_loss, validation_loss)
    best_epoch: int
    stopped_early: bool
    config: TrainConfig

    @property
    def best_validation_loss(self) -> float:
        return min(v for _, _, v in self.history)


def _windows_for(split: SeriesSplit, L: int):
    off_tr, off_va, _ = split.offsets
    return (build_window_batch(split.train.values, L, off_tr),
            build_window_batch(split.validation.values, L, off_va))


def fit(split: SeriesSplit, config: TrainConfig, head_kind: str = "htqf",
        validation_loss=None, progress=None) -> FitResult:
    """Minibatch Adam with early stopping on the validation objective.

    Parameters
    ----------
    split : SeriesSplit
    config : TrainConfig
    head_kind : {"htqf", "tqr"}
    validation_loss : callable, optional
        ``f(model, epoch) -> float`` replacing the validation objective
        (used to script the stopping rule in tests).
    progress : callable, optional
        Called as ``progress(epoch, train_loss, validation_loss)``.

    Returns
    -------
    FitResult
        Holds the weights of the best validation epoch. Epoch 0 in the history
        is the untrained model.

    Raises
    ------
    NumericFailure
        If a loss becomes non-finite.
    """
    train_w, val_w = _windows_for(split, config.L)
    if len(val_w) == 0:
        raise DataError("validation segment too short for the window length")
    taus = config.taus
    m = 4 if head_kind == "htqf" else taus.K
    rng = Prng(config.seed)
    model = lstm.init(config.H, head_kind, m, rng, bounds=config.bounds, A=config.A)
    if config.scale_features:
        model.input_scale = feature_scale(train_w)

    def evaluate(epoch):
        tr = objective(model, train_w, taus)
        va = (validation_loss(model, epoch) if validation_loss is not None
              else objective(model, val_w, taus))
        if not (math.isfinite(tr) and math.isfinite(va)):
            raise NumericFailure(f"non-finite loss at epoch {epoch} (train={tr}, val={va})")
        if progress is not None:
            progress(epoch, tr, va)
        return tr, va

    tr, va = evaluate(0)
    history = [(0, tr, va)]
    best_val, best_epoch, best_model = va, 0, model.copy()
    params = model.params()
    opt = _Adam(params, config.learning_rate)
    n = len(train_w)
    bad = 0
    stopped = False
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = train_w[order[start:start + config.batch_size]]
            loss, grads = loss_and_grads(model, batch, taus)
            if not math.isfinite(loss):
                raise NumericFailure(f"non-finite batch loss in epoch {epoch}")
            opt.step(params, _clip(grads, config.clip_norm))
        tr, va = evaluate(epoch)
        history.append((epoch, tr, va))
        if va < best_val:
            best_val, best_epoch, best_model = va, epoch, model.copy()
            bad = 0
        else:
            bad += 1
            if bad >= config.patience:
                stopped = True
                break
    return FitResult(best_model, history, best_epoch, stopped, config)


@dataclass
class Prediction:
    quantiles: np.ndarray          # (N, K)
    params: np.ndarray | None      # (N, 4) mu, sigma, u, v for the htqf head
    t_index: np.ndarray
    taus: np.ndarray


def predict(model: lstm.LstmModel, windows: WindowBatch, taus=DEFAULT_TAUS) -> Prediction:
    """Per-window quantiles; TQR outputs are sorted ascending to remove crossings."""
    tau = _taus(taus)
    if model.head_kind == "tqr" and model.m != tau.size:
        raise ValueError(f"tqr head has {model.m} outputs but {tau.size} levels given")
    out, _ = lstm.forward(model, windows.X)
    if model.head_kind == "htqf":
        q = _head_quantiles(model, out, std_normal_quantile(tau))
        return Prediction(q, out.copy(), windows.t_index.copy(), tau)
    return Prediction(np.sort(out, axis=1), None, windows.t_index.copy(), tau)


@dataclass
class GridSearchResult:
    best: FitResult
    table: list[dict]  # one entry per (L, H): L, H, validation_loss, status


def _fit_one(args):
    split, config, head_kind = args
    try:
        return fit(split, config, head_kind), None
    except (NumericFailure, DataError) as exc:
        return None, str(exc)


def grid_search(split: SeriesSplit, L_set=(40, 60, 80, 100), H_set=(8, 16),
                head_kind: str = "htqf", seed: int = 0, base: TrainConfig | None = None,
                jobs: int = 1) -> GridSearchResult:
    """Fit one model per (L, H) and keep the lowest validation objective.

    Ties go to the smaller L, then the smaller H. Configurations that fail
    numerically are recorded with ``status`` holding the error message.
    """
    base = base if base is not None else TrainConfig()
    combos = sorted(itertools.product(sorted(set(L_set)), sorted(set(H_set))))
    if not combos:
        raise ValueError("empty hyperparameter grid")
    tasks = [(split, replace(base, L=L, H=H, seed=seed), head_kind) for L, H in combos]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fit_one, tasks))
    else:
        results = [_fit_one(t) for t in tasks]
    table = []
    best = None
    for (L, H), (res, err) in zip(combos, results):
        if res is None:
            table.append({"L": L, "H": H, "validation_loss": math.nan, "status": err})
            continue
        v = res.best_validation_loss
        table.append({"L": L, "H": H, "validation_loss": v, "status": "ok"})
        if best is None or v < best.best_validation_loss:
            best = res
    if best is None:
        raise NumericFailure("every hyperparameter configuration failed")
    return GridSearchResult(best, table)


def write_history_csv(path, history):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "validation_loss"])
        for epoch, tr, va in history:
            w.writerow([epoch, f"{tr:.9g}", f"{va:.9g}"])
