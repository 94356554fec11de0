"""
Single-layer LSTM with a tanh output head and exact reverse-mode gradients.

Cell recurrences (gates f, i, o use the logistic function, g and the cell
output use tanh)::

    f_j = sig(W_f x_j + U_f h_{j-1} + b_f)
    i_j = sig(W_i x_j + U_i h_{j-1} + b_i)
    o_j = sig(W_o x_j + U_o h_{j-1} + b_o)
    g_j = tanh(W_g x_j + U_g h_{j-1} + b_g)
    c_j = f_j * c_{j-1} + i_j * g_j
    h_j = o_j * tanh(c_j)

Inputs are divided elementwise by ``input_scale`` before entering the cell
(ones by default). Since W absorbs any diagonal rescaling this leaves the
function class unchanged and only conditions the optimization.

The head computes ``raw = tanh(W_out h_L + b_out)`` and maps it affinely into
the valid HTQF region (``htqf`` head) or scales it into quantiles (``tqr``
head). Gate blocks are stored stacked in the order f, i, o, g.

Everything operates on batches ``X`` of shape ``(B, L, D)``; a single window
is a batch of one.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .htqf import DEFAULT_A, HtqfParams
from .numerics import Prng

__all__ = [
    "HeadBounds",
    "LstmModel",
    "ForwardTrace",
    "PARAM_NAMES",
    "init",
    "forward",
    "backward",
    "map_head",
    "head_affine",
    "save_model",
    "load_model",
]

PARAM_NAMES = ("W", "U", "b", "W_out", "b_out")
GATES = ("f", "i", "o", "g")
HEAD_KINDS = ("htqf", "tqr")
MODEL_FORMAT = "lstm-htqf-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class HeadBounds:
    """Affine map from tanh outputs into parameter space.

    ``identity=True`` passes tanh outputs through unchanged (no positivity
    guarantee for sigma, u, v).
    """

    c_mu: float = 2.0
    sigma_min: float = 1e-3
    sigma_max: float = 3.0
    u_max: float = 2.0
    v_max: float = 2.0
    c_q: float = 5.0
    identity: bool = False

    def __post_init__(self):
        if self.identity:
            return
        if not 0.0 < self.sigma_min < self.sigma_max:
            raise ValueError("need 0 < sigma_min < sigma_max")
        if self.u_max < 0.0 or self.v_max < 0.0 or self.c_mu <= 0.0 or self.c_q <= 0.0:
            raise ValueError("head scales must be positive")


def head_affine(head_kind: str, m: int, bounds: HeadBounds) -> tuple[np.ndarray, np.ndarray]:
    """(offset, scale) vectors with ``mapped = offset + scale * raw``."""
    if bounds.identity:
        return np.zeros(m), np.ones(m)
    if head_kind == "htqf":
        lo = np.array([-bounds.c_mu, bounds.sigma_min, 0.0, 0.0])
        hi = np.array([bounds.c_mu, bounds.sigma_max, bounds.u_max, bounds.v_max])
        return 0.5 * (lo + hi), 0.5 * (hi - lo)
    return np.zeros(m), np.full(m, bounds.c_q)


@dataclass
class LstmModel:
    W: np.ndarray       # (4H, D)
    U: np.ndarray       # (4H, H)
    b: np.ndarray       # (4H,)
    W_out: np.ndarray   # (m, H)
    b_out: np.ndarray   # (m,)
    head_kind: str = "htqf"
    bounds: HeadBounds = field(default_factory=HeadBounds)
    A: float = DEFAULT_A
    input_scale: np.ndarray | None = None  # (D,)

    def __post_init__(self):
        if self.input_scale is None:
            self.input_scale = np.ones(self.W.shape[1])
        self.input_scale = np.asarray(self.input_scale, dtype=float)
        if self.input_scale.shape != (self.W.shape[1],) or not np.all(self.input_scale > 0):
            raise ValueError("input_scale must be a positive vector of length D")
        if self.head_kind not in HEAD_KINDS:
            raise ValueError(f"head_kind must be one of {HEAD_KINDS}")
        H = self.U.shape[1]
        ok = (self.W.shape[0] == 4 * H and self.U.shape == (4 * H, H)
              and self.b.shape == (4 * H,) and self.W_out.shape[1] == H
              and self.b_out.shape == (self.W_out.shape[0],))
        if not ok:
            raise ValueError("inconsistent LSTM weight dimensions")
        if self.head_kind == "htqf" and self.W_out.shape[0] != 4:
            raise ValueError("htqf head needs exactly 4 outputs")

    @property
    def H(self) -> int:
        return self.U.shape[1]

    @property
    def D(self) -> int:
        return self.W.shape[1]

    @property
    def m(self) -> int:
        return self.W_out.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(W_k, U_k, b_k) views for gate ``name`` in f, i, o, g."""
        k = GATES.index(name)
        s = slice(k * self.H, (k + 1) * self.H)
        return self.W[s], self.U[s], self.b[s]

    def copy(self) -> "LstmModel":
        return LstmModel(*(getattr(self, n).copy() for n in PARAM_NAMES),
                         head_kind=self.head_kind, bounds=self.bounds, A=self.A,
                         input_scale=self.input_scale.copy())

    def n_params(self) -> int:
        return sum(p.size for p in self.params().values())


@dataclass
class ForwardTrace:
    X: np.ndarray       # (B, L, D) after input scaling
    f: np.ndarray       # (L, B, H)
    i: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray       # (L+1, B, H), c[0] = 0
    h: np.ndarray       # (L+1, B, H), h[0] = 0
    tanh_c: np.ndarray  # (L, B, H)
    raw: np.ndarray     # (B, m) tanh head output
    output: np.ndarray  # (B, m) mapped head output
    single: bool = False


def init(H: int, head_kind: str = "htqf", m: int | None = None, rng: Prng | None = None,
         D: int = 4, bounds: HeadBounds | None = None, A: float = DEFAULT_A) -> LstmModel:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias 1, other biases 0."""
    if head_kind not in HEAD_KINDS:
        raise ValueError(f"head_kind must be one of {HEAD_KINDS}")
    if m is None:
        m = 4 if head_kind == "htqf" else 21
    rng = rng if rng is not None else Prng(0)
    s = 1.0 / np.sqrt(H)
    W = rng.uniform(-s, s, 4 * H * D).reshape(4 * H, D)
    U = rng.uniform(-s, s, 4 * H * H).reshape(4 * H, H)
    b = np.zeros(4 * H)
    b[:H] = 1.0
    W_out = rng.uniform(-s, s, m * H).reshape(m, H)
    b_out = np.zeros(m)
    return LstmModel(W, U, b, W_out, b_out, head_kind=head_kind,
                     bounds=bounds if bounds is not None else HeadBounds(), A=A)


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def _as_batch(window) -> tuple[np.ndarray, bool]:
    X = getattr(window, "matrix", getattr(window, "X", window))
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        return X[None], True
    if X.ndim != 3:
        raise ValueError("window must be (L, D) or (B, L, D)")
    return X, False


def map_head(raw, head_kind: str, bounds: HeadBounds, A: float = DEFAULT_A):
    """Map tanh outputs into HTQF parameters or quantiles.

    A 1-d ``raw`` with the htqf head yields an :class:`HtqfParams`; batched
    input (B, m) yields an array of the same shape.
    """
    raw = np.asarray(raw, dtype=float)
    offset, scale = head_affine(head_kind, raw.shape[-1], bounds)
    mapped = offset + scale * raw
    if raw.ndim == 1 and head_kind == "htqf":
        if bounds.identity:
            return HtqfParams.unchecked(*mapped, A=A)
        return HtqfParams(*mapped, A=A)
    return mapped


def forward(model: LstmModel, window) -> tuple[np.ndarray, ForwardTrace]:
    """Run the cell over the window(s) from zero state; return mapped head output."""
    X, single = _as_batch(window)
    B, L, D = X.shape
    if D != model.D:
        raise ValueError(f"window has {D} feature columns, model expects {model.D}")
    X = X / model.input_scale
    H = model.H
    f = np.empty((L, B, H))
    i = np.empty((L, B, H))
    o = np.empty((L, B, H))
    g = np.empty((L, B, H))
    tc = np.empty((L, B, H))
    c = np.zeros((L + 1, B, H))
    h = np.zeros((L + 1, B, H))
    # input projections for all steps at once
    xw = X @ model.W.T + model.b  # (B, L, 4H)
    UT = model.U.T
    for j in range(L):
        a = xw[:, j] + h[j] @ UT
        f[j] = _sigmoid(a[:, :H])
        i[j] = _sigmoid(a[:, H:2 * H])
        o[j] = _sigmoid(a[:, 2 * H:3 * H])
        g[j] = np.tanh(a[:, 3 * H:])
        c[j + 1] = f[j] * c[j] + i[j] * g[j]
        tc[j] = np.tanh(c[j + 1])
        h[j + 1] = o[j] * tc[j]
    raw = np.tanh(h[L] @ model.W_out.T + model.b_out)
    offset, scale = head_affine(model.head_kind, model.m, model.bounds)
    out = offset + scale * raw
    trace = ForwardTrace(X, f, i, o, g, c, h, tc, raw, out, single)
    return (out[0] if single else out), trace


def backward(model: LstmModel, trace: ForwardTrace, d_output) -> dict[str, np.ndarray]:
    """Gradient of a loss w.r.t. every weight, given dLoss/d(mapped output).

    ``d_output`` has the shape of the forward output; per-window
    contributions are summed over the batch.
    """
    d_out = np.asarray(d_output, dtype=float)
    if trace.single:
        d_out = d_out[None]
    B = trace.X.shape[0]
    if d_out.shape != (B, model.m) or trace.h.shape[2] != model.H:
        raise ValueError("trace does not match model / d_output shape")
    H = model.H
    L = trace.f.shape[0]
    _, scale = head_affine(model.head_kind, model.m, model.bounds)
    dz = d_out * scale * (1.0 - trace.raw ** 2)
    grads = {
        "W_out": dz.T @ trace.h[L],
        "b_out": dz.sum(axis=0),
    }
    dW = np.zeros_like(model.W)
    dU = np.zeros_like(model.U)
    db = np.zeros_like(model.b)
    dh = dz @ model.W_out
    dc = np.zeros((B, H))
    da = np.empty((B, 4 * H))
    for j in range(L - 1, -1, -1):
        f, i, o, g, tc = trace.f[j], trace.i[j], trace.o[j], trace.g[j], trace.tanh_c[j]
        dc = dc + dh * o * (1.0 - tc * tc)
        da[:, :H] = dc * trace.c[j] * f * (1.0 - f)
        da[:, H:2 * H] = dc * g * i * (1.0 - i)
        da[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        da[:, 3 * H:] = dc * i * (1.0 - g * g)
        dW += da.T @ trace.X[:, j]
        dU += da.T @ trace.h[j]
        db += da.sum(axis=0)
        dh = da @ model.U
        dc = dc * f
    grads.update(W=dW, U=dU, b=db)
    return grads


def model_to_dict(model: LstmModel, metadata: dict | None = None) -> dict:
    """Versioned plain-data form; weights listed in PARAM_NAMES order, row-major."""
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "hidden_size": model.H,
        "input_size": model.D,
        "output_size": model.m,
        "head_kind": model.head_kind,
        "head_bounds": asdict(model.bounds),
        "A": model.A,
        "input_scale": model.input_scale.tolist(),
        "gate_order": list(GATES),
        "weights": {name: getattr(model, name).ravel().tolist() for name in PARAM_NAMES},
        "metadata": metadata or {},
    }


def model_from_dict(d: dict) -> tuple[LstmModel, dict]:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError("not an lstm-htqf model file")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model file version {d.get('version')}")
    H, D, m = d["hidden_size"], d["input_size"], d["output_size"]
    shapes = {"W": (4 * H, D), "U": (4 * H, H), "b": (4 * H,), "W_out": (m, H), "b_out": (m,)}
    arrays = {k: np.array(d["weights"][k], dtype=float).reshape(shapes[k]) for k in PARAM_NAMES}
    model = LstmModel(**arrays, head_kind=d["head_kind"],
                      bounds=HeadBounds(**d["head_bounds"]), A=float(d["A"]),
                      input_scale=np.array(d.get("input_scale", np.ones(D)), dtype=float))
    return model, d.get("metadata", {})


def save_model(path, model: LstmModel, metadata: dict | None = None):
    # json emits shortest round-trip float reprs, so reloading is bit-exact
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, metadata), fh, indent=1)
        fh.write("\n")


def load_model(path) -> tuple[LstmModel, dict]:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
