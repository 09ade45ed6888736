"""Hand-rolled recurrent network math: GRU/LSTM cells, MLP head, Adam.

Everything operates on plain float64 numpy arrays held in flat
name -> tensor dicts, so gradients, optimizer moments, and checkpoints
all share one layout.  Batched inputs are row-major: x is (B, D),
hidden states are (B, H).

Weight shapes: input weights W_* are (in_dim, H), recurrent weights U_*
are (H, H), biases are (H,).  The gate equations follow the standard
formulations; for the GRU the candidate uses the reset gate applied to
the recurrent term, n = tanh(x W_n + r * (h U_n) + b_n).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRU = "gru"
LSTM = "lstm"

_GRU_GATES = ("z", "r", "n")
_LSTM_GATES = ("i", "f", "g", "o")

PROB_FLOOR = 1e-12


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, target: int) -> float:
    """Negative log-likelihood of the target class, probability floored."""
    return float(-np.log(max(float(probs[target]), PROB_FLOOR)))


@dataclass
class NetSpec:
    """Dimensions of the forecaster network."""

    cell: str
    input_dim: int
    hidden_size: int
    num_layers: int
    n_classes: int

    def __post_init__(self) -> None:
        if self.cell not in (GRU, LSTM):
            raise ValueError(f"cell must be '{GRU}' or '{LSTM}', got {self.cell!r}")
        if min(self.input_dim, self.hidden_size, self.num_layers, self.n_classes) < 1:
            raise ValueError("all network dimensions must be >= 1")

    @property
    def head_hidden(self) -> int:
        return max(1, self.hidden_size // 2)

    @property
    def gates(self) -> tuple[str, ...]:
        return _GRU_GATES if self.cell == GRU else _LSTM_GATES

    def layer_input_dim(self, layer: int) -> int:
        return self.input_dim if layer == 0 else self.hidden_size

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        """Tensor directory in canonical (checkpoint) order."""
        shapes: dict[str, tuple[int, ...]] = {}
        for layer in range(self.num_layers):
            din = self.layer_input_dim(layer)
            for gate in self.gates:
                shapes[f"rnn{layer}.W_{gate}"] = (din, self.hidden_size)
                shapes[f"rnn{layer}.U_{gate}"] = (self.hidden_size, self.hidden_size)
                shapes[f"rnn{layer}.b_{gate}"] = (self.hidden_size,)
        shapes["head.W1"] = (self.hidden_size, self.head_hidden)
        shapes["head.b1"] = (self.head_hidden,)
        shapes["head.W2"] = (self.head_hidden, self.n_classes)
        shapes["head.b2"] = (self.n_classes,)
        return shapes

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        """Uniform +-1/sqrt(hidden_size) init for every tensor, in directory order."""
        bound = 1.0 / np.sqrt(self.hidden_size)
        return {
            name: rng.uniform(-bound, bound, size=shape)
            for name, shape in self.param_shapes().items()
        }

    def zero_like_params(self) -> dict[str, np.ndarray]:
        return {name: np.zeros(shape) for name, shape in self.param_shapes().items()}


# -- cell steps ------------------------------------------------------------


def gru_step(params: dict, layer: int, x: np.ndarray, h: np.ndarray):
    """One GRU step; returns (h_next, cache)."""
    p = f"rnn{layer}."
    z = sigmoid(x @ params[p + "W_z"] + h @ params[p + "U_z"] + params[p + "b_z"])
    r = sigmoid(x @ params[p + "W_r"] + h @ params[p + "U_r"] + params[p + "b_r"])
    a = h @ params[p + "U_n"]
    n = np.tanh(x @ params[p + "W_n"] + r * a + params[p + "b_n"])
    h_next = (1.0 - z) * n + z * h
    return h_next, (x, h, z, r, a, n)


def gru_step_backward(params: dict, grads: dict, layer: int, cache, dh: np.ndarray):
    """Backprop one GRU step; returns (dx, dh_prev), accumulating into grads."""
    x, h, z, r, a, n = cache
    p = f"rnn{layer}."
    dz = dh * (h - n) * z * (1.0 - z)
    dn = dh * (1.0 - z) * (1.0 - n * n)
    dr = dn * a * r * (1.0 - r)
    da = dn * r
    grads[p + "W_z"] += x.T @ dz
    grads[p + "U_z"] += h.T @ dz
    grads[p + "b_z"] += dz.sum(axis=0)
    grads[p + "W_r"] += x.T @ dr
    grads[p + "U_r"] += h.T @ dr
    grads[p + "b_r"] += dr.sum(axis=0)
    grads[p + "W_n"] += x.T @ dn
    grads[p + "U_n"] += h.T @ da
    grads[p + "b_n"] += dn.sum(axis=0)
    dh_prev = dh * z + dz @ params[p + "U_z"].T + dr @ params[p + "U_r"].T + da @ params[p + "U_n"].T
    dx = dz @ params[p + "W_z"].T + dr @ params[p + "W_r"].T + dn @ params[p + "W_n"].T
    return dx, dh_prev


def lstm_step(params: dict, layer: int, x: np.ndarray, h: np.ndarray, c: np.ndarray):
    """One LSTM step; returns (h_next, c_next, cache)."""
    p = f"rnn{layer}."
    i = sigmoid(x @ params[p + "W_i"] + h @ params[p + "U_i"] + params[p + "b_i"])
    f = sigmoid(x @ params[p + "W_f"] + h @ params[p + "U_f"] + params[p + "b_f"])
    g = np.tanh(x @ params[p + "W_g"] + h @ params[p + "U_g"] + params[p + "b_g"])
    o = sigmoid(x @ params[p + "W_o"] + h @ params[p + "U_o"] + params[p + "b_o"])
    c_next = f * c + i * g
    h_next = o * np.tanh(c_next)
    return h_next, c_next, (x, h, c, i, f, g, o, c_next)


def lstm_step_backward(params: dict, grads: dict, layer: int, cache, dh: np.ndarray, dc: np.ndarray):
    """Backprop one LSTM step; returns (dx, dh_prev, dc_prev)."""
    x, h, c, i, f, g, o, c_next = cache
    p = f"rnn{layer}."
    tc = np.tanh(c_next)
    do = dh * tc * o * (1.0 - o)
    dc_total = dc + dh * o * (1.0 - tc * tc)
    df = dc_total * c * f * (1.0 - f)
    di = dc_total * g * i * (1.0 - i)
    dg = dc_total * i * (1.0 - g * g)
    for gate, d in (("i", di), ("f", df), ("g", dg), ("o", do)):
        grads[p + f"W_{gate}"] += x.T @ d
        grads[p + f"U_{gate}"] += h.T @ d
        grads[p + f"b_{gate}"] += d.sum(axis=0)
    dc_prev = dc_total * f
    dh_prev = (
        di @ params[p + "U_i"].T
        + df @ params[p + "U_f"].T
        + dg @ params[p + "U_g"].T
        + do @ params[p + "U_o"].T
    )
    dx = (
        di @ params[p + "W_i"].T
        + df @ params[p + "W_f"].T
        + dg @ params[p + "W_g"].T
        + do @ params[p + "W_o"].T
    )
    return dx, dh_prev, dc_prev


# -- full network ----------------------------------------------------------


def forward(spec: NetSpec, params: dict, window: np.ndarray, return_cache: bool = False):
    """Run the network over a feature window.

    ``window`` is (B, T, input_dim).  The recurrent stack starts from
    zero state, runs left to right, and the final hidden state of the
    top layer feeds a one-hidden-layer tanh MLP with softmax output.
    Returns probs (B, n_classes), plus caches when requested.
    """
    if window.ndim != 3 or window.shape[2] != spec.input_dim:
        raise ValueError(
            f"window must be (B, T, {spec.input_dim}), got {window.shape}"
        )
    batch, steps = window.shape[0], window.shape[1]
    h = [np.zeros((batch, spec.hidden_size)) for _ in range(spec.num_layers)]
    c = [np.zeros((batch, spec.hidden_size)) for _ in range(spec.num_layers)]
    caches: list[list] = [[] for _ in range(spec.num_layers)]
    for t in range(steps):
        x = window[:, t, :]
        for layer in range(spec.num_layers):
            if spec.cell == GRU:
                h[layer], cache = gru_step(params, layer, x, h[layer])
            else:
                h[layer], c[layer], cache = lstm_step(params, layer, x, h[layer], c[layer])
            caches[layer].append(cache)
            x = h[layer]
    hidden = h[-1]
    mid = np.tanh(hidden @ params["head.W1"] + params["head.b1"])
    logits = mid @ params["head.W2"] + params["head.b2"]
    probs = softmax(logits)
    if return_cache:
        return probs, (caches, hidden, mid)
    return probs


def backward(spec: NetSpec, params: dict, cache, dlogits: np.ndarray) -> dict:
    """Exact gradients of the loss wrt every parameter.

    ``dlogits`` is the gradient at the pre-softmax output, (B, n_classes);
    for mean cross-entropy over the batch it is (probs - onehot) / B.
    """
    caches, hidden, mid = cache
    steps = len(caches[0])
    grads = spec.zero_like_params()

    grads["head.W2"] += mid.T @ dlogits
    grads["head.b2"] += dlogits.sum(axis=0)
    dmid = dlogits @ params["head.W2"].T
    dpre = dmid * (1.0 - mid * mid)
    grads["head.W1"] += hidden.T @ dpre
    grads["head.b1"] += dpre.sum(axis=0)
    dtop = dpre @ params["head.W1"].T

    # dh[layer] carries the gradient flowing into that layer's hidden state
    # at the current time step; dx chains down through the stack.
    dh = [np.zeros_like(dtop) for _ in range(spec.num_layers)]
    dc = [np.zeros_like(dtop) for _ in range(spec.num_layers)]
    dh[-1] = dtop
    for t in range(steps - 1, -1, -1):
        dx_up = None
        for layer in range(spec.num_layers - 1, -1, -1):
            d_in = dh[layer] if dx_up is None else dh[layer] + dx_up
            if spec.cell == GRU:
                dx, dh_prev = gru_step_backward(params, grads, layer, caches[layer][t], d_in)
            else:
                dx, dh_prev, dc_prev = lstm_step_backward(
                    params, grads, layer, caches[layer][t], d_in, dc[layer]
                )
                dc[layer] = dc_prev
            dh[layer] = dh_prev
            dx_up = dx
        # dx_up at layer 0 is the gradient wrt the input features; unused.
    return grads


def loss_and_grads(spec: NetSpec, params: dict, window: np.ndarray, targets: np.ndarray):
    """Mean cross-entropy over a batch and its parameter gradients."""
    probs, cache = forward(spec, params, window, return_cache=True)
    batch = window.shape[0]
    floored = np.maximum(probs[np.arange(batch), targets], PROB_FLOOR)
    loss = float(-np.log(floored).mean())
    dlogits = probs.copy()
    dlogits[np.arange(batch), targets] -= 1.0
    dlogits /= batch
    grads = backward(spec, params, cache, dlogits)
    return loss, grads


# -- Adam -------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment estimates plus the step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @staticmethod
    def zeros_like(params: dict[str, np.ndarray]) -> "AdamState":
        return AdamState(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            t=0,
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected Adam update, applied in place to ``params``."""
    state.t += 1
    b1t = 1.0 - beta1**state.t
    b2t = 1.0 - beta2**state.t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / b1t
        v_hat = v / b2t
        params[name] -= learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return state
