"""Multi-source LSTM: per-aspect LSTMs, attention fusion, softmax classifier.

All parameters of a model live in one flat float64 vector; the per-layer
matrices are views into it in a fixed declared order (see
:func:`param_layout`). The optimizer, gradient clipping and the checkpoint
format all work on that vector directly.

Gate blocks inside the stacked LSTM matrices are ordered
(candidate, input, forget, output).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .numerics import DTYPE, seeded_uniform_init, sigmoid, stable_softmax

GATES = ("c", "i", "f", "o")
PROB_FLOOR = 1e-12


def param_layout(input_dims, hidden, n_classes):
    """Ordered ``(name, shape)`` pairs for every parameter array."""
    if hidden < 1:
        raise DimensionError("hidden size must be at least 1")
    if n_classes < 2:
        raise DimensionError("need at least two classes")
    if len(input_dims) < 1 or any(d < 1 for d in input_dims):
        raise DimensionError(f"bad input dims {input_dims!r}")
    h = hidden
    layout = []
    for m, d in enumerate(input_dims):
        layout += [(f"lstm{m}.W", (4 * h, d)), (f"lstm{m}.U", (4 * h, h)), (f"lstm{m}.b", (4 * h,))]
    layout += [
        ("attention.W_a", (h, h)),
        ("attention.u_a", (h,)),
        ("classifier.W", (n_classes, h)),
        ("classifier.b", (n_classes,)),
    ]
    return layout


class LstmParams:
    """Views onto one aspect's LSTM weights: W (4h, d), U (4h, h), b (4h)."""

    def __init__(self, W, U, b):
        self.W, self.U, self.b = W, U, b
        self.hidden = U.shape[1]
        self.input_dim = W.shape[1]

    def _gate(self, arr, name):
        k = GATES.index(name)
        return arr[k * self.hidden:(k + 1) * self.hidden]

    W_c = property(lambda self: self._gate(self.W, "c"))
    W_i = property(lambda self: self._gate(self.W, "i"))
    W_f = property(lambda self: self._gate(self.W, "f"))
    W_o = property(lambda self: self._gate(self.W, "o"))
    U_c = property(lambda self: self._gate(self.U, "c"))
    U_i = property(lambda self: self._gate(self.U, "i"))
    U_f = property(lambda self: self._gate(self.U, "f"))
    U_o = property(lambda self: self._gate(self.U, "o"))
    b_c = property(lambda self: self._gate(self.b, "c"))
    b_i = property(lambda self: self._gate(self.b, "i"))
    b_f = property(lambda self: self._gate(self.b, "f"))
    b_o = property(lambda self: self._gate(self.b, "o"))


@dataclass
class AttentionParams:
    W_a: np.ndarray
    u_a: np.ndarray


@dataclass
class ClassifierParams:
    """Softmax weights; row k of ``W`` is w_k, ``b[k]`` is b_k."""

    W: np.ndarray
    b: np.ndarray


class ModelParams:
    """Every trainable array of the model, backed by one flat vector.

    Gradients use the same class, so ``grads.vector`` lines up with
    ``params.vector`` element for element.
    """

    def __init__(self, input_dims, hidden, n_classes=2, vector=None):
        self.input_dims = tuple(int(d) for d in input_dims)
        self.hidden = int(hidden)
        self.n_classes = int(n_classes)
        self.layout = param_layout(self.input_dims, self.hidden, self.n_classes)
        size = sum(int(np.prod(shape)) for _, shape in self.layout)
        if vector is None:
            vector = np.zeros(size, dtype=DTYPE)
        else:
            vector = np.asarray(vector, dtype=DTYPE)
            if vector.shape != (size,):
                raise DimensionError(f"parameter vector has shape {vector.shape}, expected ({size},)")
        self.vector = vector
        self.arrays = {}
        offset = 0
        for name, shape in self.layout:
            n = int(np.prod(shape))
            self.arrays[name] = vector[offset:offset + n].reshape(shape)
            offset += n
        self.lstm = [
            LstmParams(self.arrays[f"lstm{m}.W"], self.arrays[f"lstm{m}.U"], self.arrays[f"lstm{m}.b"])
            for m in range(len(self.input_dims))
        ]
        self.attention = AttentionParams(self.arrays["attention.W_a"], self.arrays["attention.u_a"])
        self.classifier = ClassifierParams(self.arrays["classifier.W"], self.arrays["classifier.b"])

    @property
    def n_aspects(self):
        return len(self.input_dims)

    @property
    def size(self):
        return self.vector.size

    def like(self, vector):
        return ModelParams(self.input_dims, self.hidden, self.n_classes, vector)

    def zeros_like(self):
        return self.like(np.zeros_like(self.vector))

    def copy(self):
        return self.like(self.vector.copy())

    def same_shape(self, other):
        return (self.input_dims, self.hidden, self.n_classes) == (
            other.input_dims, other.hidden, other.n_classes)

    def __repr__(self):
        return (f"ModelParams(input_dims={self.input_dims}, hidden={self.hidden}, "
                f"n_classes={self.n_classes}, size={self.size})")


def init_params(input_dims, hidden, n_classes, rng, bound=0.08):
    """Uniform(-bound, bound) initialization of every array, in layout order."""
    params = ModelParams(input_dims, hidden, n_classes)
    for name, shape in params.layout:
        rows, cols = (shape[0], 1) if len(shape) == 1 else shape
        params.arrays[name][...] = seeded_uniform_init(rows, cols, bound, rng).reshape(shape)
    return params


# --- forward --------------------------------------------------------------

def lstm_step(x, h_prev, c_prev, p):
    """One LSTM step. Returns ``(h, c, gates)`` with gates = [c~, i, f, o] stacked."""
    hid = p.hidden
    if x.shape != (p.input_dim,) or h_prev.shape != (hid,) or c_prev.shape != (hid,):
        raise DimensionError(
            f"lstm_step: x {x.shape}, h {h_prev.shape}, c {c_prev.shape} "
            f"for input_dim={p.input_dim}, hidden={hid}")
    a = p.W @ x + p.U @ h_prev + p.b
    gates = np.empty(4 * hid, dtype=DTYPE)
    gates[:hid] = np.tanh(a[:hid])
    gates[hid:] = sigmoid(a[hid:])
    c_tilde, i, f, o = gates[:hid], gates[hid:2 * hid], gates[2 * hid:3 * hid], gates[3 * hid:]
    c = i * c_tilde + f * c_prev
    h = o * np.tanh(c)
    return h, c, gates


@dataclass
class LstmTrace:
    """Cached activations of one aspect LSTM.

    ``hs`` and ``cs`` have T+1 rows; row 0 is the zero initial state.
    """

    xs: np.ndarray
    gates: np.ndarray
    cs: np.ndarray
    hs: np.ndarray

    @property
    def T(self):
        return self.xs.shape[0]

    @property
    def h_last(self):
        return self.hs[-1]


def lstm_forward(seq, p):
    seq = np.asarray(seq, dtype=DTYPE)
    if seq.ndim != 2 or seq.shape[0] == 0:
        raise DimensionError("lstm_forward needs a non-empty (T, d) sequence")
    T, hid = seq.shape[0], p.hidden
    hs = np.zeros((T + 1, hid), dtype=DTYPE)
    cs = np.zeros((T + 1, hid), dtype=DTYPE)
    gates = np.empty((T, 4 * hid), dtype=DTYPE)
    for t in range(T):
        hs[t + 1], cs[t + 1], gates[t] = lstm_step(seq[t], hs[t], cs[t], p)
    return LstmTrace(seq, gates, cs, hs)


def attention_fuse(h_list, a):
    """Fuse M hidden vectors: returns ``(s, alpha, z)``."""
    H = np.asarray(h_list, dtype=DTYPE)
    hid = a.u_a.shape[0]
    if H.ndim != 2 or H.shape[0] < 1 or H.shape[1] != hid:
        raise DimensionError(f"attention_fuse: hidden states {H.shape}, expected (M, {hid})")
    # Row by row: a GEMM may round rows differently, and identical hidden
    # states must get bit-identical scores.
    z = np.stack([np.tanh(a.W_a @ h) for h in H])
    alpha = stable_softmax(np.array([zm @ a.u_a for zm in z]))
    s = alpha @ H
    return s, alpha, z


def classify(s, c):
    s = np.asarray(s, dtype=DTYPE)
    if s.shape != (c.W.shape[1],):
        raise DimensionError(f"classify: embedding {s.shape}, expected ({c.W.shape[1]},)")
    return stable_softmax(c.W @ s + c.b)


def predicted_class(probs):
    # np.argmax returns the first maximum, i.e. the lowest class index on ties.
    return int(np.argmax(probs))


def cross_entropy_loss(probs_list, labels):
    """Mean negative log-probability of the true class (floored at 1e-12)."""
    if len(probs_list) == 0 or len(probs_list) != len(labels):
        raise ValueError("need equal, non-zero numbers of predictions and labels")
    total = 0.0
    for probs, y in zip(probs_list, labels):
        if not 0 <= y < len(probs):
            raise ValueError(f"label {y} out of range for {len(probs)} classes")
        total -= np.log(max(float(probs[y]), PROB_FLOOR))
    return total / len(labels)


@dataclass
class ForwardTrace:
    params: ModelParams
    lstm: list
    z: np.ndarray
    alpha: np.ndarray
    s: np.ndarray
    probs: np.ndarray

    @property
    def hidden_last(self):
        return np.stack([tr.h_last for tr in self.lstm])


def forward_user(aspects, params):
    """Full forward pass for one user; ``aspects`` is an AspectSequences or a sequence of (T, d) arrays."""
    seqs = getattr(aspects, "aspects", aspects)
    if len(seqs) != params.n_aspects:
        raise DimensionError(f"got {len(seqs)} aspect sequences, model expects {params.n_aspects}")
    traces = []
    for m, (seq, p) in enumerate(zip(seqs, params.lstm)):
        if seq.ndim != 2 or seq.shape[1] != params.input_dims[m]:
            raise DimensionError(f"aspect {m}: shape {seq.shape}, expected (T, {params.input_dims[m]})")
        traces.append(lstm_forward(seq, p))
    if len({tr.T for tr in traces}) != 1:
        raise DimensionError("aspect sequences differ in length")
    hidden_last = np.stack([tr.h_last for tr in traces])
    s, alpha, z = attention_fuse(hidden_last, params.attention)
    probs = classify(s, params.classifier)
    return ForwardTrace(params, traces, z, alpha, s, probs)


# --- backward -------------------------------------------------------------

def _lstm_backward(tr, p, dh_last, grad):
    """BPTT through one aspect LSTM, accumulating into the gradient views ``grad``."""
    hid = p.hidden
    T = tr.T
    da_all = np.empty((T, 4 * hid), dtype=DTYPE)
    dh = dh_last
    dc = np.zeros(hid, dtype=DTYPE)
    for t in range(T - 1, -1, -1):
        g = tr.gates[t]
        c_tilde, i, f, o = g[:hid], g[hid:2 * hid], g[2 * hid:3 * hid], g[3 * hid:]
        tanh_c = np.tanh(tr.cs[t + 1])
        dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
        da = da_all[t]
        da[:hid] = dc * i * (1.0 - c_tilde * c_tilde)
        da[hid:2 * hid] = dc * c_tilde * i * (1.0 - i)
        da[2 * hid:3 * hid] = dc * tr.cs[t] * f * (1.0 - f)
        da[3 * hid:] = dh * tanh_c * o * (1.0 - o)
        dh = p.U.T @ da
        dc = dc * f
    grad.W += da_all.T @ tr.xs
    grad.U += da_all.T @ tr.hs[:-1]
    grad.b += da_all.sum(axis=0)


def backward_user(trace, label, params=None):
    """Gradient of the single-user cross-entropy loss w.r.t. every parameter.

    Returns a :class:`ModelParams` holding the gradients. Passing ``params``
    checks that the trace was produced with exactly that parameter object.
    """
    p = trace.params
    if params is not None and params is not p:
        raise ValueError("trace was produced with different parameters (stale trace)")
    K = p.n_classes
    if not 0 <= label < K:
        raise ValueError(f"label {label} out of range for {K} classes")
    if len(trace.lstm) != p.n_aspects or trace.probs.shape != (K,) or trace.s.shape != (p.hidden,):
        raise ValueError("trace does not match its parameters")
    grads = p.zeros_like()

    dlogits = trace.probs.copy()
    dlogits[label] -= 1.0
    grads.classifier.W[...] = np.outer(dlogits, trace.s)
    grads.classifier.b[...] = dlogits
    ds = p.classifier.W.T @ dlogits

    H = trace.hidden_last
    alpha, z = trace.alpha, trace.z
    dH = np.outer(alpha, ds)
    dalpha = H @ ds
    dscore = alpha * (dalpha - alpha @ dalpha)
    grads.attention.u_a[...] = dscore @ z
    dpre = np.outer(dscore, p.attention.u_a) * (1.0 - z * z)
    grads.attention.W_a[...] = dpre.T @ H
    dH += dpre @ p.attention.W_a

    for m, tr in enumerate(trace.lstm):
        _lstm_backward(tr, p.lstm[m], dH[m], grads.lstm[m])
    return grads


def user_loss(trace, label):
    return -np.log(max(float(trace.probs[label]), PROB_FLOOR))
