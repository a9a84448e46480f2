"""Bidirectional LSTM denoiser written directly in numpy.

Parameters are kept in float64 so that training is bitwise reproducible and
gradients can be checked against finite differences. Gate blocks are stacked
in the order input, forget, cell candidate, output.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .. import dsp
from ..signalio import FormatError, Signal
from .subtraction import stack_inputs

log = logging.getLogger(__name__)

MODEL_MAGIC = b"LSD1"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4s4I")


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass
class LstmDenoiser:
    """Stacked bidirectional LSTM with a per-timestep linear read-out.

    ``cells[layer][direction]`` holds ``(W, U, b)`` with shapes
    ``(4H, in)``, ``(4H, H)`` and ``(4H,)``; direction 0 runs forward in time.
    """

    cells: list
    w_out: np.ndarray
    b_out: np.ndarray

    @property
    def num_layers(self) -> int:
        return len(self.cells)

    @property
    def hidden(self) -> int:
        return self.cells[0][0][1].shape[1]

    @property
    def input_dim(self) -> int:
        return self.cells[0][0][0].shape[1]

    def parameters(self) -> list[np.ndarray]:
        """All parameter arrays in serialization order."""
        out = []
        for layer in self.cells:
            for w, u, b in layer:
                out.extend((w, u, b))
        out.extend((self.w_out, self.b_out))
        return out

    def copy(self) -> "LstmDenoiser":
        return LstmDenoiser.from_parameters(
            [p.copy() for p in self.parameters()], self.num_layers, self.hidden, self.input_dim)

    @staticmethod
    def shapes(layers: int, hidden: int, input_dim: int) -> list[tuple[int, ...]]:
        shapes = []
        for layer in range(layers):
            d_in = input_dim if layer == 0 else 2 * hidden
            for _ in range(2):
                shapes += [(4 * hidden, d_in), (4 * hidden, hidden), (4 * hidden,)]
        shapes += [(1, 2 * hidden), (1,)]
        return shapes

    @classmethod
    def from_parameters(cls, params, layers: int, hidden: int, input_dim: int) -> "LstmDenoiser":
        shapes = cls.shapes(layers, hidden, input_dim)
        if len(params) != len(shapes):
            raise ValueError(f"expected {len(shapes)} parameter arrays, got {len(params)}")
        params = [np.asarray(p, dtype=np.float64).reshape(s) for p, s in zip(params, shapes)]
        cells = []
        it = iter(params[:-2])
        for _ in range(layers):
            cells.append([(next(it), next(it), next(it)) for _ in range(2)])
        return cls(cells, params[-2], params[-1])

    @classmethod
    def initialize(cls, input_dim: int, hidden: int = 128, layers: int = 2,
                   seed: int | np.random.Generator = 0) -> "LstmDenoiser":
        """Uniform initialization in ``[-1/sqrt(hidden), 1/sqrt(hidden)]``."""
        rng = np.random.default_rng(seed)
        k = 1.0 / np.sqrt(hidden)
        params = [rng.uniform(-k, k, size=s) for s in cls.shapes(layers, hidden, input_dim)]
        return cls.from_parameters(params, layers, hidden, input_dim)

    def swap_directions(self) -> "LstmDenoiser":
        """Model whose output on a time-reversed input is the reversed original output."""
        h = self.hidden
        cells = []
        for li, (fwd, bwd) in enumerate(self.cells):
            new = []
            for w, u, b in (bwd, fwd):
                if li > 0:
                    w = np.hstack([w[:, h:], w[:, :h]])
                new.append((w.copy(), u.copy(), b.copy()))
            cells.append(new)
        w_out = np.hstack([self.w_out[:, h:], self.w_out[:, :h]])
        return LstmDenoiser(cells, w_out, self.b_out.copy())


def _gate_scale(hdim: int) -> np.ndarray:
    # sigmoid(z) = 0.5 + 0.5 tanh(z / 2); the candidate block uses tanh(z) directly
    s = np.full(4 * hdim, 0.5)
    s[2 * hdim:3 * hdim] = 1.0
    return s


def _run_direction(seq, w, u, b):
    """Forward recursion over a time-major ``(T, B, D)`` sequence.

    Returns the hidden states ``(T, B, H)`` and the cache needed for BPTT.
    """
    steps, bsz, _ = seq.shape
    hdim = u.shape[1]
    scale = _gate_scale(hdim)
    offset = 0.5 - 0.5 * (scale == 1.0)
    pre = (seq @ (w.T * scale) + b * scale)
    us = u.T * scale
    gates = np.empty((steps, bsz, 4 * hdim))
    cs = np.empty((steps, bsz, hdim))
    hs = np.empty((steps, bsz, hdim))
    h = np.zeros((bsz, hdim))
    c = np.zeros((bsz, hdim))
    for t in range(steps):
        g = gates[t]
        np.tanh(pre[t] + h @ us, out=g)
        g *= scale
        g += offset
        c = g[:, hdim:2 * hdim] * c
        c += g[:, :hdim] * g[:, 2 * hdim:3 * hdim]
        cs[t] = c
        h = g[:, 3 * hdim:] * np.tanh(c)
        hs[t] = h
    return hs, (seq, gates, cs, hs)


def _backprop_direction(dhs, cache, w, u):
    seq, gates, cs, hs = cache
    steps, bsz, hdim = hs.shape
    gi, gf = gates[..., :hdim], gates[..., hdim:2 * hdim]
    gg, go = gates[..., 2 * hdim:3 * hdim], gates[..., 3 * hdim:]
    tc = np.tanh(cs)
    c_prev = np.concatenate([np.zeros((1, bsz, hdim)), cs[:-1]], axis=0)
    # local derivatives of each pre-activation block w.r.t. dc (i, f, g) or dh (o)
    local = np.concatenate([gg * gi * (1.0 - gi), c_prev * gf * (1.0 - gf),
                            gi * (1.0 - gg * gg), tc * go * (1.0 - go)], axis=2)
    dc_from_dh = go * (1.0 - tc * tc)
    dz = np.empty_like(gates)
    dh_next = np.zeros((bsz, hdim))
    dc_next = np.zeros((bsz, hdim))
    for t in range(steps - 1, -1, -1):
        dh = dhs[t] + dh_next
        dc = dh * dc_from_dh[t]
        dc += dc_next
        d = dz[t]
        np.multiply(np.concatenate([dc, dc, dc, dh], axis=1), local[t], out=d)
        dc_next = dc * gf[t]
        dh_next = d @ u
    h_prev = np.concatenate([np.zeros((1, bsz, hdim)), hs[:-1]], axis=0)
    flat_dz = dz.reshape(-1, 4 * hdim)
    dw = flat_dz.T @ seq.reshape(-1, seq.shape[2])
    du = flat_dz.T @ h_prev.reshape(-1, hdim)
    db = flat_dz.sum(axis=0)
    dseq = dz @ w
    return dseq, (dw, du, db)


def _forward(model: LstmDenoiser, x: np.ndarray, keep_cache: bool = False):
    """Run the stack on a time-major ``(T, B, D)`` input."""
    caches = []
    inp = x
    for fwd, bwd in model.cells:
        hf, cf = _run_direction(inp, *fwd)
        hb, cb = _run_direction(np.ascontiguousarray(inp[::-1]), *bwd)
        caches.append((cf, cb) if keep_cache else None)
        inp = np.concatenate([hf, hb[::-1]], axis=2)
    y = inp @ model.w_out.T + model.b_out
    return y, inp, caches


def lstm_forward(model: LstmDenoiser, features: np.ndarray) -> np.ndarray:
    """Denoised output for one ``(T, D)`` window or a ``(B, T, D)`` batch."""
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != model.input_dim:
        raise ValueError(
            f"features of shape {np.shape(features)} do not match input_dim {model.input_dim}")
    y, _, _ = _forward(model, np.ascontiguousarray(x.transpose(1, 0, 2)))
    y = y.transpose(1, 0, 2)
    return y[0] if single else y


def loss_and_grads(model: LstmDenoiser, x: np.ndarray, target: np.ndarray):
    """Mean squared error over all timesteps and its gradient for every parameter.

    ``x`` is ``(B, T, D)`` and ``target`` ``(B, T)``; gradients come back in
    :meth:`LstmDenoiser.parameters` order.
    """
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64).transpose(1, 0, 2))
    target = np.asarray(target, dtype=np.float64).reshape(x.shape[1], x.shape[0]).T[..., None]
    y, top, caches = _forward(model, x, keep_cache=True)
    err = y - target
    loss = float(np.mean(err**2))
    dy = 2.0 * err / err.size
    hdim = model.hidden
    grads_out = [dy.reshape(-1, 1).T @ top.reshape(-1, 2 * hdim), dy.sum(axis=(0, 1))]
    dinp = dy @ model.w_out
    layer_grads = []
    for (fwd, bwd), (cf, cb) in zip(reversed(model.cells), reversed(caches)):
        dxf, gf = _backprop_direction(dinp[:, :, :hdim], cf, fwd[0], fwd[1])
        dxb, gb = _backprop_direction(dinp[::-1, :, hdim:], cb, bwd[0], bwd[1])
        dinp = dxf + dxb[::-1]
        layer_grads.append(list(gf) + list(gb))
    grads = [g for lg in reversed(layer_grads) for g in lg] + grads_out
    return loss, grads


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    hidden: int = 128
    layers: int = 2
    window_length: int = 60
    window_overlap: float = 0.5

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class Adam:
    lr: float
    beta1: float
    beta2: float
    eps: float
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def update(self, params, grads):
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step += 1
        c1 = 1.0 - self.beta1**self.step
        c2 = 1.0 - self.beta2**self.step
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def lstm_train(dataset, config: TrainConfig = TrainConfig(), model: LstmDenoiser | None = None):
    """Fit a denoiser to ``(features, target)`` window pairs with Adam on the MSE.

    Returns the trained model and the mean training loss of every epoch.
    """
    if len(dataset) == 0:
        raise ValueError("empty training set")
    x = np.stack([np.asarray(f, dtype=np.float64) for f, _ in dataset])
    y = np.stack([np.asarray(t, dtype=np.float64).reshape(-1) for _, t in dataset])
    if x.ndim != 3 or y.shape != x.shape[:2]:
        raise ValueError(f"inconsistent window shapes: features {x.shape}, targets {y.shape}")
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = LstmDenoiser.initialize(x.shape[2], config.hidden, config.layers, rng)
    elif model.input_dim != x.shape[2]:
        raise ValueError(f"model expects {model.input_dim} inputs, data has {x.shape[2]}")
    params = model.parameters()
    opt = Adam(config.lr, config.beta1, config.beta2, config.eps)
    trace = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_grads(model, x[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch + 1} with learning rate {config.lr:g}; "
                    "try a smaller learning rate")
            opt.update(params, grads)
            total += loss * len(idx)
        trace.append(total / len(x))
        log.info("epoch %d/%d  loss %.6f", epoch + 1, config.epochs, trace[-1])
    return model, trace


def denoise_lstm(model: LstmDenoiser, estimate: Signal, noise: Signal | None = None,
                 window_length: int = 60, renormalize: bool = True) -> Signal:
    """Run the denoiser over 50%-overlapping windows and blend them with Hann weights."""
    feats = stack_inputs(estimate, noise)
    if feats.num_channels != model.input_dim:
        raise ValueError(
            f"model expects {model.input_dim} input channels, got {feats.num_channels}")
    n = feats.num_samples
    starts = [w.start for w in dsp.window(feats, window_length, 0.5)]
    if starts[-1] + window_length < n:
        starts.append(n - window_length)
    batch = np.stack([feats.samples[s:s + window_length] for s in starts])
    out = lstm_forward(model, batch)[..., 0]
    blended = dsp.overlap_average_hann(
        [dsp.Window(s, o) for s, o in zip(starts, out)], n, estimate.fps)
    sig = Signal(blended.samples, estimate.fps, ("bvp",))
    return dsp.normalize_acdc(sig) if renormalize else sig


def training_windows(features: Signal, target: Signal, length: int = 60, overlap: float = 0.5):
    """Pair up aligned feature and target windows for training."""
    if features.num_samples != target.num_samples:
        raise ValueError("features and target differ in length")
    fw = dsp.window(features, length, overlap)
    tw = dsp.window(target, length, overlap)
    return [(f.data, t.data[:, 0]) for f, t in zip(fw, tw)]


# --------------------------------------------------------------------------
# model files

def save_model(model: LstmDenoiser, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, model.num_layers,
                                    model.hidden, model.input_dim))
        for p in model.parameters():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_model(path) -> LstmDenoiser:
    raw = open(path, "rb").read()
    if len(raw) < _MODEL_HEADER.size:
        raise FormatError(f"{path}: truncated model header")
    magic, version, layers, hidden, input_dim = _MODEL_HEADER.unpack_from(raw)
    if magic != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    shapes = LstmDenoiser.shapes(layers, hidden, input_dim)
    count = sum(int(np.prod(s)) for s in shapes)
    expected = _MODEL_HEADER.size + 8 * count
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    flat = np.frombuffer(raw, dtype="<f8", offset=_MODEL_HEADER.size).astype(np.float64)
    if not np.all(np.isfinite(flat)):
        raise FormatError(f"{path}: non-finite parameters")
    params, pos = [], 0
    for s in shapes:
        size = int(np.prod(s))
        params.append(flat[pos:pos + size].reshape(s))
        pos += size
    return LstmDenoiser.from_parameters(params, layers, hidden, input_dim)
