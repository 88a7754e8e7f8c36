"""Tanh MLP with hand-written backprop, Adam, and the interval-constraining wrapper.

A :class:`ConstrainedModel` evaluates in one of three modes:

``raw``
    ``f(s) = out_shift + out_scale * z(s)`` where ``z`` is the MLP applied to
    the normalised input.
``wrapped``
    ``Lo(s) + sigmoid(z(s)) * (Up(s) - Lo(s))`` -- used for training.
``projected``
    ``clip(f(s), Lo(s), Up(s))`` -- used for analysis.

``Lo``/``Up`` are the intervals of the cell containing ``s``; cell membership
is piecewise constant so it contributes no gradient.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

MODES = ("raw", "wrapped", "projected")


@dataclass
class MlpParams:
    weights: list  # [(W, b), ...], W has shape (fan_in, fan_out)
    in_shift: np.ndarray
    in_scale: np.ndarray
    out_shift: np.ndarray
    out_scale: np.ndarray
    skip: list = None  # input columns added to the raw output (residual form)
    cell_inputs: bool = False  # append the containing cell's (lo, hi) to the input

    @property
    def sizes(self):
        return [self.weights[0][0].shape[0]] + [W.shape[1] for W, _ in self.weights]

    def copy(self):
        return MlpParams(
            [(W.copy(), b.copy()) for W, b in self.weights],
            self.in_shift.copy(), self.in_scale.copy(), self.out_shift.copy(), self.out_scale.copy(),
            None if self.skip is None else list(self.skip),
            self.cell_inputs,
        )

    def to_dict(self):
        return {
            "layers": [{"w": W.tolist(), "b": b.tolist()} for W, b in self.weights],
            "in_shift": self.in_shift.tolist(),
            "in_scale": self.in_scale.tolist(),
            "out_shift": self.out_shift.tolist(),
            "out_scale": self.out_scale.tolist(),
            "skip": self.skip,
            "cell_inputs": self.cell_inputs,
        }

    @classmethod
    def from_dict(cls, d):
        arr = lambda v: np.asarray(v, dtype=float)  # noqa: E731
        return cls(
            [(arr(l["w"]).reshape(len(l["w"]), -1), arr(l["b"])) for l in d["layers"]],
            arr(d["in_shift"]), arr(d["in_scale"]), arr(d["out_shift"]), arr(d["out_scale"]),
            d.get("skip"),
            bool(d.get("cell_inputs", False)),
        )


def _affine_from_bbox(bbox, dim):
    if bbox is None:
        return np.zeros(dim), np.ones(dim)
    lo, hi = (np.asarray(b, dtype=float) for b in bbox)
    half = 0.5 * (hi - lo)
    return 0.5 * (lo + hi), np.where(half > 0, half, 1.0)


def init_mlp(sizes, seed=0, in_bbox=None, out_bbox=None, skip=None, cell_inputs=False):
    """Glorot-uniform init; ``in_bbox``/``out_bbox`` fix the (untrained) affine maps to [-1, 1].

    With ``skip`` the raw output is ``s[skip] + affine(z)`` and ``out_bbox``
    should describe the residual ``x - s[skip]``.  With ``cell_inputs`` the
    first layer also sees the cell interval, so ``sizes[0]`` and ``in_bbox``
    cover ``t + 2 d`` columns.
    """
    if len(sizes) < 2:
        raise DomainError("need at least input and output sizes")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1417]))
    weights = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append((rng.uniform(-lim, lim, (fan_in, fan_out)), np.zeros(fan_out)))
    in_shift, in_scale = _affine_from_bbox(in_bbox, sizes[0])
    out_shift, out_scale = _affine_from_bbox(out_bbox, sizes[-1])
    skip = None if skip is None else [int(i) for i in skip]
    return MlpParams(weights, in_shift, in_scale, out_shift, out_scale, skip, bool(cell_inputs))


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def project(value, lo, hi):
    """Per-dimension clamp of ``value`` into ``[lo, hi]``."""
    return np.minimum(np.maximum(value, lo), hi)


class ConstrainedModel:
    def __init__(self, params, cmap=None, mode="raw"):
        if mode not in MODES:
            raise DomainError(f"unknown mode {mode!r}")
        if mode != "raw" and cmap is None:
            raise DomainError(f"mode {mode!r} needs a constraint map")
        if params.cell_inputs and cmap is None:
            raise DomainError("a network with cell inputs needs a constraint map")
        if cmap is not None:
            t = cmap.partition.memories.shape[1]
            want = t + 2 * cmap.out_dim if params.cell_inputs else t
            if want != params.sizes[0]:
                raise DomainError("constraint map input dimension does not match the network")
        self.params = params
        self.cmap = cmap
        self.mode = mode

    def with_mode(self, mode):
        return ConstrainedModel(self.params, self.cmap, mode)

    def __call__(self, s):
        return self.forward(s)[0]

    def forward(self, s):
        """Batch forward pass; returns ``(output, cache)``."""
        s = np.atleast_2d(np.asarray(s, dtype=float))
        p = self.params
        bounds = None
        inp = s
        if self.cmap is not None and (p.cell_inputs or self.mode != "raw"):
            bounds = self.cmap.bounds_at(s)
            if p.cell_inputs:
                c = bounds[2]
                inp = np.concatenate([s, self.cmap.lo[c], self.cmap.hi[c]], axis=1)
        acts = [(inp - p.in_shift) / p.in_scale]
        h = acts[0]
        n_layers = len(p.weights)
        for i, (W, b) in enumerate(p.weights):
            h = h @ W + b
            if i < n_layers - 1:
                h = np.tanh(h)
            acts.append(h)
        z = h
        cache = {"acts": acts, "mode": self.mode}
        if self.mode == "raw":
            return self._raw(s, z), cache
        lo, hi, cells = bounds
        cache.update(lo=lo, hi=hi, cells=cells)
        if self.mode == "wrapped":
            sig = sigmoid(z)
            cache["sig"] = sig
            # the clamp only removes last-ulp rounding past hi; gradients ignore it
            return project(lo + sig * (hi - lo), lo, hi), cache
        raw = self._raw(s, z)
        cache["inside"] = (raw > lo) & (raw < hi)
        return project(raw, lo, hi), cache

    def _raw(self, s, z):
        p = self.params
        out = p.out_shift + p.out_scale * z
        if p.skip is not None:
            out = out + s[:, p.skip]
        return out

    def backward(self, cache, grad_output):
        """Gradients of ``sum(grad_output * output)`` w.r.t. every weight and bias."""
        p = self.params
        g = np.asarray(grad_output, dtype=float)
        mode = cache["mode"]
        if mode == "wrapped":
            sig = cache["sig"]
            g = g * sig * (1.0 - sig) * (cache["hi"] - cache["lo"])
        elif mode == "projected":
            g = g * cache["inside"] * p.out_scale
        else:
            g = g * p.out_scale
        acts = cache["acts"]
        grads = [None] * len(p.weights)
        for i in range(len(p.weights) - 1, -1, -1):
            W, _ = p.weights[i]
            grads[i] = (acts[i].T @ g, g.sum(axis=0))
            if i > 0:
                g = (g @ W.T) * (1.0 - acts[i] ** 2)
        return grads


# --------------------------------------------------------------------------- Adam


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **kw):
        zeros = lambda: [(np.zeros_like(W), np.zeros_like(b)) for W, b in params.weights]  # noqa: E731
        return cls(m=zeros(), v=zeros(), **kw)


def adam_step(params, grads, state):
    """One bias-corrected Adam update; mutates ``state`` and returns new params."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new = []
    for i, ((W, b), (gW, gb)) in enumerate(zip(params.weights, grads)):
        pair = []
        for j, (theta, g) in enumerate(((W, gW), (b, gb))):
            m = b1 * state.m[i][j] + (1.0 - b1) * g
            v = b2 * state.v[i][j] + (1.0 - b2) * g * g
            state.m[i] = state.m[i][:j] + (m,) + state.m[i][j + 1:]
            state.v[i] = state.v[i][:j] + (v,) + state.v[i][j + 1:]
            pair.append(theta - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new.append(tuple(pair))
    out = params.copy()
    out.weights = new
    return out


def flatten(weights):
    return np.concatenate([np.concatenate([W.ravel(), b.ravel()]) for W, b in weights])


def unflatten(vec, like):
    out, pos = [], 0
    for W, b in like:
        w = vec[pos:pos + W.size].reshape(W.shape)
        pos += W.size
        bb = vec[pos:pos + b.size].reshape(b.shape)
        pos += b.size
        out.append((w, bb))
    return out
