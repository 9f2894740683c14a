"""SGD-with-momentum and Adam updates over named float64 arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimState:
    kind: str
    lr: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    buffers: dict = field(default_factory=dict)
    steps: dict = field(default_factory=dict)


def sgd(lr: float, momentum: float = 0.0, weight_decay: float = 0.0) -> OptimState:
    return OptimState("sgd", lr, momentum=momentum, weight_decay=weight_decay)


def adam(lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
         weight_decay: float = 0.0) -> OptimState:
    return OptimState("adam", lr, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)


def optimizer_step(params: dict, grads: dict, state: OptimState, masks: dict | None = None):
    """Update `params` in place.

    With a mask for a parameter, only the masked entries move and only their
    auxiliary buffers advance (lazy sparse update); the rest of the array,
    including its momentum, is left bit-for-bit untouched.
    """
    for name, g in grads.items():
        if g is None:
            continue
        p = params[name]
        if p.shape != g.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        mask = None if masks is None else masks.get(name)
        if state.weight_decay:
            g = g + state.weight_decay * p
        if state.kind == "sgd":
            delta = _sgd_delta(name, g, state, mask)
        elif state.kind == "adam":
            delta = _adam_delta(name, g, state, mask)
        else:
            raise ValueError(f"unknown optimizer {state.kind!r}")
        if mask is None:
            p -= delta
        else:
            p[mask] -= delta[mask]


def _sgd_delta(name, g, state, mask):
    if not state.momentum:
        return state.lr * g
    buf = state.buffers.get(name)
    if buf is None:
        buf = state.buffers[name] = np.zeros_like(g)
    if mask is None:
        buf *= state.momentum
        buf += g
    else:
        buf[mask] = state.momentum * buf[mask] + g[mask]
    return state.lr * buf


def _adam_delta(name, g, state, mask):
    if name not in state.buffers:
        state.buffers[name] = (np.zeros_like(g), np.zeros_like(g))
        state.steps[name] = np.zeros(g.shape, dtype=np.int64)
    m, v = state.buffers[name]
    t = state.steps[name]
    sel = np.ones(g.shape, dtype=bool) if mask is None else mask
    t[sel] += 1
    m[sel] = state.beta1 * m[sel] + (1 - state.beta1) * g[sel]
    v[sel] = state.beta2 * v[sel] + (1 - state.beta2) * g[sel] ** 2
    tt = np.maximum(t, 1)
    mhat = m / (1 - state.beta1 ** tt)
    vhat = v / (1 - state.beta2 ** tt)
    return state.lr * mhat / (np.sqrt(vhat) + state.eps)
