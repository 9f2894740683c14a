"""Independent reference implementations used as test oracles.

Nothing here imports the code under test's internals: each oracle is a
deliberately slow, loop-based restatement of a definition.
"""

from __future__ import annotations

import math

import numpy as np


def conv3d_loops(x, w, stride=1, groups=1):
    """Seven nested loops: n, o, t, h, w over outputs; c, kt, kh, kw over taps."""
    n, c, t, h, wd = x.shape
    co, cg, kt, kh, kw = w.shape
    pt, ph, pw = kt // 2, kh // 2, kw // 2
    ho, wo = (h - 1) // stride + 1, (wd - 1) // stride + 1
    out = np.zeros((n, co, t, ho, wo))
    for b in range(n):
        for o in range(co):
            ins = [o] if groups != 1 else range(c)
            for ti in range(t):
                for hi in range(ho):
                    for wi in range(wo):
                        acc = 0.0
                        for j, ci in enumerate(ins):
                            for a in range(kt):
                                for bb in range(kh):
                                    for e in range(kw):
                                        tt = ti + a - pt
                                        hh = hi * stride + bb - ph
                                        ww = wi * stride + e - pw
                                        if 0 <= tt < t and 0 <= hh < h and 0 <= ww < wd:
                                            acc += x[b, ci, tt, hh, ww] * w[o, 0 if groups != 1 else ci, a, bb, e]
                        out[b, o, ti, hi, wi] = acc
    return out


def count_macs_pointwise(c_in, c_out, t, h, w):
    macs = 0
    for _ in range(t * h * w):
        for _o in range(c_out):
            for _i in range(c_in):
                macs += 1
    return macs


def count_macs_depthwise(c, kt, ks, t, h, w, stride):
    """Count one MAC per (output position, channel, tap)."""
    ho, wo = -(-h // stride), -(-w // stride)
    per_position = 0
    for _a in range(kt):
        for _b in range(ks):
            for _e in range(ks):
                per_position += 1
    macs = 0
    for _ in range(t * ho * wo):
        macs += c * per_position
    return macs


def mbconv_macs(c_in, expansion, c_out, kt, ks, t, h, w, stride):
    """Expand at input resolution, depthwise with the stride, project at output resolution."""
    c_mid = math.floor(expansion * c_in + 0.5)
    ho, wo = -(-h // stride), -(-w // stride)
    return (count_macs_pointwise(c_in, c_mid, t, h, w)
            + count_macs_depthwise(c_mid, kt, ks, t, h, w, stride)
            + count_macs_pointwise(c_mid, c_out, t, ho, wo))


def glore_terms(c, t, h, w):
    """GloRe MACs and params written term by term from the unit's dataflow."""
    L = t * h * w
    state, nodes = c // 2, c // 4
    terms = {
        "reduce": (c * state * L, c * state),
        "project": (c * nodes * L, c * nodes),
        "to_nodes": (state * nodes * L, 0),
        "gcn_node": (nodes * nodes * state, nodes * nodes),
        "gcn_state": (state * state * nodes, state * state),
        "reverse": (state * nodes * L, 0),
        "expand": (state * c * L, state * c + 2 * c),
    }
    return sum(f for f, _ in terms.values()), sum(p for _, p in terms.values())
