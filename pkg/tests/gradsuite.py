"""Finite-difference cases covering every differentiable op plus a full
MBConv-3D block followed by a GloRe unit."""

from __future__ import annotations

import numpy as np

from nasforge.network import BlockLayout, glore_forward, glore_shapes, init_params, mbconv_forward
from nasforge.tensor import (
    RunningStats,
    Tensor,
    add,
    batchnorm3d,
    conv3d,
    finite_diff_check,
    global_avg_pool,
    linear,
    matmul,
    mul,
    parameter,
    relu,
    reshape,
    softmax_cross_entropy,
    swish,
    take,
    transpose,
)

TOL = 1e-4


def _case(name, build, params, rng, max_per_param=None):
    probe = {}  # random linear read-out so every output entry carries gradient

    def f():
        out = build()
        if out.data.size == 1:
            return out
        if "p" not in probe:
            probe["p"] = Tensor(rng.standard_normal(out.shape))
        return mul(out, probe["p"]).sum()

    return name, finite_diff_check(f, params, eps=1e-6, tol=TOL, max_per_param=max_per_param,
                                   rng=np.random.default_rng(0))


def elementary_cases(seed: int = 0):
    rng = np.random.default_rng(seed)
    P = lambda *shape: parameter(rng.standard_normal(shape))  # noqa: E731
    a, b, row = P(3, 4), P(3, 4), P(1, 4)
    x5 = P(2, 3, 2, 4, 4)
    m1, m2 = P(2, 3, 4), P(4, 5)
    yield _case("add_broadcast", lambda: add(a, row), [a, row], rng)
    yield _case("mul", lambda: mul(a, b), [a, b], rng)
    yield _case("sum", lambda: a.sum(), [a], rng)
    yield _case("reshape", lambda: reshape(a, (4, 3)), [a], rng)
    yield _case("transpose", lambda: transpose(x5, (0, 2, 1, 4, 3)), [x5], rng)
    yield _case("matmul_batched", lambda: matmul(m1, m2), [m1, m2], rng)
    yield _case("take", lambda: take(a, [[0, 2], None]), [a], rng)
    shifted = parameter(rng.standard_normal((3, 4)) + np.sign(rng.standard_normal((3, 4))) * 0.05)
    yield _case("relu", lambda: relu(shifted), [shifted], rng)
    yield _case("swish", lambda: swish(a), [a], rng)
    gamma, beta = parameter(1 + 0.1 * rng.standard_normal(3)), P(3)
    yield _case("batchnorm_train", lambda: batchnorm3d(x5, gamma, beta, train=True), [x5, gamma, beta], rng)
    stats = RunningStats(3)
    stats.mean, stats.var = rng.standard_normal(3), 0.5 + rng.random(3)
    yield _case("batchnorm_eval", lambda: batchnorm3d(x5, gamma, beta, train=False, stats=stats),
                [x5, gamma, beta], rng)
    yield _case("global_avg_pool", lambda: global_avg_pool(x5), [x5], rng)
    w, bias, xin = P(5, 4), P(5), P(3, 4)
    yield _case("linear", lambda: linear(xin, w, bias), [xin, w, bias], rng)
    labels = np.array([0, 3, 1])
    yield _case("softmax_cross_entropy", lambda: softmax_cross_entropy(linear(xin, w, bias), labels)[0],
                [xin, w, bias], rng)
    for k, stride, groups in [((1, 1, 1), 1, 1), ((1, 1, 1), 2, 1), ((3, 3, 3), 1, 1), ((1, 3, 3), 2, 1),
                              ((3, 3, 3), 1, 3), ((5, 5, 5), 2, 3), ((1, 3, 3), 2, 3), ((3, 5, 5), 1, 3)]:
        cin = 3
        cout = 3 if groups != 1 else 4
        xc = P(2, cin, 3, 5, 5)
        wc = parameter(rng.standard_normal((cout, 1 if groups != 1 else cin) + k))
        yield _case(f"conv3d_k{''.join(map(str, k))}_s{stride}_{'dw' if groups != 1 else 'dense'}",
                    lambda xc=xc, wc=wc, stride=stride, groups=groups: conv3d(xc, wc, stride, groups),
                    [xc, wc], rng)


def block_case(seed: int = 0):
    """A toy MBConv-3D block (t3_s3, stride 2, expansion 2) feeding a GloRe unit."""
    rng = np.random.default_rng(seed)
    bl = BlockLayout("g1.b1", c_in=4, c_mid=8, c_out=8, kernel=(3, 3), stride=2)
    shapes = {
        "g1.b1.expand": (8, 4, 1, 1, 1), "g1.b1.dw": (8, 1, 3, 3, 3), "g1.b1.project": (8, 8, 1, 1, 1),
    }
    for bn, c in (("expand_bn", 8), ("dw_bn", 8), ("project_bn", 8)):
        shapes[f"g1.b1.{bn}.gamma"], shapes[f"g1.b1.{bn}.beta"] = (c,), (c,)
    shapes.update(glore_shapes("g1.glore", 8))
    arrays = init_params(shapes, rng)
    # nudge affine terms away from their init so their gradients are generic
    for k in arrays:
        if k.endswith((".gamma", ".beta")):
            arrays[k] = arrays[k] + 0.2 * rng.standard_normal(arrays[k].shape)
    params = {k: parameter(v, k) for k, v in arrays.items()}
    x = parameter(rng.standard_normal((2, 4, 3, 6, 6)), "x")
    labels = np.array([1, 0])
    head = parameter(rng.standard_normal((2, 8)) * 0.5, "head")

    def build():
        h = mbconv_forward(x, params, bl, train=True)
        h = glore_forward(h, params, "g1.glore", train=True)
        logits = linear(global_avg_pool(h), head)
        return softmax_cross_entropy(logits, labels)[0]

    return _case("mbconv3d_glore_block", build, [x, head] + [params[k] for k in sorted(params)], rng,
                 max_per_param=24)


def all_cases(seed: int = 0):
    yield from elementary_cases(seed)
    yield block_case(seed)
