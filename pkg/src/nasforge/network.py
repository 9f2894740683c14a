"""Concrete MBConv-3D video network: parameter layout, init and forward pass.

The forward pass takes a name -> Tensor mapping, so the same code runs a
standalone network (owned arrays) and an activated supernet (slices of
super kernels).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import STEM_KERNEL, STEM_STRIDE, glore_dims, mid_channels
from .space import ArchitectureSpec, Attention, SearchSpace
from .tensor import (
    RunningStats,
    Tensor,
    add,
    batchnorm3d,
    conv3d,
    global_avg_pool,
    linear,
    matmul,
    parameter,
    relu,
    reshape,
    softmax_cross_entropy,
    swish,
    transpose,
)


@dataclass(frozen=True)
class BlockLayout:
    name: str
    c_in: int
    c_mid: int
    c_out: int
    kernel: tuple[int, int]  # (temporal, spatial)
    stride: int

    @property
    def residual(self) -> bool:
        return self.stride == 1 and self.c_in == self.c_out


def block_layouts(space: SearchSpace, arch: ArchitectureSpec) -> list[list[BlockLayout]]:
    if len(arch.choices) != len(space.groups):
        raise ValueError(f"architecture has {len(arch.choices)} choices, space has {len(space.groups)} groups")
    layouts = []
    c_in = space.stem_channels
    for g, (axes, choice) in enumerate(zip(space.groups, arch.choices), start=1):
        blocks = []
        for b in range(1, axes.num_blocks + 1):
            c_mid = mid_channels(choice.expansion, c_in)
            if c_mid < 1:
                raise ValueError(f"g{g}.b{b}: no mid channels for expansion {choice.expansion}")
            blocks.append(BlockLayout(
                f"g{g}.b{b}", c_in, c_mid, choice.channels,
                (choice.block_type.temporal_kernel, choice.block_type.spatial_kernel),
                axes.spatial_stride if b == 1 else 1,
            ))
            c_in = choice.channels
        layouts.append(blocks)
    return layouts


def _bn(shapes, prefix, c):
    shapes[prefix + ".gamma"] = (c,)
    shapes[prefix + ".beta"] = (c,)


def glore_shapes(prefix: str, c: int) -> dict:
    cs, nn = glore_dims(c)
    shapes = {
        prefix + ".reduce": (cs, c, 1, 1, 1),
        prefix + ".proj": (nn, c, 1, 1, 1),
        prefix + ".gcn_node": (nn, nn),
        prefix + ".gcn_state": (cs, cs),
        prefix + ".expand": (c, cs, 1, 1, 1),
    }
    _bn(shapes, prefix + ".bn", c)
    return shapes


def param_shapes(space: SearchSpace, arch: ArchitectureSpec) -> dict[str, tuple]:
    """Name -> shape of every parameter of the standalone network."""
    shapes = {"stem.conv": (space.stem_channels, space.input_channels) + STEM_KERNEL}
    _bn(shapes, "stem.bn", space.stem_channels)
    c_last = space.stem_channels
    for g, (blocks, choice) in enumerate(zip(block_layouts(space, arch), arch.choices), start=1):
        for bl in blocks:
            kt, ks = bl.kernel
            shapes[bl.name + ".expand"] = (bl.c_mid, bl.c_in, 1, 1, 1)
            _bn(shapes, bl.name + ".expand_bn", bl.c_mid)
            shapes[bl.name + ".dw"] = (bl.c_mid, 1, kt, ks, ks)
            _bn(shapes, bl.name + ".dw_bn", bl.c_mid)
            shapes[bl.name + ".project"] = (bl.c_out, bl.c_mid, 1, 1, 1)
            _bn(shapes, bl.name + ".project_bn", bl.c_out)
            c_last = bl.c_out
        if choice.attention is Attention.GLORE:
            shapes.update(glore_shapes(f"g{g}.glore", choice.channels))
        elif choice.attention is Attention.NON_LOCAL:
            raise NotImplementedError("non-local blocks are modeled for cost only")
    shapes["head.conv"] = (space.pool_dim, c_last, 1, 1, 1)
    _bn(shapes, "head.bn", space.pool_dim)
    shapes["head.fc.weight"] = (space.fc_dim, space.pool_dim)
    shapes["head.fc.bias"] = (space.fc_dim,)
    shapes["head.cls.weight"] = (space.num_classes, space.fc_dim)
    shapes["head.cls.bias"] = (space.num_classes,)
    return shapes


def init_array(name: str, shape: tuple, rng: np.random.Generator) -> np.ndarray:
    """He (fan-in) normal init for weights, unit gamma, zero beta/bias."""
    if name.endswith(".gamma"):
        return np.ones(shape)
    if name.endswith((".beta", ".bias")):
        return np.zeros(shape)
    fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else 1
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


def init_params(shapes: dict, rng: np.random.Generator) -> dict[str, np.ndarray]:
    return {name: init_array(name, shapes[name], rng) for name in sorted(shapes)}


def _bn_apply(x, params, prefix, train, stats):
    return batchnorm3d(x, params[prefix + ".gamma"], params[prefix + ".beta"], train=train,
                       stats=None if stats is None else stats.setdefault(
                           prefix, RunningStats(x.shape[1])))


def glore_forward(x: Tensor, params, prefix: str, train: bool = True, stats=None) -> Tensor:
    n, c, t, h, w = x.shape
    L = t * h * w
    state = reshape(conv3d(x, params[prefix + ".reduce"]), (n, -1, L))   # N x C' x L
    proj = reshape(conv3d(x, params[prefix + ".proj"]), (n, -1, L))      # N x Nn x L
    nodes = matmul(state, transpose(proj, (0, 2, 1)))                     # N x C' x Nn
    h1 = add(matmul(nodes, transpose(params[prefix + ".gcn_node"], (1, 0))), nodes)
    h2 = relu(matmul(params[prefix + ".gcn_state"], h1))                  # N x C' x Nn
    back = reshape(matmul(h2, proj), (n, -1, t, h, w))                    # N x C' x T x H x W
    y = _bn_apply(conv3d(back, params[prefix + ".expand"]), params, prefix + ".bn", train, stats)
    return add(x, y)


def mbconv_forward(x: Tensor, params, bl: BlockLayout, train: bool = True, stats=None) -> Tensor:
    h = conv3d(x, params[bl.name + ".expand"])
    h = relu(_bn_apply(h, params, bl.name + ".expand_bn", train, stats))
    h = conv3d(h, params[bl.name + ".dw"], stride=bl.stride, groups=bl.c_mid)
    h = swish(_bn_apply(h, params, bl.name + ".dw_bn", train, stats))
    h = conv3d(h, params[bl.name + ".project"])
    h = _bn_apply(h, params, bl.name + ".project_bn", train, stats)
    return add(h, x) if bl.residual else h


def forward_network(space: SearchSpace, arch: ArchitectureSpec, params, x: Tensor,
                    train: bool = True, stats: dict | None = None) -> Tensor:
    """Logits (N x num_classes) for input clips x (N x C x T x H x W).

    `stats` collects running batch-norm statistics keyed by layer name; in
    eval mode (train=False) they are required.
    """
    h = conv3d(x, params["stem.conv"], stride=STEM_STRIDE)
    h = relu(_bn_apply(h, params, "stem.bn", train, stats))
    for g, (blocks, choice) in enumerate(zip(block_layouts(space, arch), arch.choices), start=1):
        for bl in blocks:
            h = mbconv_forward(h, params, bl, train, stats)
        if choice.attention is Attention.GLORE:
            h = glore_forward(h, params, f"g{g}.glore", train, stats)
        elif choice.attention is Attention.NON_LOCAL:
            raise NotImplementedError("non-local blocks are modeled for cost only")
    h = relu(_bn_apply(conv3d(h, params["head.conv"]), params, "head.bn", train, stats))
    h = global_avg_pool(h)
    h = relu(linear(h, params["head.fc.weight"], params["head.fc.bias"]))
    return linear(h, params["head.cls.weight"], params["head.cls.bias"])


class Network:
    """A standalone architecture with its own parameters and BN statistics."""

    def __init__(self, space: SearchSpace, arch: ArchitectureSpec, weights: dict | None = None,
                 rng: np.random.Generator | None = None):
        self.space, self.arch = space, arch
        shapes = param_shapes(space, arch)
        if weights is None:
            weights = init_params(shapes, rng or np.random.default_rng(0))
        missing = set(shapes) - set(weights)
        if missing:
            raise KeyError(f"missing weights: {sorted(missing)[:5]}")
        for name, shape in shapes.items():
            if tuple(weights[name].shape) != tuple(shape):
                raise ValueError(f"{name}: weight shape {weights[name].shape} != {shape}")
        self.params = {name: parameter(np.array(weights[name], dtype=np.float64), name)
                       for name in sorted(shapes)}
        self.stats: dict[str, RunningStats] = {}

    def num_params(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def forward(self, x, train: bool = True) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        return forward_network(self.space, self.arch, self.params, x, train, self.stats)

    def loss(self, x, labels, train: bool = True):
        return softmax_cross_entropy(self.forward(x, train), labels)

    def weights(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}
