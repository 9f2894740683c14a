"""Analytical FLOPs and parameter accounting.

Conventions:
  * 1 FLOP = 1 multiply-accumulate.
  * Normalization, activation, bias, residual and softmax arithmetic is not
    counted in FLOPs; normalization affine parameters (gamma, beta) and
    linear-layer biases are counted in params.
  * "Same" padding everywhere, spatial size after a stride-s layer is
    ceil(H / s), the temporal length is never strided.

MBConv-3D block (expand 1x1x1 -> depthwise kt x ks x ks -> project 1x1x1):
the expand conv runs at the input resolution, the spatial stride is applied in
the depthwise conv, the project conv runs at the output resolution.  Each conv
is followed by batch norm.

GloRe unit on a C x L feature map (L = T*H*W), C' = C/2 state channels and
Nn = C/4 nodes:
    reduce    1x1 conv C -> C'            C*C'*L        params C*C'
    project   1x1 conv C -> Nn            C*Nn*L        params C*Nn
    to nodes  V (C' x L) @ B^T (L x Nn)   C'*Nn*L
    gcn node  conv1d over nodes Nn -> Nn  Nn*Nn*C'      params Nn*Nn
    gcn state conv1d over state C' -> C'  C'*C'*Nn      params C'*C'
    reverse   Z (C' x Nn) @ B (Nn x L)    C'*Nn*L
    expand    1x1 conv C' -> C            C'*C*L        params C'*C + BN 2C

Non-local (embedded Gaussian, C/2 bottleneck):
    theta/phi/g  3 x (C*C/2*L)    affinity  L*L*C/2    aggregate  L*L*C/2
    output       C/2*C*L + BN 2C
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .space import (
    ArchitectureSpec,
    Attention,
    GroupChoice,
    SearchSpace,
    get_space,
)

GLORE_STATE_DIVISOR = 2
GLORE_NODE_DIVISOR = 4
NONLOCAL_DIVISOR = 2
STEM_KERNEL = (1, 3, 3)
STEM_STRIDE = 2


@dataclass(frozen=True)
class TensorShape:
    channels: int
    frames: int
    height: int
    width: int

    def __post_init__(self):
        if min(self.channels, self.frames, self.height, self.width) < 1:
            raise ValueError(f"zero-sized shape {self}")

    @property
    def positions(self) -> int:
        return self.frames * self.height * self.width

    def __str__(self) -> str:
        return f"{self.channels}x{self.frames}x{self.height}x{self.width}"

    @classmethod
    def parse(cls, text: str, channels: int | None = None) -> "TensorShape":
        """'CxTxS' (square frames) or 'CxTxHxW'."""
        parts = [int(p) for p in text.lower().split("x")]
        if len(parts) == 3:
            c, t, s = parts
            return cls(c, t, s, s)
        if len(parts) == 4:
            return cls(*parts)
        raise ValueError(f"bad shape {text!r}, expected CxTxS or CxTxHxW")


@dataclass(frozen=True)
class BlockCost:
    label: str
    flops: int
    params: int
    out_shape: TensorShape


@dataclass
class CostReport:
    per_block: list[BlockCost] = field(default_factory=list)

    @property
    def total_flops(self) -> int:
        return sum(b.flops for b in self.per_block)

    @property
    def total_params(self) -> int:
        return sum(b.params for b in self.per_block)

    def to_json(self) -> dict:
        return {
            "total_flops": self.total_flops,
            "total_params": self.total_params,
            "per_block": [
                {"label": b.label, "flops": b.flops, "params": b.params,
                 "out_shape": [b.out_shape.channels, b.out_shape.frames,
                               b.out_shape.height, b.out_shape.width]}
                for b in self.per_block
            ],
        }


def mid_channels(expansion: Fraction, in_channels: int) -> int:
    """round(expansion * C_in), halves rounded up."""
    x = Fraction(expansion) * in_channels
    return math.floor(x + Fraction(1, 2))


def _down(n: int, stride: int) -> int:
    return -(-n // stride)


def flops_mbconv3d(choice: GroupChoice, in_shape: TensorShape, out_channels: int,
                   stride: int) -> tuple[int, int, TensorShape]:
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    if out_channels < 1:
        raise ValueError("zero output channels")
    c_in = in_shape.channels
    c_mid = mid_channels(choice.expansion, c_in)
    if c_mid < 1:
        raise ValueError(f"expansion {choice.expansion} x {c_in} channels leaves no mid channels")
    kt, ks = choice.block_type.temporal_kernel, choice.block_type.spatial_kernel
    out = TensorShape(out_channels, in_shape.frames,
                      _down(in_shape.height, stride), _down(in_shape.width, stride))
    flops = (c_in * c_mid * in_shape.positions
             + c_mid * kt * ks * ks * out.positions
             + c_mid * out_channels * out.positions)
    params = (c_in * c_mid + 2 * c_mid
              + c_mid * kt * ks * ks + 2 * c_mid
              + c_mid * out_channels + 2 * out_channels)
    return flops, params, out


def glore_dims(channels: int) -> tuple[int, int]:
    """(state channels, node count) of a GloRe unit on `channels` inputs."""
    if channels % GLORE_STATE_DIVISOR:
        raise ValueError(f"GloRe needs an even channel count, got {channels}")
    return channels // GLORE_STATE_DIVISOR, max(1, channels // GLORE_NODE_DIVISOR)


def flops_attention(kind: Attention, shape: TensorShape) -> tuple[int, int]:
    kind = Attention(kind)
    c, L = shape.channels, shape.positions
    if kind is Attention.PASS_THROUGH:
        return 0, 0
    if kind is Attention.GLORE:
        cs, nn = glore_dims(c)
        flops = (c * cs * L + c * nn * L + cs * nn * L
                 + nn * nn * cs + cs * cs * nn
                 + cs * nn * L + cs * c * L)
        params = c * cs + c * nn + nn * nn + cs * cs + cs * c + 2 * c
        return flops, params
    if c % NONLOCAL_DIVISOR:
        raise ValueError(f"non-local block needs an even channel count, got {c}")
    ci = c // NONLOCAL_DIVISOR
    flops = 3 * c * ci * L + 2 * L * L * ci + ci * c * L
    params = 3 * c * ci + ci * c + 2 * c
    return flops, params


def stem_cost(space: SearchSpace, shape: TensorShape) -> tuple[int, int, TensorShape]:
    kt, kh, kw = STEM_KERNEL
    out = TensorShape(space.stem_channels, shape.frames,
                      _down(shape.height, STEM_STRIDE), _down(shape.width, STEM_STRIDE))
    flops = shape.channels * space.stem_channels * kt * kh * kw * out.positions
    params = shape.channels * space.stem_channels * kt * kh * kw + 2 * space.stem_channels
    return flops, params, out


def head_cost(space: SearchSpace, shape: TensorShape) -> tuple[int, int]:
    """1x1x1 conv to pool_dim (+BN), global pool, fc (+bias), classifier (+bias)."""
    flops = (shape.channels * space.pool_dim * shape.positions
             + space.pool_dim * space.fc_dim + space.fc_dim * space.num_classes)
    params = (shape.channels * space.pool_dim + 2 * space.pool_dim
              + space.pool_dim * space.fc_dim + space.fc_dim
              + space.fc_dim * space.num_classes + space.num_classes)
    return flops, params


def cost_report(arch: ArchitectureSpec, input: TensorShape | None = None,
                space: SearchSpace | None = None) -> CostReport:
    """Walk stem -> groups (+ attention after each group) -> head.

    Grid membership is not required: any architecture with one choice per
    group of the space's skeleton has a well-defined cost.
    """
    space = space or get_space(arch.space_id)
    if len(arch.choices) != len(space.groups):
        raise ValueError(f"architecture has {len(arch.choices)} choices, "
                         f"space {space.space_id!r} has {len(space.groups)} groups")
    if input is None:
        input = TensorShape(space.input_channels, space.input_frames,
                            space.input_spatial, space.input_spatial)
    report = CostReport()
    f, p, shape = stem_cost(space, input)
    report.per_block.append(BlockCost("stem", f, p, shape))
    for g, (axes, choice) in enumerate(zip(space.groups, arch.choices), start=1):
        for b in range(1, axes.num_blocks + 1):
            label = f"g{g}.b{b}"
            stride = axes.spatial_stride if b == 1 else 1
            try:
                f, p, shape = flops_mbconv3d(choice, shape, choice.channels, stride)
            except ValueError as exc:
                raise ValueError(f"{label}: {exc}") from None
            report.per_block.append(BlockCost(label, f, p, shape))
        if choice.attention is not Attention.PASS_THROUGH:
            try:
                f, p = flops_attention(choice.attention, shape)
            except ValueError as exc:
                raise ValueError(f"g{g}.attn: {exc}") from None
            report.per_block.append(BlockCost(f"g{g}.attn", f, p, shape))
    f, p = head_cost(space, shape)
    report.per_block.append(BlockCost("head", f, p, TensorShape(space.num_classes, 1, 1, 1)))
    return report


def hinge_cost(flops, target) -> float:
    """max(flops - T, 0) / T."""
    if target <= 0:
        raise ValueError("target FLOPs must be positive")
    return max(flops - target, 0) / target
