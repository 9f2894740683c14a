"""Weight-shared supernet over a search space.

Each block owns super kernels sized to the maxima of its group's axes.  An
architecture activates one slice per layer:

* depthwise kernels are cut around the center (t1_s3 reads the middle plane
  and central 3x3 of a 5x5x5 kernel);
* output channels of a group are laid out as an always-on base of
  ``c_min - step`` channels followed by N parts of ``step`` channels, one per
  grid candidate; candidate i uses the base plus the parts its FairPattern
  row assigns to it (fair or naive schedule);
* mid channels of a block follow the same base + parts layout over the
  expansion grid, with part width ``expansion_step * C_in``.

Channel indices are physical: the input columns of a layer are the output
channel indices activated in the layer that feeds it, so every super-kernel
entry always couples the same pair of physical channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cost import glore_dims, mid_channels
from .fair import FairPattern, make_pattern
from .network import block_layouts, forward_network, glore_shapes, init_array, param_shapes
from .space import ArchitectureSpec, Attention, SearchSpace, validate_spec
from .tensor import Tensor, parameter, softmax_cross_entropy, take

DEFAULT_MAX_PARAMS = 50_000_000


@dataclass(frozen=True)
class PartLayout:
    """Base + N equal parts of a super-kernel channel axis."""

    base: int
    part: int
    n_parts: int

    @property
    def width(self) -> int:
        return self.base + self.n_parts * self.part

    def indices(self, parts) -> np.ndarray:
        chunks = [np.arange(self.base)]
        chunks += [np.arange(self.base + j * self.part, self.base + (j + 1) * self.part)
                   for j in sorted(parts)]
        return np.concatenate(chunks).astype(np.intp)

    def part_indices(self, j: int) -> np.ndarray:
        return np.arange(self.base + j * self.part, self.base + (j + 1) * self.part)


def channel_layout(widths) -> PartLayout:
    """Layout for an arithmetic ladder of widths w_1 < ... < w_N."""
    widths = list(widths)
    n = len(widths)
    step = widths[1] - widths[0] if n > 1 else widths[0]
    base = widths[0] - step
    if base < 0 or step <= 0 or any(w != base + (i + 1) * step for i, w in enumerate(widths)):
        raise ValueError(f"widths {widths} do not form a base + equal-parts ladder")
    return PartLayout(base, step, n)


@dataclass
class GroupPlan:
    channel_index: int      # 0-based candidate on the channel grid
    expansion_index: int    # 0-based candidate on the expansion grid
    out_idx: np.ndarray     # active physical output channels
    attention: Attention


@dataclass
class ActivationPlan:
    arch: ArchitectureSpec
    groups: list[GroupPlan]
    slices: dict = field(default_factory=dict)  # standalone name -> (super name, index tuple)


class Supernet:
    def __init__(self, space: SearchSpace, pattern_mode: str = "fair",
                 expansion_mode: str = "pattern", seed: int = 0,
                 rng: np.random.Generator | None = None, max_params: int = DEFAULT_MAX_PARAMS):
        if expansion_mode not in ("pattern", "prefix"):
            raise ValueError(f"unknown expansion mode {expansion_mode!r}")
        for g, axes in enumerate(space.groups, start=1):
            if Attention.NON_LOCAL in axes.attention_kinds:
                raise NotImplementedError(f"group {g}: non-local blocks are modeled for cost only")
        self.space = space
        self.pattern_mode = pattern_mode
        self.expansion_mode = expansion_mode
        self.seed = seed
        self.channel_patterns: list[FairPattern] = []
        self.expansion_patterns: list[FairPattern] = []
        self.channel_layouts: list[PartLayout] = []
        for axes in space.groups:
            self.channel_layouts.append(channel_layout(axes.channels))
            self.channel_patterns.append(make_pattern(len(axes.channels), pattern_mode))
            self.expansion_patterns.append(make_pattern(
                len(axes.expansions), pattern_mode if expansion_mode == "pattern" else "naive"))
        shapes = super_shapes(space)
        total = sum(int(np.prod(s)) for s in shapes.values())
        if total > max_params:
            raise MemoryError(f"supernet needs {total:,} parameters "
                              f"({total * 8 / 2**20:.1f} MiB), limit is {max_params:,}")
        rng = rng or np.random.default_rng(seed)
        self.params: dict[str, Tensor] = {
            name: parameter(init_array(name, shapes[name], rng), name) for name in sorted(shapes)
        }

    # -- bookkeeping ---------------------------------------------------
    def num_params(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def grads(self) -> dict:
        return {k: p.grad for k, p in self.params.items() if p.grad is not None}

    def masks(self) -> dict:
        return {k: p.mask for k, p in self.params.items() if p.mask is not None}

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: p.data for k, p in self.params.items()}

    def mid_layout(self, g: int, c_in: int) -> PartLayout:
        axes = self.space.groups[g]
        return channel_layout([mid_channels(e, c_in) for e in axes.expansions])

    # -- activation ----------------------------------------------------
    def activate(self, arch: ArchitectureSpec) -> ActivationPlan:
        check = validate_spec(self.space, arch)
        if not check.ok:
            raise ValueError("architecture does not match the supernet space: " + "; ".join(check.errors))
        plan = ActivationPlan(arch, [])
        sl = plan.slices
        in_idx = np.arange(self.space.stem_channels)
        sl["stem.conv"] = ("stem.conv", (None,))
        sl["stem.bn.gamma"] = ("stem.bn.gamma", (None,))
        sl["stem.bn.beta"] = ("stem.bn.beta", (None,))
        layouts = block_layouts(self.space, arch)
        for g, (axes, choice, blocks) in enumerate(zip(self.space.groups, arch.choices, layouts)):
            ci = axes.channels.index(choice.channels)
            ei = axes.expansions.index(choice.expansion)
            out_idx = self.channel_layouts[g].indices(self.channel_patterns[g].rows()[ci])
            kt_max = max(b.temporal_kernel for b in axes.block_types)
            ks_max = max(b.spatial_kernel for b in axes.block_types)
            kt, ks = choice.block_type.temporal_kernel, choice.block_type.spatial_kernel
            t_idx = np.arange((kt_max - kt) // 2, (kt_max - kt) // 2 + kt)
            s_idx = np.arange((ks_max - ks) // 2, (ks_max - ks) // 2 + ks)
            for bl in blocks:
                mid_idx = self.mid_layout(g, bl.c_in).indices(self.expansion_patterns[g].rows()[ei])
                assert len(mid_idx) == bl.c_mid and len(in_idx) == bl.c_in
                n = bl.name
                sl[n + ".expand"] = (n + ".expand", (mid_idx, in_idx))
                sl[n + ".dw"] = (n + ".dw", (mid_idx, None, t_idx, s_idx, s_idx))
                sl[n + ".project"] = (n + ".project", (out_idx, mid_idx))
                for bn, idx in ((".expand_bn", mid_idx), (".dw_bn", mid_idx), (".project_bn", out_idx)):
                    sl[n + bn + ".gamma"] = (n + bn + ".gamma", (idx,))
                    sl[n + bn + ".beta"] = (n + bn + ".beta", (idx,))
                in_idx = out_idx
            if choice.attention is Attention.GLORE:
                p = f"g{g + 1}.glore"
                cs, nn = glore_dims(len(out_idx))
                cs_idx, nn_idx = np.arange(cs), np.arange(nn)
                sl[p + ".reduce"] = (p + ".reduce", (cs_idx, out_idx))
                sl[p + ".proj"] = (p + ".proj", (nn_idx, out_idx))
                sl[p + ".gcn_node"] = (p + ".gcn_node", (nn_idx, nn_idx))
                sl[p + ".gcn_state"] = (p + ".gcn_state", (cs_idx, cs_idx))
                sl[p + ".expand"] = (p + ".expand", (out_idx, cs_idx))
                sl[p + ".bn.gamma"] = (p + ".bn.gamma", (out_idx,))
                sl[p + ".bn.beta"] = (p + ".bn.beta", (out_idx,))
            plan.groups.append(GroupPlan(ci, ei, out_idx, choice.attention))
        sl["head.conv"] = ("head.conv", (None, in_idx))
        for name in ("head.bn.gamma", "head.bn.beta", "head.fc.weight", "head.fc.bias",
                     "head.cls.weight", "head.cls.bias"):
            sl[name] = (name, (None,))
        return plan

    def plan_params(self, plan: ActivationPlan) -> dict[str, Tensor]:
        return {name: take(self.params[src], idx) for name, (src, idx) in plan.slices.items()}

    def forward(self, plan: ActivationPlan, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        return forward_network(self.space, plan.arch, self.plan_params(plan), x, train=True)

    def forward_loss(self, plan: ActivationPlan, batch) -> tuple[Tensor, np.ndarray]:
        x, labels = batch
        return softmax_cross_entropy(self.forward(plan, x), labels)

    def extract_standalone(self, arch: ArchitectureSpec) -> dict[str, np.ndarray]:
        plan = self.activate(arch)
        out = {}
        for name, (src, idx) in plan.slices.items():
            data = self.params[src].data
            full = [np.arange(n) if i is None else np.asarray(i) for i, n in
                    zip(list(idx) + [None] * (data.ndim - len(idx)), data.shape)]
            out[name] = data[np.ix_(*full)].copy()
        expected = param_shapes(self.space, arch)
        assert set(expected) == set(out), set(expected) ^ set(out)
        return out

    def manifest(self) -> dict:
        return {"space_id": self.space.space_id, "space_hash": self.space.digest(),
                "pattern_mode": self.pattern_mode, "expansion_mode": self.expansion_mode,
                "seed": self.seed}


def super_shapes(space: SearchSpace) -> dict[str, tuple]:
    """Super-kernel shapes at the per-axis maxima of every group."""
    shapes = {"stem.conv": (space.stem_channels, space.input_channels, 1, 3, 3),
              "stem.bn.gamma": (space.stem_channels,), "stem.bn.beta": (space.stem_channels,)}
    c_in_options = [space.stem_channels]
    for g, axes in enumerate(space.groups, start=1):
        c_out = axes.channel_max
        kt = max(b.temporal_kernel for b in axes.block_types)
        ks = max(b.spatial_kernel for b in axes.block_types)
        for b in range(1, axes.num_blocks + 1):
            widths = [channel_layout([mid_channels(e, c) for e in axes.expansions]).width
                      for c in c_in_options]
            m, c_in = max(widths), max(c_in_options)
            n = f"g{g}.b{b}"
            shapes[n + ".expand"] = (m, c_in, 1, 1, 1)
            shapes[n + ".dw"] = (m, 1, kt, ks, ks)
            shapes[n + ".project"] = (c_out, m, 1, 1, 1)
            for bn, c in ((".expand_bn", m), (".dw_bn", m), (".project_bn", c_out)):
                shapes[n + bn + ".gamma"] = (c,)
                shapes[n + bn + ".beta"] = (c,)
            c_in_options = list(axes.channels)
        if Attention.GLORE in axes.attention_kinds:
            shapes.update(glore_shapes(f"g{g}.glore", c_out))
    c_last = max(c_in_options)
    shapes["head.conv"] = (space.pool_dim, c_last, 1, 1, 1)
    shapes["head.bn.gamma"] = (space.pool_dim,)
    shapes["head.bn.beta"] = (space.pool_dim,)
    shapes["head.fc.weight"] = (space.fc_dim, space.pool_dim)
    shapes["head.fc.bias"] = (space.fc_dim,)
    shapes["head.cls.weight"] = (space.num_classes, space.fc_dim)
    shapes["head.cls.bias"] = (space.num_classes,)
    return shapes


def build_supernet(space: SearchSpace, pattern_mode: str = "fair", rng=None, seed: int = 0,
                   **kwargs) -> Supernet:
    return Supernet(space, pattern_mode=pattern_mode, seed=seed, rng=rng, **kwargs)
