"""Design space: choice axes per block group, concrete architectures, presets.

A search space is a fixed macro skeleton (stem, an ordered list of MBConv-3D
block groups, head).  Each group exposes four choice axes: depthwise block
type, output channels, expansion ratio and the attention block inserted after
the group.  All blocks inside a group share the group's choices.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Iterator, Sequence

SCHEMA_VERSION = "v1"


class SchemaError(ValueError):
    """Malformed or version-mismatched space/architecture document."""


@dataclass(frozen=True, order=True)
class BlockType:
    temporal_kernel: int
    spatial_kernel: int

    def __post_init__(self):
        if self.temporal_kernel not in (1, 3, 5) or self.spatial_kernel not in (3, 5):
            raise ValueError(
                f"unsupported block type t{self.temporal_kernel}_s{self.spatial_kernel}"
            )

    @property
    def name(self) -> str:
        return f"t{self.temporal_kernel}_s{self.spatial_kernel}"

    @classmethod
    def parse(cls, name: str) -> "BlockType":
        try:
            t, s = name.split("_")
            if t[0] != "t" or s[0] != "s":
                raise ValueError
            return cls(int(t[1:]), int(s[1:]))
        except (ValueError, IndexError):
            raise ValueError(f"bad block type {name!r}") from None

    def __str__(self) -> str:
        return self.name


ALL_BLOCK_TYPES = tuple(BlockType(t, s) for t in (1, 3, 5) for s in (3, 5))


class Attention(str, enum.Enum):
    PASS_THROUGH = "pass_through"
    GLORE = "glore"
    NON_LOCAL = "non_local"

    def __str__(self) -> str:
        return self.value


def as_fraction(x) -> Fraction:
    """Exact rational from an int, Fraction or decimal string/float literal."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        x = repr(x)
    return Fraction(str(x))


def format_ratio(x: Fraction) -> str:
    """Decimal string for a terminating rational (multiples of 0.75 etc.)."""
    x = as_fraction(x)
    den = x.denominator
    k = 0
    while den % 2 == 0 or den % 5 == 0:
        den //= 2 if den % 2 == 0 else 5
        k += 1
    if den != 1:
        raise ValueError(f"{x} has no finite decimal form")
    s = f"{x.numerator * 10**k // x.denominator:d}"
    if k == 0:
        return s
    neg = s.startswith("-")
    s = s.lstrip("-").rjust(k + 1, "0")
    s = s[:-k] + "." + s[-k:]
    s = s.rstrip("0").rstrip(".")
    return "-" + s if neg else s


def _grid(lo, hi, step) -> tuple:
    n, rem = divmod(hi - lo, step)
    if rem != 0 or n < 0:
        raise ValueError(f"range {lo}..{hi} is not divisible by step {step}")
    return tuple(lo + i * step for i in range(int(n) + 1))


@dataclass(frozen=True)
class GroupAxes:
    """Choice axes of one block group."""

    block_types: tuple[BlockType, ...]
    channel_min: int
    channel_max: int
    channel_step: int
    expansion_min: Fraction
    expansion_max: Fraction
    expansion_step: Fraction
    attention_kinds: tuple[Attention, ...]
    num_blocks: int
    spatial_stride: int

    def __post_init__(self):
        object.__setattr__(self, "block_types", tuple(self.block_types))
        object.__setattr__(self, "attention_kinds", tuple(Attention(a) for a in self.attention_kinds))
        for name in ("expansion_min", "expansion_max", "expansion_step"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        if not self.block_types or not self.attention_kinds:
            raise ValueError("every choice list needs at least one entry")
        if min(self.channel_min, self.channel_step, self.num_blocks) < 1:
            raise ValueError("channels, step and block count must be positive")
        if self.expansion_min <= 0 or self.expansion_step <= 0:
            raise ValueError("expansion range must be positive")
        if self.spatial_stride not in (1, 2):
            raise ValueError("spatial stride must be 1 or 2")
        _grid(self.channel_min, self.channel_max, self.channel_step)
        _grid(self.expansion_min, self.expansion_max, self.expansion_step)

    @cached_property
    def channels(self) -> tuple[int, ...]:
        return _grid(self.channel_min, self.channel_max, self.channel_step)

    @cached_property
    def expansions(self) -> tuple[Fraction, ...]:
        return _grid(self.expansion_min, self.expansion_max, self.expansion_step)

    def axis(self, name: str) -> tuple:
        return {
            "block_type": self.block_types,
            "channels": self.channels,
            "expansion": self.expansions,
            "attention": self.attention_kinds,
        }[name]

    @property
    def size(self) -> int:
        return (len(self.block_types) * len(self.channels)
                * len(self.expansions) * len(self.attention_kinds))


AXES = ("block_type", "channels", "expansion", "attention")


@dataclass(frozen=True)
class SearchSpace:
    space_id: str
    input_channels: int
    input_frames: int
    input_spatial: int
    stem_channels: int
    groups: tuple[GroupAxes, ...]
    pool_dim: int
    fc_dim: int
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        if not self.groups:
            raise ValueError("a space needs at least one group")
        dims = (self.input_channels, self.input_frames, self.input_spatial,
                self.stem_channels, self.pool_dim, self.fc_dim, self.num_classes)
        if min(dims) < 1:
            raise ValueError("space dimensions must be positive")

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "space_id": self.space_id,
            "input": {"c": self.input_channels, "t": self.input_frames, "s": self.input_spatial},
            "stem": self.stem_channels,
            "groups": [
                {
                    "types": [b.name for b in g.block_types],
                    "channels": {"min": g.channel_min, "max": g.channel_max, "step": g.channel_step},
                    "expansion": {
                        "min": format_ratio(g.expansion_min),
                        "max": format_ratio(g.expansion_max),
                        "step": format_ratio(g.expansion_step),
                    },
                    "attention": [a.value for a in g.attention_kinds],
                    "blocks": g.num_blocks,
                    "stride": g.spatial_stride,
                }
                for g in self.groups
            ],
            "head": {"pool": self.pool_dim, "fc": self.fc_dim, "classes": self.num_classes},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SearchSpace":
        _check_schema(doc)
        try:
            groups = [
                GroupAxes(
                    block_types=[BlockType.parse(t) for t in g["types"]],
                    channel_min=int(g["channels"]["min"]),
                    channel_max=int(g["channels"]["max"]),
                    channel_step=int(g["channels"]["step"]),
                    expansion_min=as_fraction(g["expansion"]["min"]),
                    expansion_max=as_fraction(g["expansion"]["max"]),
                    expansion_step=as_fraction(g["expansion"]["step"]),
                    attention_kinds=[Attention(a) for a in g["attention"]],
                    num_blocks=int(g["blocks"]),
                    spatial_stride=int(g["stride"]),
                )
                for g in doc["groups"]
            ]
            return cls(
                space_id=str(doc.get("space_id", "custom")),
                input_channels=int(doc["input"]["c"]),
                input_frames=int(doc["input"]["t"]),
                input_spatial=int(doc["input"]["s"]),
                stem_channels=int(doc["stem"]),
                groups=groups,
                pool_dim=int(doc["head"]["pool"]),
                fc_dim=int(doc["head"]["fc"]),
                num_classes=int(doc["head"]["classes"]),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed space document: {exc!r}") from None

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class GroupChoice:
    block_type: BlockType
    channels: int
    expansion: Fraction
    attention: Attention = Attention.PASS_THROUGH

    def __post_init__(self):
        object.__setattr__(self, "expansion", as_fraction(self.expansion))
        object.__setattr__(self, "attention", Attention(self.attention))

    def value(self, axis: str):
        return getattr(self, axis)

    def to_json(self) -> dict:
        return {
            "type": self.block_type.name,
            "channels": self.channels,
            "expansion": format_ratio(self.expansion),
            "attention": self.attention.value,
        }


@dataclass(frozen=True)
class ArchitectureSpec:
    space_id: str
    choices: tuple[GroupChoice, ...]

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple(self.choices))

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "space_id": self.space_id,
            "choices": [c.to_json() for c in self.choices],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ArchitectureSpec":
        _check_schema(doc)
        try:
            choices = [
                GroupChoice(
                    block_type=BlockType.parse(c["type"]),
                    channels=int(c["channels"]),
                    expansion=as_fraction(c["expansion"]),
                    attention=Attention(c["attention"]),
                )
                for c in doc["choices"]
            ]
            return cls(space_id=str(doc["space_id"]), choices=choices)
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed architecture document: {exc!r}") from None


def _check_schema(doc):
    if not isinstance(doc, dict):
        raise SchemaError("document must be a JSON object")
    version = doc.get("schema")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"schema version {version!r} not supported (expected {SCHEMA_VERSION!r})")


@dataclass
class ValidationResult:
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        return self.ok


def validate_spec(space: SearchSpace, arch: ArchitectureSpec) -> ValidationResult:
    result = ValidationResult()
    if len(arch.choices) != len(space.groups):
        result.errors.append(
            f"length mismatch: architecture has {len(arch.choices)} choices, "
            f"space has {len(space.groups)} groups"
        )
        return result
    for g, (axes, choice) in enumerate(zip(space.groups, arch.choices), start=1):
        if choice.block_type not in axes.block_types:
            result.errors.append(f"group {g}: block_type {choice.block_type} not among "
                                 f"{[b.name for b in axes.block_types]}")
        if choice.channels not in axes.channels:
            result.errors.append(f"group {g}: channel {choice.channels} not on step grid "
                                 f"{axes.channel_min}..{axes.channel_max}/{axes.channel_step}")
        if choice.expansion not in axes.expansions:
            result.errors.append(f"group {g}: expansion {format_ratio(choice.expansion)} not on step grid "
                                 f"{format_ratio(axes.expansion_min)}..{format_ratio(axes.expansion_max)}"
                                 f"/{format_ratio(axes.expansion_step)}")
        if choice.attention not in axes.attention_kinds:
            result.errors.append(f"group {g}: attention {choice.attention} not among "
                                 f"{[a.value for a in axes.attention_kinds]}")
    return result


@dataclass(frozen=True)
class Cardinality:
    count: int

    @property
    def log10(self) -> float:
        return math.log10(self.count)


def cardinality(space: SearchSpace) -> Cardinality:
    return Cardinality(math.prod(g.size for g in space.groups))


def enumerate_architectures(space: SearchSpace) -> Iterator[ArchitectureSpec]:
    per_group = [
        [GroupChoice(b, c, e, a)
         for b, c, e, a in itertools.product(g.block_types, g.channels, g.expansions, g.attention_kinds)]
        for g in space.groups
    ]
    for combo in itertools.product(*per_group):
        yield ArchitectureSpec(space.space_id, combo)


# ---------------------------------------------------------------------------
# presets

MACRO_BLOCKS = (1, 2, 2, 3, 2, 3, 3, 3, 2, 2, 3)
MACRO_STRIDES = (2, 1, 2, 1, 2, 1, 1, 1, 2, 1, 1)
MACRO_CHANNELS = ((12, 28, 4),) * 2 + ((24, 64, 8),) * 2 + ((48, 132, 12),) * 4 + ((96, 264, 24),) * 3
MACRO_STAGE_OF_GROUP = (1, 1, 2, 2, 3, 3, 3, 3, 4, 4, 4)

FULL_ATTENTION = (Attention.PASS_THROUGH, Attention.GLORE, Attention.NON_LOCAL)
GLORE_ATTENTION = (Attention.PASS_THROUGH, Attention.GLORE)


def macro_space(attention: Sequence[Attention] = FULL_ATTENTION,
                num_classes: int = 400) -> SearchSpace:
    """The 11-group video macro space searched at 3x13x160^2."""
    attention = tuple(Attention(a) for a in attention)
    groups = [
        GroupAxes(
            block_types=ALL_BLOCK_TYPES,
            channel_min=lo, channel_max=hi, channel_step=step,
            expansion_min=Fraction(3, 2), expansion_max=Fraction(6), expansion_step=Fraction(3, 4),
            attention_kinds=attention,
            num_blocks=n, spatial_stride=s,
        )
        for (lo, hi, step), n, s in zip(MACRO_CHANNELS, MACRO_BLOCKS, MACRO_STRIDES)
    ]
    space_id = "macro" if attention == FULL_ATTENTION else "macro-" + "-".join(a.value for a in attention)
    return SearchSpace(
        space_id=space_id,
        input_channels=3, input_frames=13, input_spatial=160,
        stem_channels=24, groups=groups,
        pool_dim=432, fc_dim=2048, num_classes=num_classes,
    )


def toy_space(attention: Sequence[Attention] = GLORE_ATTENTION,
              block_types: Sequence[BlockType] = ALL_BLOCK_TYPES,
              num_classes: int = 4) -> SearchSpace:
    """Desk-scale space: 3x8x16^2 input, 8-channel stem, four groups.

    Like the macro space, every grid sits on top of an always-on base of
    ``min - step`` (about 30% of the widest candidate), so all candidates of
    a group share some channels whatever the part schedule.
    """
    attention = tuple(Attention(a) for a in attention)
    grids = [((6, 14, 2), 1, 2), ((6, 14, 2), 1, 1), ((12, 28, 4), 1, 2), ((12, 28, 4), 1, 1)]
    groups = [
        GroupAxes(
            block_types=tuple(block_types),
            channel_min=lo, channel_max=hi, channel_step=step,
            expansion_min=Fraction(3, 2), expansion_max=Fraction(7, 2), expansion_step=Fraction(1, 2),
            attention_kinds=attention,
            num_blocks=n, spatial_stride=s,
        )
        for (lo, hi, step), n, s in grids
    ]
    return SearchSpace(
        space_id="toy", input_channels=3, input_frames=8, input_spatial=16,
        stem_channels=8, groups=groups, pool_dim=32, fc_dim=32, num_classes=num_classes,
    )


def toy_width_space(num_classes: int = 4) -> SearchSpace:
    """Toy space that searches only output channels and expansion ratios.

    Block type is fixed to t3_s3 and attention to pass-through, the setting
    used to study how channel-sharing schedules steer the FLOPs of the
    derived network.
    """
    space = toy_space(attention=(Attention.PASS_THROUGH,), block_types=(BlockType(3, 3),),
                      num_classes=num_classes)
    return dataclasses.replace(space, space_id="toy-width")


def preset_x3d_s(space_id: str = "macro") -> ArchitectureSpec:
    """Hand-designed X3D-S: uniform t3_s3, expansion 2.25, widths doubling per stage."""
    widths = {1: 24, 2: 48, 3: 96, 4: 192}
    return ArchitectureSpec(space_id, [
        GroupChoice(BlockType(3, 3), widths[stage], Fraction(9, 4), Attention.PASS_THROUGH)
        for stage in MACRO_STAGE_OF_GROUP
    ])


AUTOX3D_S_TABLE = (
    # type, expansion, channels, attention
    ("t3_s3", "2.25", 16, "pass_through"),
    ("t3_s3", "5.25", 16, "pass_through"),
    ("t3_s3", "4.5", 48, "pass_through"),
    ("t1_s3", "2.25", 48, "glore"),
    ("t1_s5", "4.5", 72, "pass_through"),
    ("t3_s3", "3.75", 72, "pass_through"),
    ("t5_s3", "2.25", 88, "pass_through"),
    ("t3_s3", "3.0", 88, "pass_through"),
    ("t3_s5", "3.75", 144, "pass_through"),
    ("t1_s3", "3.0", 144, "pass_through"),
    ("t3_s3", "3.0", 192, "pass_through"),
)


def preset_autox3d_s(space_id: str = "macro") -> ArchitectureSpec:
    """The searched AutoX3D-S network.

    Groups 7 and 8 use 88 channels, which lies off the 48..132/12 grid of the
    macro space; the preset keeps the published widths, so ``validate_spec``
    flags those two groups.
    """
    return ArchitectureSpec(space_id, [
        GroupChoice(BlockType.parse(t), c, as_fraction(e), Attention(a))
        for t, e, c, a in AUTOX3D_S_TABLE
    ])


_REGISTRY: dict[str, SearchSpace] = {}


def register_space(space: SearchSpace) -> SearchSpace:
    _REGISTRY[space.space_id] = space
    return space


def get_space(space_id: str) -> SearchSpace:
    if space_id not in _REGISTRY:
        raise KeyError(f"unknown space id {space_id!r}")
    return _REGISTRY[space_id]


def _register_builtins(spaces: Iterable[SearchSpace]):
    for s in spaces:
        register_space(s)


_register_builtins([macro_space(), macro_space(GLORE_ATTENTION), toy_space(), toy_width_space()])
