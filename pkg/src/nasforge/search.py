"""PARSEC: a learned categorical distribution over architectures.

Each group of the space carries one logit vector per choice axis.  A search
step draws K architectures, scores each by its data log-likelihood minus a
hinge FLOPs penalty, turns the scores into posterior weights

    w_k = softmax_k(loglik_k - lambda * hinge(F(A_k), T))

and moves the logits along the score-function estimate

    sum_k w_k * grad log P(A_k | alpha),

which for one categorical axis is sum_k w_k (onehot(choice_k) - softmax).
The derived network is the per-axis argmax.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cost import cost_report, hinge_cost
from .space import AXES, ArchitectureSpec, GroupChoice, SearchSpace
from .tensor import OptimState, adam, optimizer_step

LOGPROB_FLOOR = -30.0


@dataclass
class SearchConfig:
    samples_per_step: int = 13
    target_flops: float | None = None
    cost_weight: float = 1.0
    warmup_epochs: int = 60
    total_epochs: int = 200
    steps_per_epoch: int = 1
    arch_lr: float = 0.05
    arch_betas: tuple[float, float] = (0.9, 0.999)
    weight_lr: float = 0.1
    weight_momentum: float = 0.9
    weight_decay: float = 5e-5
    seed: int = 0

    def __post_init__(self):
        self.arch_betas = tuple(self.arch_betas)
        if self.samples_per_step < 1:
            raise ValueError("samples_per_step must be at least 1")
        if self.total_epochs < 1 or self.warmup_epochs < 0:
            raise ValueError("epoch counts must be positive")
        if self.warmup_epochs > self.total_epochs:
            raise ValueError("warm-up cannot be longer than the whole search")
        if self.steps_per_epoch < 1:
            raise ValueError("steps_per_epoch must be at least 1")
        if self.cost_weight < 0:
            raise ValueError("cost weight must be non-negative")
        if self.target_flops is not None and self.target_flops <= 0:
            raise ValueError("target FLOPs must be positive")

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["arch_betas"] = list(self.arch_betas)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "SearchConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown search settings: {sorted(unknown)}")
        return cls(**doc)


def _key(g: int, axis: str) -> str:
    return f"g{g + 1}.{axis}"


def softmax(v: np.ndarray) -> np.ndarray:
    z = np.exp(v - v.max())
    return z / z.sum()


def log_softmax(v: np.ndarray) -> np.ndarray:
    z = v - v.max()
    return z - np.log(np.exp(z).sum())


@dataclass
class ArchParams:
    """Logit vectors keyed ``g<group>.<axis>`` (1-based group)."""

    space: SearchSpace
    logits: dict[str, np.ndarray] = field(default_factory=dict)

    def options(self, g: int, axis: str) -> tuple:
        return self.space.groups[g].axis(axis)

    def probs(self, g: int, axis: str) -> np.ndarray:
        return softmax(self.logits[_key(g, axis)])

    def copy(self) -> "ArchParams":
        return ArchParams(self.space, {k: v.copy() for k, v in self.logits.items()})

    def to_json(self) -> dict:
        return {"schema": "v1", "space_id": self.space.space_id,
                "space_hash": self.space.digest(),
                "logits": {k: v.tolist() for k, v in self.logits.items()}}

    @classmethod
    def from_json(cls, doc: dict, space: SearchSpace) -> "ArchParams":
        if doc.get("space_hash") not in (None, space.digest()):
            raise ValueError("architecture parameters belong to a different space")
        params = init_params(space)
        for k in params.logits:
            v = np.asarray(doc["logits"][k], dtype=np.float64)
            if v.shape != params.logits[k].shape:
                raise ValueError(f"{k}: expected {params.logits[k].shape[0]} logits, got {v.shape}")
            params.logits[k] = v
        return params


def init_params(space: SearchSpace) -> ArchParams:
    return ArchParams(space, {
        _key(g, axis): np.zeros(len(axes.axis(axis)))
        for g, axes in enumerate(space.groups) for axis in AXES
    })


def _choice(params: ArchParams, g: int, idx: dict[str, int]) -> GroupChoice:
    return GroupChoice(*(params.options(g, axis)[idx[axis]] for axis in AXES))


def sample_architecture(params: ArchParams, rng: np.random.Generator) -> tuple[ArchitectureSpec, float]:
    """Independent categorical draw per axis per group, with its log-probability."""
    choices, logp = [], 0.0
    for g in range(len(params.space.groups)):
        idx = {}
        for axis in AXES:
            lp = log_softmax(params.logits[_key(g, axis)])
            cdf = np.cumsum(np.exp(lp))
            i = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(lp) - 1)
            idx[axis] = i
            logp += lp[i]
        choices.append(_choice(params, g, idx))
    return ArchitectureSpec(params.space.space_id, choices), float(logp)


def choice_indices(params: ArchParams, arch: ArchitectureSpec) -> list[dict[str, int]]:
    out = []
    for g, choice in enumerate(arch.choices):
        out.append({axis: params.options(g, axis).index(choice.value(axis)) for axis in AXES})
    return out


def log_prob(params: ArchParams, arch: ArchitectureSpec) -> float:
    total = 0.0
    for g, idx in enumerate(choice_indices(params, arch)):
        for axis in AXES:
            total += log_softmax(params.logits[_key(g, axis)])[idx[axis]]
    return float(total)


def posterior_weights(logliks, costs, cost_weight: float) -> np.ndarray:
    """softmax(loglik_k - lambda * cost_k) over the K samples."""
    logliks = np.asarray(logliks, dtype=np.float64)
    costs = np.asarray(costs, dtype=np.float64)
    if logliks.shape != costs.shape or logliks.ndim != 1 or logliks.size == 0:
        raise ValueError("need equal-length, non-empty loglik and cost vectors")
    if np.isnan(logliks).any() or np.isnan(costs).any() or np.isinf(costs).any():
        raise ValueError("log-likelihoods and costs must not be NaN")
    scores = logliks - cost_weight * costs
    if np.isneginf(scores).all():
        raise ValueError("every sample has zero likelihood")
    if np.isposinf(scores).any():
        raise ValueError("log-likelihoods must be finite from above")
    top = scores.max()
    z = np.exp(scores - top)
    return z / z.sum()


def alpha_gradient(samples: Sequence[ArchitectureSpec], weights, params: ArchParams) -> dict[str, np.ndarray]:
    """Descent direction for the logits: -(sum_k w_k (onehot_k - softmax)) per axis."""
    weights = np.asarray(weights, dtype=np.float64)
    if len(samples) != weights.shape[0]:
        raise ValueError(f"{len(samples)} samples but {weights.shape[0]} weights")
    ascent = {k: -weights.sum() * softmax(v) for k, v in params.logits.items()}
    for arch, w in zip(samples, weights):
        for g, idx in enumerate(choice_indices(params, arch)):
            for axis in AXES:
                ascent[_key(g, axis)][idx[axis]] += w
    return {k: -v for k, v in ascent.items()}


def most_probable(params: ArchParams) -> ArchitectureSpec:
    """Per-axis argmax; ties go to the lowest index."""
    choices = [
        _choice(params, g, {axis: int(np.argmax(params.logits[_key(g, axis)])) for axis in AXES})
        for g in range(len(params.space.groups))
    ]
    return ArchitectureSpec(params.space.space_id, choices)


def axis_entropy(params: ArchParams) -> dict[str, float]:
    """Mean entropy (nats) of each axis over the groups."""
    out = {}
    for axis in AXES:
        hs = []
        for g in range(len(params.space.groups)):
            lp = log_softmax(params.logits[_key(g, axis)])
            hs.append(float(-(np.exp(lp) * lp).sum()))
        out[axis] = float(np.mean(hs))
    return out


class FlopsTable:
    """Memoized total FLOPs per architecture."""

    def __init__(self, space: SearchSpace):
        self.space = space
        self._cache: dict[ArchitectureSpec, int] = {}

    def __call__(self, arch: ArchitectureSpec) -> int:
        f = self._cache.get(arch)
        if f is None:
            f = self._cache[arch] = cost_report(arch, space=self.space).total_flops
        return f


@dataclass
class ArchStep:
    samples: list[ArchitectureSpec]
    logliks: np.ndarray
    costs: np.ndarray
    weights: np.ndarray


class ParsecOptimizer:
    """Owns the architecture logits and their Adam state."""

    def __init__(self, space: SearchSpace, config: SearchConfig, params: ArchParams | None = None):
        self.space = space
        self.config = config
        self.params = params or init_params(space)
        beta1, beta2 = config.arch_betas
        self.state: OptimState = adam(config.arch_lr, beta1=beta1, beta2=beta2)
        self.flops = FlopsTable(space)

    def sample(self, rng: np.random.Generator, k: int | None = None) -> list[ArchitectureSpec]:
        return [sample_architecture(self.params, rng)[0]
                for _ in range(k or self.config.samples_per_step)]

    def costs(self, samples) -> np.ndarray:
        cfg = self.config
        if cfg.cost_weight == 0 or cfg.target_flops is None:
            if cfg.cost_weight:
                raise ValueError("a cost weight needs a target FLOPs value")
            return np.zeros(len(samples))
        return np.array([hinge_cost(self.flops(a), cfg.target_flops) for a in samples])

    def step(self, samples: list[ArchitectureSpec], logliks) -> ArchStep:
        """One Adam step on the logits from scored samples."""
        logliks = np.asarray(logliks, dtype=np.float64)
        costs = self.costs(samples)
        w = posterior_weights(logliks, costs, self.config.cost_weight)
        optimizer_step(self.params.logits, alpha_gradient(samples, w, self.params), self.state)
        return ArchStep(samples, logliks, costs, w)

    def most_probable(self) -> ArchitectureSpec:
        return most_probable(self.params)


def batch_loglik(per_sample) -> float:
    """Log-likelihood of a batch: per-sample values floored at -30, then summed."""
    return float(np.maximum(np.asarray(per_sample, dtype=np.float64), LOGPROB_FLOOR).sum())


def run_bandit(space: SearchSpace, evaluate: Callable[[ArchitectureSpec], float],
               config: SearchConfig, steps: int, rng: np.random.Generator) -> ParsecOptimizer:
    """Search against a synthetic log-likelihood (no supernet)."""
    opt = ParsecOptimizer(space, config)
    for _ in range(steps):
        samples = opt.sample(rng)
        opt.step(samples, [evaluate(a) for a in samples])
    return opt


def dumps_params(params: ArchParams) -> str:
    return json.dumps(params.to_json(), sort_keys=True)
