"""End-to-end workflows: toy search over a supernet and standalone training.

A search run writes into its output directory:

    config.json          resolved RunConfig
    search_log.csv       one row per epoch (columns in LOG_COLUMNS)
    alpha.jsonl          architecture logits after every epoch
    arch.json            final most probable architecture
    arch_params.json     final logits
    supernet.bin/.json   shared weights; the manifest meta holds the logits
    standalone.bin/.json weights extracted for arch.json
    manifest.json        version, config hash, seed, timings
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cost import cost_report, hinge_cost
from .data import DataSettings, SyntheticVideoTask, batches, generate_dataset
from .network import Network
from .rng import Streams
from .search import (
    ArchParams,
    ParsecOptimizer,
    SearchConfig,
    axis_entropy,
    batch_loglik,
    init_params,
    most_probable,
    sample_architecture,
)
from .space import AXES, ArchitectureSpec, SearchSpace, get_space
from .supernet import Supernet
from .tensor import optimizer_step, save_checkpoint, sgd

SEED_ENV = "NASFORGE_SEED"
LOG_COLUMNS = ("epoch", "phase", "most_probable_flops", "target_flops", "mean_loglik",
               "mean_hinge") + tuple(f"entropy_{a}" for a in AXES)


def load_space(ref: str) -> SearchSpace:
    """A builtin space id, or a path to a space JSON file."""
    path = Path(ref)
    if path.suffix == ".json" or path.exists():
        return SearchSpace.from_json(json.loads(path.read_text()))
    return get_space(ref)


def env_seed(seed: int) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return seed
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


@dataclass
class RunConfig:
    space: str = "toy"
    search: SearchConfig = field(default_factory=SearchConfig)
    data: DataSettings = field(default_factory=DataSettings)
    batch_size: int = 8
    eval_batch_size: int | None = None   # held-out batch for likelihoods; defaults to batch_size
    holdout: float = 0.25
    pattern_mode: str = "fair"
    expansion_mode: str = "pattern"
    target_samples: int = 1000
    out_dir: str = "runs/search"

    def to_json(self) -> dict:
        return {
            "schema": "v1", "space": self.space, "search": self.search.to_json(),
            "data": self.data.to_json(), "batch_size": self.batch_size,
            "eval_batch_size": self.eval_batch_size, "holdout": self.holdout,
            "pattern_mode": self.pattern_mode, "expansion_mode": self.expansion_mode,
            "target_samples": self.target_samples, "out_dir": self.out_dir,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        if doc.pop("schema", "v1") != "v1":
            raise ValueError("unsupported run-config schema")
        search = SearchConfig.from_json(doc.pop("search", {}))
        data = DataSettings(**doc.pop("data", {}))
        return cls(search=search, data=data, **doc)

    def digest(self) -> str:
        doc = self.to_json()
        doc.pop("out_dir")
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def version_string() -> str:
    """`git describe` of the source tree when available, else the package version."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).parent, capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def default_target(space: SearchSpace, rng: np.random.Generator, n: int = 1000) -> float:
    """Median FLOPs of n architectures drawn uniformly from the space."""
    uniform = init_params(space)
    flops = [cost_report(sample_architecture(uniform, rng)[0], space=space).total_flops
             for _ in range(n)]
    return float(np.median(flops))


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


@dataclass
class SearchResult:
    arch: ArchitectureSpec
    flops: int
    target: float
    out_dir: Path
    rows: list[dict]
    params: ArchParams
    supernet: Supernet


def _check_finite(value: float, epoch: int, arch: ArchitectureSpec):
    if not np.isfinite(value):
        raise FloatingPointError(f"non-finite loss at epoch {epoch} for {json.dumps(arch.to_json())}")


def run_search(config: RunConfig, verbose: bool = False) -> SearchResult:
    started = time.time()
    cfg = config.search
    seed = env_seed(cfg.seed)
    streams = Streams(seed)
    space = load_space(config.space)
    if (config.data.frames, config.data.spatial, config.data.channels,
            config.data.num_classes) != (space.input_frames, space.input_spatial,
                                         space.input_channels, space.num_classes):
        raise ValueError("toy-data settings do not match the space's input and class count")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    target = cfg.target_flops or default_target(space, streams.generator("target"),
                                                config.target_samples)
    cfg = dataclasses.replace(cfg, target_flops=target, seed=seed)
    task = generate_dataset(config.data, streams.generator("data"), seed=seed)
    train, held = task.split(config.holdout)
    supernet = Supernet(space, pattern_mode=config.pattern_mode,
                        expansion_mode=config.expansion_mode, seed=seed,
                        rng=streams.generator("init"))
    arch_opt = ParsecOptimizer(space, cfg)
    weight_opt = sgd(cfg.weight_lr, momentum=cfg.weight_momentum, weight_decay=cfg.weight_decay)
    sample_rng = streams.generator("arch")
    train_batches = batches(len(train), config.batch_size, streams.generator("train-batches"))
    held_batches = batches(len(held), min(config.eval_batch_size or config.batch_size, len(held)),
                           streams.generator("held-batches"))

    (out / "config.json").write_text(json.dumps(
        {**config.to_json(), "search": cfg.to_json()}, indent=2, sort_keys=True))
    log_path, alpha_path = out / "search_log.csv", out / "alpha.jsonl"
    with open(log_path, "w", newline="") as fh:
        csv.writer(fh).writerow(LOG_COLUMNS)
    alpha_path.write_text("")

    rows = []
    for epoch in range(1, cfg.total_epochs + 1):
        warm = epoch <= cfg.warmup_epochs
        logliks, hinges = [], []
        for _ in range(cfg.steps_per_epoch):
            samples = arch_opt.sample(sample_rng)
            plans = [supernet.activate(a) for a in samples]
            if warm:
                weights = np.full(len(samples), 1.0 / len(samples))
                hinges.extend(hinge_cost(arch_opt.flops(a), target) for a in samples)
            else:
                idx = next(held_batches)
                xh, yh = held.clips[idx], held.labels[idx]
                scores = []
                for plan in plans:
                    loss, per_sample = supernet.forward_loss(plan, (xh, yh))
                    _check_finite(float(loss.data), epoch, plan.arch)
                    scores.append(batch_loglik(per_sample))
                    logliks.append(float(np.mean(per_sample)))
                step = arch_opt.step(samples, scores)
                weights = step.weights
                hinges.extend(step.costs.tolist())
            idx = next(train_batches)
            xb, yb = train.clips[idx], train.labels[idx]
            supernet.zero_grad()
            for plan, w in zip(plans, weights):
                loss, per_sample = supernet.forward_loss(plan, (xb, yb))
                _check_finite(float(loss.data), epoch, plan.arch)
                if warm:
                    logliks.append(float(np.mean(per_sample)))
                if w > 0:
                    loss.backward(float(w))
            optimizer_step(supernet.arrays(), supernet.grads(), weight_opt, supernet.masks())

        best = most_probable(arch_opt.params)
        ent = axis_entropy(arch_opt.params)
        row = {"epoch": epoch, "phase": "warmup" if warm else "search",
               "most_probable_flops": arch_opt.flops(best), "target_flops": target,
               "mean_loglik": float(np.mean(logliks)), "mean_hinge": float(np.mean(hinges)),
               **{f"entropy_{a}": ent[a] for a in AXES}}
        rows.append(row)
        with open(log_path, "a", newline="") as fh:
            csv.writer(fh).writerow([_fmt(row[c]) for c in LOG_COLUMNS])
        with open(alpha_path, "a") as fh:
            fh.write(json.dumps({"epoch": epoch, "logits": {
                k: v.tolist() for k, v in arch_opt.params.logits.items()}}, sort_keys=True) + "\n")
        if verbose:
            print(f"epoch {epoch:4d} {row['phase']:6s} flops={row['most_probable_flops']:,} "
                  f"target={target:,.0f} loglik={row['mean_loglik']:.4f} hinge={row['mean_hinge']:.4f}")

    final = most_probable(arch_opt.params)
    final_flops = arch_opt.flops(final)
    (out / "arch.json").write_text(json.dumps(final.to_json(), indent=2))
    (out / "arch_params.json").write_text(json.dumps(arch_opt.params.to_json(), sort_keys=True))
    save_checkpoint(out / "supernet.bin", supernet.arrays(), meta={
        "supernet": supernet.manifest(), "arch_params": arch_opt.params.to_json(),
        "space": space.to_json()})
    save_checkpoint(out / "standalone.bin", supernet.extract_standalone(final), meta={
        "arch": final.to_json(), "space": space.to_json()})
    manifest = {
        "schema": "v1", "version": version_string(), "config_hash": config.digest(),
        "seed": seed, "space_id": space.space_id, "space_hash": space.digest(),
        "pattern_mode": config.pattern_mode, "target_flops": target,
        "final_flops": final_flops, "relative_gap": (final_flops - target) / target,
        "started_at": started, "wall_clock_seconds": time.time() - started,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return SearchResult(final, final_flops, target, out, rows, arch_opt.params, supernet)


@dataclass
class TrainResult:
    network: Network
    train_accuracy: float
    val_accuracy: float
    history: list[dict]


def accuracy(net: Network, task: SyntheticVideoTask, batch_size: int = 32) -> float:
    correct = 0
    for i in range(0, len(task), batch_size):
        logits = net.forward(task.clips[i:i + batch_size], train=False).data
        correct += int((logits.argmax(axis=1) == task.labels[i:i + batch_size]).sum())
    return correct / len(task)


def run_train(arch: ArchitectureSpec, space: SearchSpace, train: SyntheticVideoTask,
              val: SyntheticVideoTask, epochs: int, batch_size: int = 8, lr: float = 0.05,
              momentum: float = 0.9, weight_decay: float = 5e-5, seed: int = 0,
              weights: dict | None = None) -> TrainResult:
    """SGD with momentum on a standalone network; accuracies use running BN statistics."""
    streams = Streams(env_seed(seed))
    net = Network(space, arch, weights=weights, rng=streams.generator("init"))
    opt = sgd(lr, momentum=momentum, weight_decay=weight_decay)
    order = batches(len(train), min(batch_size, len(train)), streams.generator("train-batches"))
    steps = max(1, len(train) // batch_size)
    history = []
    for epoch in range(1, epochs + 1):
        losses = []
        for _ in range(steps):
            idx = next(order)
            for p in net.params.values():
                p.zero_grad()
            loss, _ = net.loss(train.clips[idx], train.labels[idx])
            _check_finite(float(loss.data), epoch, arch)
            loss.backward()
            optimizer_step({k: p.data for k, p in net.params.items()},
                           {k: p.grad for k, p in net.params.items()}, opt)
            losses.append(float(loss.data))
        history.append({"epoch": epoch, "loss": float(np.mean(losses))})
    return TrainResult(net, accuracy(net, train), accuracy(net, val), history)
