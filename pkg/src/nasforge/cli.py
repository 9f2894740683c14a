"""Command-line entry point: ``nasforge <subcommand> ...``.

Failures print a single JSON line ``{"error": <kind>, "message": <text>}``
to stderr and exit with status 2 (usage) or 1 (everything else).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .cost import TensorShape, cost_report
from .data import DataSettings, generate_dataset
from .driver import RunConfig, env_seed, load_space, run_search, run_train
from .fair import format_pattern, make_pattern, part_counts
from .rng import Streams
from .search import ArchParams, most_probable
from .space import (
    ArchitectureSpec,
    SchemaError,
    SearchSpace,
    cardinality,
    preset_autox3d_s,
    preset_x3d_s,
    validate_spec,
)
from .tensor import save_checkpoint

PRESETS = {"x3d_s": preset_x3d_s, "autox3d_s": preset_autox3d_s}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from None


def _load_arch(ref: str) -> ArchitectureSpec:
    if ref in PRESETS:
        return PRESETS[ref]()
    return ArchitectureSpec.from_json(_read_json(ref))


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=False))


# -- subcommands ----------------------------------------------------------

def cmd_flops(args):
    arch = _load_arch(args.arch)
    space = load_space(args.space or arch.space_id)
    shape = None
    if args.input:
        shape = TensorShape.parse(args.input)
    report = cost_report(arch, shape, space)
    if args.json:
        _emit(report.to_json())
        return
    print(f"{'block':<10}{'out shape':>18}{'MFLOPs':>12}{'params':>12}")
    for b in report.per_block:
        print(f"{b.label:<10}{str(b.out_shape):>18}{b.flops / 1e6:>12.2f}{b.params:>12,}")
    print(f"{'total':<10}{'':>18}{report.total_flops / 1e6:>12.2f}{report.total_params:>12,}")
    print(f"total: {report.total_flops / 1e9:.3f} GFLOPs, {report.total_params / 1e6:.3f} M params")


def cmd_space(args):
    if args.action == "preset":
        if args.name not in PRESETS:
            raise KeyError(f"unknown preset {args.name!r}; choose from {sorted(PRESETS)}")
        _emit(PRESETS[args.name]().to_json())
        return
    space = load_space(args.space)
    if args.action == "cardinality":
        c = cardinality(space)
        if args.json:
            _emit({"space_id": space.space_id, "count": str(c.count), "log10": c.log10})
        else:
            print(f"{space.space_id}: {c.count:.3e} architectures (log10 = {c.log10:.2f})")
    elif args.action == "dump":
        _emit(space.to_json())
    elif args.action == "validate":
        if not args.arch:
            raise UsageError("space validate needs --arch")
        result = validate_spec(space, _load_arch(args.arch))
        _emit({"ok": result.ok, "errors": list(result.errors)})
        if not result.ok:
            raise SystemExit(1)


def cmd_pattern(args):
    pattern = make_pattern(args.n, "naive" if args.naive else "fair")
    if args.json:
        _emit(pattern.to_json())
    else:
        print(format_pattern(pattern))
        counts = part_counts(pattern)
        print(f"update rate per part: {', '.join(f'{c}/{args.n}' for c in counts)}")


def _run_config(args) -> RunConfig:
    cfg = RunConfig.from_json(_read_json(args.config)) if args.config else RunConfig()
    search = {}
    for flag, key in (("epochs", "total_epochs"), ("warmup", "warmup_epochs"),
                      ("samples", "samples_per_step"), ("target", "target_flops"),
                      ("cost_weight", "cost_weight"), ("seed", "seed")):
        value = getattr(args, flag, None)
        if value is not None:
            search[key] = value
    if search:
        cfg.search = dataclasses.replace(cfg.search, **search)
    if args.space:
        cfg.space = args.space
    if getattr(args, "pattern_mode", None):
        cfg.pattern_mode = args.pattern_mode
    if args.out:
        cfg.out_dir = args.out
    space = load_space(cfg.space)
    cfg.data = dataclasses.replace(cfg.data, frames=space.input_frames, spatial=space.input_spatial,
                                   channels=space.input_channels, num_classes=space.num_classes)
    return cfg


def cmd_search(args):
    cfg = _run_config(args)
    result = run_search(cfg, verbose=args.verbose)
    _emit({"out_dir": str(result.out_dir), "flops": result.flops, "target_flops": result.target,
           "relative_gap": (result.flops - result.target) / result.target,
           "arch": result.arch.to_json()})


def cmd_derive(args):
    path = Path(args.checkpoint)
    if path.is_dir():
        path = path / "supernet.json"
    manifest = _read_json(str(path.with_suffix(".json")))
    meta = manifest.get("meta", {})
    if manifest.get("schema") != "v1":
        raise SchemaError(f"unsupported checkpoint schema {manifest.get('schema')!r}")
    if "arch_params" not in meta or "space" not in meta:
        raise SchemaError(f"{path} is not a search checkpoint (no architecture parameters)")
    space = SearchSpace.from_json(meta["space"])
    _emit(most_probable(ArchParams.from_json(meta["arch_params"], space)).to_json())


def cmd_train(args):
    arch = _load_arch(args.arch)
    space = load_space(args.space or arch.space_id)
    check = validate_spec(space, arch)
    if not check.ok:
        raise ValueError("; ".join(check.errors))
    seed = env_seed(args.seed)
    settings = DataSettings(num_clips=args.clips, frames=space.input_frames,
                            spatial=space.input_spatial, num_classes=space.num_classes,
                            noise=args.noise, channels=space.input_channels)
    task = generate_dataset(settings, Streams(seed).generator("data"), seed=seed)
    train, val = task.split(0.25)
    result = run_train(arch, space, train, val, args.epochs, batch_size=args.batch_size,
                       lr=args.lr, seed=seed)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "standalone.bin", result.network.weights(),
                        meta={"arch": arch.to_json(), "space": space.to_json(), "seed": seed})
    _emit({"train_accuracy": result.train_accuracy, "val_accuracy": result.val_accuracy,
           "epochs": args.epochs, "final_loss": result.history[-1]["loss"] if result.history else None})


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nasforge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("flops", help="per-block FLOPs and parameter table")
    f.add_argument("--arch", required=True, help="architecture JSON or preset name")
    f.add_argument("--input", help="input shape CxTxS (default: the space's input)")
    f.add_argument("--space", help="space id or JSON file (default: the arch's space_id)")
    f.add_argument("--json", action="store_true")
    f.set_defaults(func=cmd_flops)

    s = sub.add_parser("space", help="inspect search spaces and presets")
    s.add_argument("action", choices=["cardinality", "dump", "preset", "validate"])
    s.add_argument("name", nargs="?", help="preset name for 'preset'")
    s.add_argument("--space", default="macro")
    s.add_argument("--arch")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_space)

    pt = sub.add_parser("pattern", help="fair (or naive) channel-part schedule")
    pt.add_argument("--n", type=int, required=True)
    pt.add_argument("--naive", action="store_true")
    pt.add_argument("--json", action="store_true")
    pt.set_defaults(func=cmd_pattern)

    r = sub.add_parser("search", help="run a toy architecture search")
    r.add_argument("--config", help="RunConfig JSON")
    r.add_argument("--space")
    r.add_argument("--out")
    r.add_argument("--pattern-mode", choices=["fair", "naive"])
    r.add_argument("--epochs", type=int)
    r.add_argument("--warmup", type=int)
    r.add_argument("--samples", type=int)
    r.add_argument("--target", type=float)
    r.add_argument("--cost-weight", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--verbose", action="store_true")
    r.set_defaults(func=cmd_search)

    d = sub.add_parser("derive", help="most probable architecture of a search checkpoint")
    d.add_argument("--checkpoint", required=True, help="search output dir or supernet checkpoint")
    d.set_defaults(func=cmd_derive)

    t = sub.add_parser("train", help="train a standalone architecture on synthetic clips")
    t.add_argument("--arch", required=True)
    t.add_argument("--space")
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--clips", type=int, default=96)
    t.add_argument("--noise", type=float, default=0.1)
    t.add_argument("--batch-size", type=int, default=8)
    t.add_argument("--lr", type=float, default=0.05)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)
    return p


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": " ".join(str(message).split())}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as exc:
        return _fail("usage", exc, 2)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (SchemaError, ValueError, KeyError, OSError, NotImplementedError,
            FloatingPointError, MemoryError) as exc:
        # KeyError's str() adds quotes; OSError keeps the errno in args[0]
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        return _fail(type(exc).__name__, message, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
