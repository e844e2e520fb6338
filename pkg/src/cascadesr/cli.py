"""Config-driven command line: prepare / train / trim / eval / infer.

A JSON config file carries the run parameters; a handful of flags override
the common ones. Unknown config keys are rejected and every referenced path
is checked before any work starts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import data, evaluate, trimming
from .model import load_model, param_count, save_model
from .training import MODE_CASCADE, MODE_ONE_SHOT, TrainConfig, cascade_train, one_shot_train

TOP_KEYS = {"seed", "scale", "manifest", "patches", "model_in", "model_out", "log_dir", "train", "trim"}
TRAIN_KEYS = {
    "mode",
    "learning_rate",
    "plateau_threshold",
    "insert_count",
    "target_depth",
    "batch_size",
    "max_epochs_per_stage",
}
TRIM_KEYS = {"mode", "rate", "rates", "layers_per_stage", "seed"}


class ConfigError(ValueError):
    pass


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        raw = json.load(fh)
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for section, allowed in (("train", TRAIN_KEYS), ("trim", TRIM_KEYS)):
        extra = set(raw.get(section, {})) - allowed
        if extra:
            raise ConfigError(f"unknown {section} config keys: {sorted(extra)}")
    return raw


def _require(cfg: dict, key: str, command: str) -> str:
    value = cfg.get(key)
    if not value:
        raise ConfigError(f"{command} requires {key!r} (config key or flag)")
    return value


def _check_exists(path: str, what: str):
    if not os.path.exists(path):
        raise ConfigError(f"{what} not found: {path}")


def _train_config(cfg: dict, args) -> TrainConfig:
    section = dict(cfg.get("train", {}))
    if args.mode:
        section["mode"] = args.mode
    if args.depth:
        section["target_depth"] = args.depth
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    return TrainConfig(seed=seed, **section)


def cmd_prepare(cfg: dict, args) -> int:
    manifest_path = _require(cfg, "manifest", "prepare")
    _check_exists(manifest_path, "manifest")
    manifest = data.DatasetManifest.from_json(manifest_path)
    if args.scale:
        manifest.scale = args.scale
    for entry in manifest.images:
        _check_exists(entry.path, "image")
    out = args.out or _require(cfg, "patches", "prepare")
    patches, warnings = data.build_patches(manifest, role="train")
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    data.save_patches(patches, out)
    print(f"{len(patches)} patch pairs written to {out}")
    return 0


def cmd_train(cfg: dict, args) -> int:
    patches_path = _require(cfg, "patches", "train")
    _check_exists(patches_path, "patch cache")
    patches = data.load_patches(patches_path)
    tc = _train_config(cfg, args)
    model_out = args.out or _require(cfg, "model_out", "train")
    os.makedirs(os.path.dirname(model_out) or ".", exist_ok=True)
    stem = model_out[:-5] if model_out.endswith(".ctsr") else model_out
    log_dir = cfg.get("log_dir")
    scale = args.scale or cfg.get("scale", 2)
    if tc.mode == MODE_CASCADE:
        net, _ = cascade_train(patches, tc, log_dir=log_dir, checkpoint_stem=stem, scale=scale)
    else:
        net, _ = one_shot_train(patches, tc, tc.target_depth, log_dir=log_dir, checkpoint_stem=stem, scale=scale)
    save_model(net, model_out)
    print(f"trained depth {net.depth}, {param_count(net)} parameters -> {model_out}")
    return 0


def _trim_plan(cfg: dict, args, depth: int) -> trimming.TrimPlan:
    section = dict(cfg.get("trim", {}))
    mode = args.mode or section.get("mode", "cascade")
    rates = section.get("rates")
    if rates is None:
        rates = [section.get("rate", 0.5)] * (depth - 1) + [0.0]
    seed = section.get("seed")
    if seed is None:
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    return trimming.TrimPlan(
        rates=rates, mode=mode, layers_per_stage=section.get("layers_per_stage", 2), seed=seed
    )


def cmd_trim(cfg: dict, args) -> int:
    model_in = args.model or _require(cfg, "model_in", "trim")
    _check_exists(model_in, "model")
    patches = None
    train_cfg = None
    if cfg.get("patches"):
        _check_exists(cfg["patches"], "patch cache")
        patches = data.load_patches(cfg["patches"])
        train_cfg = _train_config(cfg, argparse.Namespace(mode=None, depth=None, seed=args.seed))
    model_out = args.out or _require(cfg, "model_out", "trim")
    os.makedirs(os.path.dirname(model_out) or ".", exist_ok=True)
    stem = model_out[:-5] if model_out.endswith(".ctsr") else model_out
    log_dir = cfg.get("log_dir")
    mode = args.mode or cfg.get("trim", {}).get("mode", "cascade")
    if mode == "trim_train":
        if patches is None or train_cfg is None:
            raise ConfigError("trim_train needs a patch cache and a train section")
        net, _ = trimming.trim_train(patches, train_cfg, log_dir=log_dir, checkpoint_stem=stem)
    else:
        parent = load_model(model_in)
        plan = _trim_plan(cfg, args, parent.depth)
        plan.mode = mode
        if mode == "cascade":
            net, _ = trimming.cascade_trim(
                parent, patches, train_cfg, plan, log_dir=log_dir, checkpoint_stem=stem
            )
        else:
            net, _ = trimming.one_shot_trim(
                parent, plan, patches, train_cfg, log_dir=log_dir, checkpoint_stem=stem
            )
    save_model(net, model_out)
    print(f"trimmed to {param_count(net)} parameters -> {model_out}")
    return 0


def cmd_eval(cfg: dict, args) -> int:
    manifest_path = _require(cfg, "manifest", "eval")
    _check_exists(manifest_path, "manifest")
    manifest = data.DatasetManifest.from_json(manifest_path)
    if args.scale:
        manifest.scale = args.scale
    for path in manifest.paths("test"):
        _check_exists(path, "test image")
    net = None
    if args.mode != "bicubic":
        model_in = args.model or _require(cfg, "model_in", "eval")
        _check_exists(model_in, "model")
        net = load_model(model_in)
    out_dir = args.out or cfg.get("log_dir") or "."
    os.makedirs(out_dir, exist_ok=True)
    report = evaluate.benchmark(net, manifest)
    report.write_csv(os.path.join(out_dir, f"eval_{report.net_id}.csv"))
    report.write_json(os.path.join(out_dir, f"eval_{report.net_id}.json"))
    if not report.rows:
        print("warning: empty test set", file=sys.stderr)
        return 0
    failures = [r for r in report.rows if r.error]
    for r in failures:
        print(f"failed: {r.image}: {r.error}", file=sys.stderr)
    print(
        f"{report.net_id} x{report.scale}: mean PSNR {report.mean_psnr:.2f} dB, "
        f"mean SSIM {report.mean_ssim:.4f}, mean {report.mean_seconds:.4f} s/image"
    )
    return 1 if failures else 0


def cmd_infer(cfg: dict, args) -> int:
    model_in = args.model or _require(cfg, "model_in", "infer")
    _check_exists(model_in, "model")
    if not args.input:
        raise ConfigError("infer requires an input image path")
    _check_exists(args.input, "input image")
    if not args.out:
        raise ConfigError("infer requires --out")
    net = load_model(model_in)
    img = data.load_image(args.input)
    sr = evaluate.infer_image(net, img)
    data.save_image(sr, args.out)
    print(f"{args.input} ({img.shape[2]}x{img.shape[3]}) -> {args.out} ({sr.shape[2]}x{sr.shape[3]})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cascadesr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("prepare", cmd_prepare),
        ("train", cmd_train),
        ("trim", cmd_trim),
        ("eval", cmd_eval),
        ("infer", cmd_infer),
    ):
        p = sub.add_parser(name)
        p.set_defaults(fn=fn)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--model", help="model file (overrides model_in)")
        p.add_argument("--out", help="output path (model/report/cache)")
        p.add_argument("--mode", help="train/trim mode, or 'bicubic' for eval baseline")
        p.add_argument("--depth", type=int, default=None)
        p.add_argument("--scale", type=int, default=None)
        if name == "infer":
            p.add_argument("input", nargs="?", help="input PGM image")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.fn(cfg, args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
