"""Command-line front end.

Subcommands: synth, degrade, import-raw, train, eval, ablate, sweep,
gradcheck. Every command accepts --config FILE with key=value lines
(# starts a comment); explicit flags win over the file, the file wins
over built-in defaults. SDANET_DATA_DIR provides the default --data-dir.
Errors print a single "error: ..." line to stderr and exit 1.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import kernels
from .data import (HsiCube, bicubic_resize, extract_patches, load_cube,
                   load_raw_cube, save_cube, split_train_val, synth_scene)
from .errors import ConfigError, SdanetError
from .gradcheck import gradient_suite
from .model import (SdanetConfig, VARIANTS, count_params, init_params,
                    load_checkpoint)
from .objective import MetricsReport, evaluate_all
from .trainer import (TrainConfig, bicubic_baseline, evaluate_pairs,
                      lambda_sweep, predict, run_ablation, train)

CUBE_SUFFIX = ".hsi"


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="sdanet",
        description="Hyperspectral super-resolution with channel-sparse attention")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    def command(name, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", default="",
                       help="key=value file with defaults for this command")
        subparsers[name] = p
        return p

    p = command("synth", help="generate synthetic scenes")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scenes", type=int, default=4)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--bands", type=int, default=8)
    p.add_argument("--endmembers", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)

    p = command("degrade", help="bicubic-downsample a cube")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--scale", type=int, default=4)

    p = command("import-raw", help="wrap a headerless float32 file as a cube")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--bands", type=int, required=True)
    p.add_argument("--name", default="")

    def training_flags(p, with_variant=True):
        p.add_argument("--data-dir", default="",
                       help="directory of *.hsi scenes (default: SDANET_DATA_DIR)")
        p.add_argument("--scale", type=int, default=4)
        p.add_argument("--channels", type=int, default=64)
        p.add_argument("--blocks", type=int, default=6)
        p.add_argument("--steps", type=int, default=1000)
        p.add_argument("--batch", type=int, default=16)
        p.add_argument("--lr", type=float, default=1e-4)
        p.add_argument("--lambda", dest="lam", type=float, default=0.2)
        p.add_argument("--patch", type=int, default=32,
                       help="low-resolution patch size")
        p.add_argument("--stride", type=int, default=16)
        p.add_argument("--val-fraction", type=float, default=0.1)
        p.add_argument("--seed", type=int, default=0)
        if with_variant:
            p.add_argument("--variant", choices=list(VARIANTS), default="full")

    p = command("train", help="train a model on a scene directory")
    training_flags(p)
    p.add_argument("--eval-every", type=int, default=0)
    p.add_argument("--checkpoint", default="")
    p.add_argument("--history", default="")

    p = command("eval", help="evaluate a checkpoint on a scene directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", default="")
    p.add_argument("--baseline", action="store_true",
                   help="also report plain bicubic upsampling")
    p.add_argument("--tsv", action="store_true")

    p = command("ablate", help="train and score every architecture variant")
    training_flags(p, with_variant=False)
    p.add_argument("--tsv", action="store_true")

    p = command("sweep", help="train once per lambda and compare")
    training_flags(p, with_variant=False)
    p.add_argument("--lambdas", default="0,0.1,0.2,0.5",
                   help="comma-separated lambda values")
    p.add_argument("--tsv", action="store_true")

    p = command("gradcheck", help="finite-difference check of every op")
    p.add_argument("--size", type=int, default=4, help="spatial extent")
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--bands", type=int, default=3)
    p.add_argument("--blocks", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)

    return parser, subparsers


def _read_config_file(path):
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value; got {raw.strip()!r}")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(subparser, values):
    """Coerce file values through each flag's declared type and install
    them as defaults, so explicit flags still win."""
    lookup = {}
    for action in subparser._actions:
        lookup[action.dest] = action
        for opt in action.option_strings:
            if opt.startswith("--"):
                lookup[opt[2:].replace("-", "_")] = action
    coerced = {}
    for key, raw in values.items():
        action = lookup.get(key)
        if action is None or action.dest in ("config", "help", "command"):
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            low = raw.lower()
            if low not in ("true", "false", "0", "1"):
                raise ConfigError(f"config key {key!r} expects a boolean; got {raw!r}")
            coerced[action.dest] = low in ("true", "1")
        elif action.type is not None:
            try:
                coerced[action.dest] = action.type(raw)
            except ValueError:
                raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from None
        else:
            coerced[action.dest] = raw
        if action.choices and coerced[action.dest] not in action.choices:
            raise ConfigError(f"config key {key!r} must be one of "
                              f"{sorted(action.choices)}; got {raw!r}")
    subparser.set_defaults(**coerced)


def _parse(argv):
    parser, subparsers = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", ""):
        _apply_config(subparsers[args.command], _read_config_file(args.config))
        args = parser.parse_args(argv)
    return args


def _resolve_data_dir(args):
    data_dir = args.data_dir or os.environ.get("SDANET_DATA_DIR", "")
    if not data_dir:
        raise ConfigError("no data directory: pass --data-dir or set SDANET_DATA_DIR")
    if not os.path.isdir(data_dir):
        raise ConfigError(f"data directory not found: {data_dir}")
    return data_dir


def _load_scenes(data_dir):
    names = sorted(n for n in os.listdir(data_dir) if n.endswith(CUBE_SUFFIX))
    if not names:
        raise ConfigError(f"no {CUBE_SUFFIX} scenes in {data_dir}")
    scenes = [load_cube(os.path.join(data_dir, n)) for n in names]
    bands = scenes[0].bands
    for scene, n in zip(scenes, names):
        if scene.bands != bands:
            raise ConfigError(f"{n} has {scene.bands} bands; expected {bands}")
    return scenes


def _check_parent_writable(path):
    if not path:
        return
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise ConfigError(f"directory does not exist: {parent}")


def _prepare_run(args):
    """Shared setup for train/ablate/sweep: scenes, patches, split, configs."""
    data_dir = _resolve_data_dir(args)
    scenes = _load_scenes(data_dir)
    pairs = []
    for scene in scenes:
        pairs.extend(extract_patches(scene, args.patch, args.scale, args.stride))
    train_pairs, val_pairs = split_train_val(pairs, args.val_fraction, args.seed)
    if not train_pairs:
        raise ConfigError("no training patches left after the split")
    model_cfg = SdanetConfig(bands=scenes[0].bands, feat_channels=args.channels,
                             num_blocks=args.blocks, scale=args.scale,
                             seed=args.seed)
    train_cfg = TrainConfig(total_steps=args.steps, batch_size=args.batch,
                            lr0=args.lr, lam=args.lam, seed=args.seed,
                            eval_every=getattr(args, "eval_every", 0),
                            checkpoint=getattr(args, "checkpoint", ""))
    print(f"config: steps={train_cfg.total_steps} batch={train_cfg.batch_size} "
          f"lr={train_cfg.lr0:g} lambda={train_cfg.lam:g} scale={args.scale} "
          f"channels={args.channels} blocks={args.blocks} seed={args.seed} "
          f"kernels={kernels.BACKEND}")
    print(f"data: {len(scenes)} scenes, {len(train_pairs)} train / "
          f"{len(val_pairs)} val patches")
    return model_cfg, train_cfg, train_pairs, val_pairs


def cmd_synth(args):
    if not os.path.isdir(args.out):
        raise ConfigError(f"output directory not found: {args.out}")
    for i in range(args.scenes):
        cube = synth_scene(args.seed + i, args.height, args.width, args.bands,
                           args.endmembers, name=f"scene{i:03d}")
        path = os.path.join(args.out, f"scene{i:03d}{CUBE_SUFFIX}")
        save_cube(cube, path)
        print(f"wrote {path}")
    return 0


def cmd_degrade(args):
    _check_parent_writable(args.output)
    cube = load_cube(args.input)
    if cube.height % args.scale or cube.width % args.scale:
        raise ConfigError(f"extent {cube.height}x{cube.width} not divisible "
                          f"by scale {args.scale}")
    low = bicubic_resize(cube, cube.height // args.scale,
                         cube.width // args.scale)
    save_cube(low, args.output)
    print(f"wrote {args.output} ({low.height}x{low.width}x{low.bands})")
    return 0


def cmd_import_raw(args):
    _check_parent_writable(args.output)
    cube = load_raw_cube(args.input, args.height, args.width, args.bands,
                         name=args.name)
    save_cube(cube, args.output)
    print(f"wrote {args.output} ({cube.height}x{cube.width}x{cube.bands})")
    return 0


def cmd_train(args):
    _check_parent_writable(args.checkpoint)
    _check_parent_writable(args.history)
    model_cfg, train_cfg, train_pairs, val_pairs = _prepare_run(args)
    model = init_params(model_cfg, args.variant)
    print(f"model: variant={args.variant} params={count_params(model)}")
    history = train(model, train_pairs, train_cfg, val_pairs=val_pairs,
                    history_path=args.history)
    last = history.steps[-1]
    print(last.to_line())
    if val_pairs:
        report = evaluate_pairs(model, val_pairs)
        print("val: " + report.to_line())
    if train_cfg.checkpoint:
        print(f"checkpoint: {train_cfg.checkpoint}")
    return 0


def cmd_eval(args):
    if not os.path.isfile(args.checkpoint):
        raise ConfigError(f"checkpoint not found: {args.checkpoint}")
    model = load_checkpoint(args.checkpoint)
    data_dir = _resolve_data_dir(args)
    scenes = _load_scenes(data_dir)
    scale = model.config.scale
    reports = []
    base_reports = []
    for scene in scenes:
        if scene.height % scale or scene.width % scale:
            raise ConfigError(f"scene {scene.name} extent not divisible by "
                              f"scale {scale}")
        if scene.bands != model.config.bands:
            raise ConfigError(f"scene {scene.name} has {scene.bands} bands; "
                              f"model expects {model.config.bands}")
        low = bicubic_resize(scene, scene.height // scale, scene.width // scale)
        reports.append(evaluate_all(predict(model, low), scene, scale))
        if args.baseline:
            up = bicubic_resize(low, scene.height, scene.width)
            base_reports.append(evaluate_all(up, scene, scale))

    def mean_of(rs):
        return MetricsReport(
            psnr=float(np.mean([r.psnr for r in rs])),
            ssim=float(np.mean([r.ssim for r in rs])),
            sam_deg=float(np.mean([r.sam_deg for r in rs])),
            cc=float(np.mean([r.cc for r in rs])),
            ergas=float(np.mean([r.ergas for r in rs])),
            scale=scale)

    report = mean_of(reports)
    if args.tsv:
        print(MetricsReport.tsv_header())
        print(report.to_tsv())
    else:
        print("model: " + report.to_line())
    if args.baseline:
        base = mean_of(base_reports)
        print(("bicubic\t" + base.to_tsv()) if args.tsv
              else "bicubic: " + base.to_line())
    return 0


def cmd_ablate(args):
    model_cfg, train_cfg, train_pairs, val_pairs = _prepare_run(args)
    if not val_pairs:
        raise ConfigError("ablation needs a non-empty validation split")
    rows = run_ablation(model_cfg, train_cfg, train_pairs, val_pairs)
    if args.tsv:
        print("variant\tparams\ttotal\t" + MetricsReport.tsv_header())
        for row in rows:
            print(f"{row.variant}\t{row.param_count}\t{row.final_total:.6f}\t"
                  + row.report.to_tsv())
    else:
        for row in rows:
            print(f"{row.variant}: params={row.param_count} "
                  f"total={row.final_total:.6f} " + row.report.to_line())
    return 0


def cmd_sweep(args):
    try:
        lambdas = [float(tok) for tok in args.lambdas.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse --lambdas {args.lambdas!r}") from None
    model_cfg, train_cfg, train_pairs, val_pairs = _prepare_run(args)
    if not val_pairs:
        raise ConfigError("sweep needs a non-empty validation split")
    rows = lambda_sweep(model_cfg, train_cfg, lambdas, train_pairs, val_pairs)
    if args.tsv:
        print("lambda\tpix\tsam\ttotal\t" + MetricsReport.tsv_header())
        for row in rows:
            print(f"{row.lam:g}\t{row.final_pix:.6f}\t{row.final_sam:.6f}\t"
                  f"{row.final_total:.6f}\t" + row.report.to_tsv())
    else:
        for row in rows:
            print(f"lambda={row.lam:g}: pix={row.final_pix:.6f} "
                  f"sam={row.final_sam:.6f} total={row.final_total:.6f} "
                  + row.report.to_line())
    return 0


def cmd_gradcheck(args):
    if args.channels % 2 or args.channels < 2:
        raise ConfigError(f"--channels must be even and >= 2; got {args.channels}")
    results = gradient_suite(spatial=args.size, channels=args.channels,
                             bands=args.bands, blocks=args.blocks,
                             seed=args.seed)
    failed = 0
    for name, err, tol in results:
        status = "ok" if err < tol else "FAIL"
        if err >= tol:
            failed += 1
        print(f"{name}: {err:.3e} (tol {tol:.0e}) {status}")
    print(f"gradcheck: {len(results) - failed}/{len(results)} ok")
    return 1 if failed else 0


_COMMANDS = {
    "synth": cmd_synth,
    "degrade": cmd_degrade,
    "import-raw": cmd_import_raw,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        args = _parse(argv)
        return _COMMANDS[args.command](args)
    except SdanetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
