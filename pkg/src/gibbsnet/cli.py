"""Command-line entry point: train, eval, generate, analyze, canonicalize.

Configuration is a flat key=value file (one per line, # comments); every
key has a mirrored command-line flag, and unknown keys are rejected.  Each
run writes a manifest to the output directory before any artifact and
finishes it with the artifact list, so a run's outputs are exactly the
files its manifest names.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
abort during optimization.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint
from .data import (Dataset, IdxParseError, binarize, load_split,
                   resolve_data_dir, write_idx)
from .entropy import (einstein_entropy, entropy_table_export, intricates,
                      multivariate_kurtosis, qq_export)
from .nets import (build_ace, build_classifier, build_vae, generate,
                   latent_grid)
from .pgm import tile_grid, write_pgm
from .symmetry import batch_symmetry_stats, canonicalize, default_constants
from .trainer import NonFiniteLossError, TrainConfig, evaluate, train

CONFIG_ERROR, DATA_ERROR, NUMERIC_ERROR = 2, 3, 4


class ConfigError(ValueError):
    pass


_DEFAULTS = {
    "arch": "vae",                 # vae | ace | classifier | ace-nongen
    "lr": 2e-4,
    "decay_epochs": 500.0,
    "decay_rule": "hyperbolic",
    "batch_size": 1000,
    "epochs": 10,
    "seed": 0,
    "latent_family": "laplacian",
    "dual_recon": False,
    "enc_hidden": [700],
    "n_lat": 400,
    "dec_hidden": [700],
    "cls_hidden": [700, 700, 700],
    "n_classes": 10,
    "binarize": "stochastic",      # stochastic | threshold | none
    "train_limit": 0,
    "eval_limit": 0,
    "eval_batch": 1000,
    "checkpoint_every": 0,
}

_PARSERS = {
    "arch": str, "decay_rule": str, "latent_family": str, "binarize": str,
    "lr": float, "decay_epochs": float,
    "batch_size": int, "epochs": int, "seed": int, "n_lat": int,
    "n_classes": int, "train_limit": int, "eval_limit": int,
    "eval_batch": int, "checkpoint_every": int,
    "dual_recon": lambda s: {"on": True, "off": False}[s],
    "enc_hidden": lambda s: [int(t) for t in s.split(",") if t],
    "dec_hidden": lambda s: [int(t) for t in s.split(",") if t],
    "cls_hidden": lambda s: [int(t) for t in s.split(",") if t],
}


def parse_config_file(path):
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, text = line.partition("=")
            key, text = key.strip(), text.strip()
            if key not in _DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = _PARSERS[key](text)
            except (ValueError, KeyError):
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {text!r}")
    return values


def merge_config(file_values, args):
    merged = dict(_DEFAULTS)
    merged.update(file_values)
    for key in _DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = _PARSERS[key](flag) if isinstance(flag, str) else flag
    if merged["arch"] not in ("vae", "ace", "classifier", "ace-nongen"):
        raise ConfigError(f"unknown arch {merged['arch']!r}")
    if merged["latent_family"] not in ("gaussian", "laplacian"):
        raise ConfigError(f"unknown latent family {merged['latent_family']!r}")
    if merged["binarize"] not in ("stochastic", "threshold", "none"):
        raise ConfigError(f"unknown binarize mode {merged['binarize']!r}")
    return merged


def _build_id():
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"],
                             capture_output=True, text=True, timeout=5,
                             cwd=os.path.dirname(__file__))
        git = rev.stdout.strip() if rev.returncode == 0 else "unknown"
    except OSError:
        git = "unknown"
    return f"gibbsnet-{__version__}+{git}"


class Manifest:
    """Run record written before any artifact and finalized at exit."""

    def __init__(self, out_dir, command, config):
        self.out_dir = out_dir
        self.record = {
            "command": command,
            "config": config,
            "seed": config.get("seed"),
            "build_id": _build_id(),
            "out_dir": os.path.abspath(out_dir),
            "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "finished": None,
            "artifacts": [],
        }
        os.makedirs(out_dir, exist_ok=True)
        self.path = os.path.join(out_dir, "manifest.json")
        self._write()

    def _write(self):
        with open(self.path, "w") as fh:
            json.dump(self.record, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def artifact(self, name):
        self.record["artifacts"].append(name)
        return os.path.join(self.out_dir, name)

    def finish(self):
        self.record["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        self._write()


def _load_dataset(args, config, split):
    data_dir = resolve_data_dir(args.data_dir)
    ds = load_split(data_dir, split)
    if config["binarize"] != "none":
        images = binarize(ds.images, mode=config["binarize"],
                          seed=config["seed"])
        ds = Dataset(images, ds.labels, ds.split)
    return ds


def _build_model(config):
    arch = config["arch"]
    if arch in ("classifier", "ace-nongen"):
        return build_classifier(784, config["cls_hidden"], config["n_classes"],
                                config["seed"])
    if arch == "vae":
        return build_vae(784, config["enc_hidden"], config["n_lat"],
                         config["dec_hidden"], config["latent_family"],
                         config["seed"])
    return build_ace(784, config["enc_hidden"], config["n_lat"],
                     config["dec_hidden"], config["n_classes"],
                     config["cls_hidden"], config["latent_family"],
                     config["seed"])


def _train_config(config):
    objective = {"vae": "vae", "ace": "ace", "classifier": "classifier",
                 "ace-nongen": "ace-nongen"}[config["arch"]]
    return TrainConfig(
        objective=objective, learning_rate=config["lr"],
        decay_epochs=config["decay_epochs"], decay_rule=config["decay_rule"],
        batch_size=config["batch_size"], epochs=config["epochs"],
        seed=config["seed"], dual_recon=config["dual_recon"],
        binarized=config["binarize"] != "none",
        eval_batch=config["eval_batch"], eval_limit=config["eval_limit"],
        checkpoint_every=config["checkpoint_every"])


def cmd_train(args):
    config = merge_config(parse_config_file(args.config) if args.config else {},
                          args)
    manifest = Manifest(args.out_dir, "train", config)
    train_set = _load_dataset(args, config, "train")
    test_set = _load_dataset(args, config, "test")
    if config["train_limit"]:
        train_set = train_set.subset(config["train_limit"])
    model = _build_model(config)
    tc = _train_config(config)
    manifest.record["artifacts"].append("metrics.jsonl")
    manifest._write()
    history = train(model, train_set, test_set, tc, out_dir=args.out_dir)
    for name in sorted(os.listdir(args.out_dir)):
        if name.endswith(".gmck") and name not in manifest.record["artifacts"]:
            manifest.record["artifacts"].append(name)
    manifest.finish()
    final = history[-1]
    print(f"trained {config['arch']} for {tc.epochs} epochs; "
          f"final test metrics: {json.dumps(final['test'], sort_keys=True)}")
    return 0


def cmd_eval(args):
    config = merge_config(parse_config_file(args.config) if args.config else {},
                          args)
    model = load_checkpoint(args.checkpoint)
    # the checkpoint's architecture decides the objective; the non-generative
    # variant shares the classifier architecture, so it must be asked for
    if not (model.descriptor["arch"] == "classifier"
            and config["arch"] == "ace-nongen"):
        config["arch"] = model.descriptor["arch"]
    manifest = Manifest(args.out_dir, "eval", config)
    dataset = _load_dataset(args, config, args.split)
    tc = _train_config(config)
    metrics = evaluate(model, dataset, tc, noise_seed=11)
    path = manifest.artifact("eval.json")
    with open(path, "w") as fh:
        json.dump({"split": args.split, "metrics": metrics}, fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
    manifest.finish()
    print(json.dumps(metrics, sort_keys=True))
    return 0


def cmd_generate(args):
    config = dict(_DEFAULTS)
    config["seed"] = args.seed if args.seed is not None else 0
    model = load_checkpoint(args.checkpoint)
    manifest = Manifest(args.out_dir, "generate", config)
    side = int(round(np.sqrt(model.n_obs)))
    classes = range(model.n_classes) if args.class_id is None else [args.class_id]
    images = []
    per_class = args.grid if args.grid else args.samples
    for klass in classes:
        if args.grid:
            for point in latent_grid(args.grid, -6.0, 6.0):
                z = np.zeros(model.n_lat)
                z[0] = point
                images.append(generate(model, klass, z=z).reshape(side, side))
        else:
            from .autodiff import make_rng
            rng = make_rng(config["seed"], stream=17)
            for _ in range(args.samples):
                u = rng.uniform(1e-9, 1 - 1e-9, size=model.n_lat)
                images.append(generate(model, klass, noise=u).reshape(side, side))
    grid = tile_grid(images, columns=per_class)
    path = manifest.artifact("generated.pgm")
    write_pgm(path, grid)
    manifest.finish()
    print(f"wrote {len(images)} images to {path}")
    return 0


def cmd_analyze(args):
    config = dict(_DEFAULTS)
    config["binarize"] = "none"
    config["seed"] = args.seed if args.seed is not None else 0
    manifest = Manifest(args.out_dir, f"analyze:{args.kind}", config)
    dataset = _load_dataset(args, config, args.split)
    images = dataset.images
    report = einstein_entropy(images)
    side = int(round(np.sqrt(images.shape[1])))
    if args.kind == "entropy":
        entropy_table_export(report, manifest.artifact("entropy.csv"),
                             class_labels=dataset.labels)
    elif args.kind == "qq":
        qq_export(report.neg_log_lik, manifest.artifact("qq.csv"))
    elif args.kind == "kurtosis":
        path = manifest.artifact("kurtosis.json")
        with open(path, "w") as fh:
            json.dump({"multivariate_kurtosis": multivariate_kurtosis(images),
                       "observables": images.shape[1]}, fh, indent=2)
            fh.write("\n")
    elif args.kind == "intricates":
        low = intricates(report, dataset.labels, args.class_id, args.count)
        members = np.flatnonzero(dataset.labels == args.class_id)
        by_entropy = members[np.argsort(-report.neg_log_lik[members])]
        high = by_entropy[-args.count:][::-1]
        for name, idx in (("intricates_low.pgm", low),
                          ("intricates_high.pgm", high)):
            grid = tile_grid([images[i].reshape(side, side) for i in idx],
                             columns=min(30, args.count))
            write_pgm(manifest.artifact(name), grid)
        with open(manifest.artifact("intricates.csv"), "w") as fh:
            fh.write("rank,lowest_entropy_index,highest_entropy_index\n")
            for rank, (a, b) in enumerate(zip(low, high)):
                fh.write(f"{rank},{a},{b}\n")
    else:
        raise ConfigError(f"unknown analyze kind {args.kind!r}")
    manifest.finish()
    print(f"analysis '{args.kind}' written to {args.out_dir}")
    return 0


def cmd_canonicalize(args):
    config = dict(_DEFAULTS)
    config["binarize"] = "none"
    manifest = Manifest(args.out_dir, "canonicalize", config)
    dataset = _load_dataset(args, config, args.split)
    images = dataset.images
    if args.limit:
        images = images[:args.limit]
    side = int(round(np.sqrt(images.shape[1])))
    scale_c, half_width, r_min = default_constants(side)
    stats = batch_symmetry_stats(images)
    target_side = 2 * half_width + 1
    canon = np.zeros((len(images), target_side, target_side))
    for i, (row, st) in enumerate(zip(images, stats)):
        canon[i] = canonicalize(row.reshape(side, side), st, scale_c,
                                half_width, r_min=r_min).reshape(target_side,
                                                                 target_side)
    peak = canon.max()
    if peak > 1.0:    # collisions can stack mass above 1
        canon = canon / peak
    write_idx(manifest.artifact("canonical-images-idx3-ubyte"), canon)
    with open(manifest.artifact("symmetry_stats.csv"), "w") as fh:
        fh.write("observation,h,v,r,phi\n")
        for i, st in enumerate(stats):
            fh.write(f"{i},{st.h:.9g},{st.v:.9g},{st.r:.9g},{st.phi:.9g}\n")
    manifest.finish()
    print(f"canonicalized {len(images)} images into {target_side}x{target_side}")
    return 0


def make_parser():
    parser = argparse.ArgumentParser(
        prog="gibbsnet",
        description="Gibbs machines and auto-classifier-encoders over "
                    "MNIST-format data")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_out=True):
        p.add_argument("--data-dir", default=None,
                       help="IDX data directory (defaults to GIBBS_DATA_DIR)")
        if with_out:
            p.add_argument("--out-dir", required=True)
        p.add_argument("--seed", type=int, default=None)

    tr = sub.add_parser("train", help="optimize a model and log metrics")
    add_common(tr)
    tr.add_argument("--config", default=None, help="key=value config file")
    for key in ("arch", "latent-family", "decay-rule", "binarize"):
        tr.add_argument(f"--{key}", default=None)
    tr.add_argument("--lr", type=float, default=None)
    tr.add_argument("--decay-epochs", type=float, default=None)
    for key in ("batch-size", "epochs", "n-lat", "n-classes", "train-limit",
                "eval-limit", "eval-batch", "checkpoint-every"):
        tr.add_argument(f"--{key}", type=int, default=None)
    for key in ("enc-hidden", "dec-hidden", "cls-hidden"):
        tr.add_argument(f"--{key}", default=None)
    tr.add_argument("--dual-recon", choices=("on", "off"), default=None)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    add_common(ev)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--config", default=None)
    ev.add_argument("--split", choices=("train", "test"), default="test")
    ev.add_argument("--arch", default=None)
    ev.add_argument("--binarize", default=None)
    ev.add_argument("--eval-limit", type=int, default=None)
    ev.set_defaults(func=cmd_eval)

    ge = sub.add_parser("generate", help="decode grid points or prior samples")
    ge.add_argument("--checkpoint", required=True)
    ge.add_argument("--out-dir", required=True)
    ge.add_argument("--class-id", type=int, default=None)
    ge.add_argument("--grid", type=int, default=0,
                    help="points of a deterministic latent grid in [-6, 6]")
    ge.add_argument("--samples", type=int, default=0)
    ge.add_argument("--seed", type=int, default=None)
    ge.set_defaults(func=cmd_generate)

    an = sub.add_parser("analyze", help="entropy, intricates, qq or kurtosis")
    add_common(an)
    an.add_argument("--kind", required=True,
                    choices=("entropy", "intricates", "qq", "kurtosis"))
    an.add_argument("--split", choices=("train", "test"), default="train")
    an.add_argument("--class-id", type=int, default=8)
    an.add_argument("--count", type=int, default=30)
    an.set_defaults(func=cmd_analyze)

    ca = sub.add_parser("canonicalize", help="write canonical-frame images")
    add_common(ca)
    ca.add_argument("--split", choices=("train", "test"), default="train")
    ca.add_argument("--limit", type=int, default=0)
    ca.set_defaults(func=cmd_canonicalize)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.command == "generate" and not (args.grid or args.samples):
        parser.error("generate needs --grid N or --samples N")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return CONFIG_ERROR
    except (FileNotFoundError, IdxParseError, CheckpointError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return DATA_ERROR
    except NonFiniteLossError as err:
        print(f"numeric abort: {err}", file=sys.stderr)
        return NUMERIC_ERROR


if __name__ == "__main__":
    sys.exit(main())
