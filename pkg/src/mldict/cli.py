"""Command-line interface: ``mldict <command> [--config FILE] [--key value ...]``.

Every parameter can come from a flat ``key=value`` config file or from a
flag of the same name (dashes or underscores); flags win. Each run writes
its outputs under ``--out`` together with ``manifest.txt``, the fully
resolved configuration, which can be passed back as ``--config`` to repeat
the run.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import io
from .datasets import (
    PatchPoolSource,
    PlantedSource,
    extract_patches,
    load_image,
    reassemble,
)
from .exceptions import MLDError
from .experiments import (
    MeasurementEnsemble,
    compressed_recovery,
    generalization_experiment,
    mean_by,
    stability_experiment,
)
from .khyperline import ClusteringConfig
from .mld import MdlConfig, RobustMultilevelDictionary, estimate_level_sizes, train, train_robust
from .numerics import make_rng, psnr
from .pursuit import mulp_encode, reconstruct, rmld_encode
from .subspace import classification_experiment

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MANIFEST = "manifest.txt"


class ConfigError(Exception):
    pass


# -- value types ---------------------------------------------------------------


def _int_list(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _opt_float(text):
    return None if str(text).strip().lower() in ("", "none") else float(text)


def _opt_float_list(text):
    return [_opt_float(v) for v in str(text).split(",")]


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _str_list(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format(v) for v in value)
    return str(value)


# -- parameter tables ----------------------------------------------------------
# name -> (parser, default, help)

REQUIRED = object()

_COMMON = {
    "seed": (int, 0, "top-level random seed"),
    "out": (str, "mldict-out", "output directory"),
}

_CLUSTER = {
    "max_iter": (int, 100, "clustering iterations per level"),
    "n_init": (int, 1, "clustering initializations per level"),
    "init": (str, "random-samples", "random-samples or random-unit"),
}

_PATCHES = {
    "patch_side": (int, 8, "patch side when the input is a PGM image"),
    "stride": (int, 8, "patch stride for PGM input"),
    "max_patches": (int, 0, "random subset of patches (0 keeps all)"),
}

_SOURCE = {
    "source": (str, "planted", "planted or patches"),
    "images": (_str_list, [], "PGM files for source=patches"),
    "dim": (int, 16, "sample dimension of the planted source"),
    "planted_atoms": (int, 8, "planted atoms per level"),
    "planted_levels": (int, 2, "planted levels"),
    "noise": (float, 0.05, "noise standard deviation of the planted source"),
    "decay": (float, 0.25, "per-level coefficient variance decay of the planted source"),
    "coherence": (_opt_float, None, "maximum planted atom coherence (none = unbounded)"),
    "source_seed": (int, 0, "seed fixing the planted atoms or the patch pool"),
    "patch_side": (int, 8, "patch side for source=patches"),
}

COMMANDS = {
    "train": {
        "help": "learn a multilevel (or robust) dictionary",
        "params": {
            "input": (str, REQUIRED, "MLDMAT1 samples (M x T) or comma-separated PGM images"),
            "atoms": (_int_list, [8], "atoms per level (one value or one per level)"),
            "levels": (int, 4, "number of levels"),
            "error_goal": (float, 0.0, "squared residual norm below which samples stop"),
            "rounds": (int, 0, "robust ensemble rounds D (0 trains a plain dictionary)"),
            "subset_size": (int, 0, "robust subset size (0 means a quarter of the data)"),
            **_CLUSTER,
            **_PATCHES,
        },
    },
    "mdl-estimate": {
        "help": "choose atoms per level by minimum description length",
        "params": {
            "input": (str, REQUIRED, "MLDMAT1 samples or comma-separated PGM images"),
            "candidates": (_int_list, list(range(1, 17)), "candidate atom counts"),
            "levels": (int, 4, "maximum number of levels"),
            "alpha": (float, 0.5, "assumed fraction of energy represented per level"),
            "log_base": (float, math.e, "logarithm base of the score"),
            "restarts": (int, 5, "minimum clustering initializations per candidate"),
            "error_goal": (float, 0.0, "squared residual norm below which samples stop"),
            **_CLUSTER,
            **_PATCHES,
        },
    },
    "encode": {
        "help": "encode samples or an image with multilevel pursuit",
        "params": {
            "dictionary": (str, REQUIRED, "MLDDICT1 file"),
            "input": (str, REQUIRED, "MLDMAT1 samples or a PGM image"),
            "levels": (int, 0, "levels to use (0 uses all)"),
        },
    },
    "recover": {
        "help": "recover an image from random projections of its patches",
        "params": {
            "dictionary": (str, REQUIRED, "MLDDICT1 file"),
            "image": (str, REQUIRED, "PGM image"),
            "measurements": (_int_list, [16], "measurement counts N to sweep"),
            "snr": (_opt_float_list, [None], "measurement SNRs in dB (none = noiseless)"),
            "identity": (_bool, False, "use the identity instead of a Gaussian projection"),
            "levels": (int, 0, "levels to use (0 uses all)"),
        },
    },
    "stability": {
        "help": "dictionary drift under training-set replacement",
        "params": {
            "T": (_int_list, [200, 2000], "training set sizes"),
            "replace": (_int_list, [0, 10, 50, 100], "replaced sample counts"),
            "trials": (int, 10, "trials per size"),
            "atoms": (int, 8, "atoms per level"),
            "levels": (int, 2, "levels"),
            "n_init": (int, 1, "clustering initializations per level"),
            **_SOURCE,
        },
    },
    "generalize": {
        "help": "test error of MLD and RMLD for growing training sets",
        "params": {
            "T": (_int_list, [1000, 10000], "training set sizes"),
            "test_size": (int, 2000, "test samples"),
            "atoms": (int, 8, "atoms per level"),
            "levels": (int, 4, "levels"),
            "rounds": (int, 10, "robust ensemble rounds D"),
            "subset_fraction": (float, 0.25, "robust subset size as a fraction of T"),
            "rounds_sweep": (_int_list, [], "round counts swept at the largest T"),
            **_SOURCE,
        },
    },
    "subspace": {
        "help": "1-NN accuracy of sparse-code graph embeddings on a labeled CSV",
        "params": {
            "input": (str, "bundled", "labeled CSV (label in the last column) or 'bundled'"),
            "train_per_class": (_int_list, [25, 50], "training samples per class"),
            "methods": (_str_list, ["raw", "random", "lpp-mld", "lde-mld", "lde-rmld"], "methods"),
            "dim": (int, 2, "embedding dimension d"),
            "tau": (int, 5, "within-class (or graph) neighbors"),
            "tau_between": (int, 5, "between-class neighbors"),
            "atoms": (int, 8, "atoms per level"),
            "levels": (int, 4, "levels"),
            "rounds": (int, 10, "robust ensemble rounds D"),
            "subset_fraction": (float, 0.25, "robust subset fraction"),
        },
    },
}


def _params(command):
    return {**COMMANDS[command]["params"], **_COMMON}


def read_config(path):
    """Parse a flat ``key=value`` file; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for n, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve(command, file_values, flag_values):
    """Merge defaults, config file and flags into typed values."""
    table = _params(command)
    raw = dict(file_values)
    given = raw.pop("command", command)
    if given != command:
        raise ConfigError(f"config was written for '{given}', not '{command}'")
    unknown = sorted(set(raw) - set(table))
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
    raw.update({k: v for k, v in flag_values.items() if v is not None})
    cfg = {}
    for key, (parse, default, _) in table.items():
        if key in raw:
            try:
                cfg[key] = parse(raw[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw[key]!r} ({exc})") from exc
        elif default is REQUIRED:
            raise ConfigError(f"missing required parameter '{key}'")
        else:
            cfg[key] = default
    return cfg


def write_manifest(path, command, cfg):
    lines = [f"command={command}"] + [f"{k}={_format(cfg[k])}" for k in sorted(cfg)]
    Path(path).write_text("\n".join(lines) + "\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_format(r[h]) for h in header])


# -- shared helpers --------------------------------------------------------------


def _load_training_data(cfg):
    paths = [p.strip() for p in cfg["input"].split(",")]
    if all(p.lower().endswith(".pgm") for p in paths):
        sets = []
        for i, p in enumerate(paths):
            img = load_image(p, name=str(i))
            limit = cfg["max_patches"] or None
            sets.append(extract_patches(img, cfg["patch_side"], cfg["stride"], True, cfg["seed"], limit).patches)
        return np.vstack(sets)
    if len(paths) != 1:
        raise ConfigError("several inputs are only supported for PGM images")
    return io.read_samples(paths[0])


def _clustering(cfg):
    return ClusteringConfig(
        K=1,
        max_outer_iters=cfg["max_iter"],
        init_strategy=cfg["init"],
        seed=cfg["seed"],
        n_init=cfg["n_init"],
    )


def _write_trace(path, trace):
    _write_csv(path, ["level", "active", "represented_energy", "residual_energy"], trace.rows())


def _source(cfg):
    if cfg["source"] == "planted":
        return PlantedSource(
            cfg["dim"],
            cfg["planted_atoms"],
            cfg["planted_levels"],
            cfg["noise"],
            cfg["decay"],
            cfg["source_seed"],
            cfg["coherence"],
        )
    if cfg["source"] == "patches":
        if not cfg["images"]:
            raise ConfigError("source=patches needs images=...")
        side = cfg["patch_side"]
        pool = [
            extract_patches(load_image(p, str(i)), side, 1, True).patches
            for i, p in enumerate(cfg["images"])
        ]
        return PatchPoolSource(np.vstack(pool))
    raise ConfigError(f"unknown source {cfg['source']!r}")


def _levels(cfg):
    return cfg["levels"] or None


# -- commands --------------------------------------------------------------------


def cmd_train(cfg, out):
    X = _load_training_data(cfg)
    ccfg = _clustering(cfg)
    if cfg["rounds"] > 0:
        size = cfg["subset_size"] or max(1, X.shape[0] // 4)
        d, _, trace = train_robust(
            X, cfg["atoms"], cfg["levels"], cfg["rounds"], size, ccfg, cfg["error_goal"]
        )
    else:
        d, _, trace = train(X, cfg["atoms"], cfg["levels"], cfg["error_goal"], ccfg)
    io.write_dictionary(out / "dictionary.mld", d)
    _write_trace(out / "trace.csv", trace)


def cmd_mdl_estimate(cfg, out):
    X = _load_training_data(cfg)
    mcfg = MdlConfig(cfg["alpha"], tuple(cfg["candidates"]), cfg["levels"], cfg["log_base"], cfg["restarts"])
    sel = estimate_level_sizes(X, mcfg, _clustering(cfg), cfg["error_goal"])
    io.write_dictionary(out / "dictionary.mld", sel.dictionary)
    _write_trace(out / "trace.csv", sel.trace)
    rows = []
    for l, (scores, k_sel) in enumerate(zip(sel.scores, sel.level_sizes), start=1):
        for K in sorted(scores):
            rows.append({"level": l, "K": K, "score": float(scores[K]), "selected": int(K == k_sel)})
    _write_csv(out / "mdl_scores.csv", ["level", "K", "score", "selected"], rows)
    _write_csv(
        out / "selected.csv",
        ["level", "K"],
        [{"level": l, "K": k} for l, k in enumerate(sel.level_sizes, start=1)],
    )
    best = [min(s.values()) for s in sel.scores]
    if any(b < a for a, b in zip(best, best[1:])):
        print("warning: per-level minimum MDL score decreases across levels", file=sys.stderr)


def cmd_encode(cfg, out):
    d = io.read_dictionary(cfg["dictionary"])
    robust = isinstance(d, RobustMultilevelDictionary)
    enc = rmld_encode if robust else mulp_encode
    summary = []
    if cfg["input"].lower().endswith(".pgm"):
        img = load_image(cfg["input"])
        side = int(round(math.sqrt(d.n_features)))
        if side * side != d.n_features:
            raise ConfigError(f"dictionary dimension {d.n_features} is not a square patch")
        patches = extract_patches(img, side, side, subtract_mean=True)
        code = enc(patches.patches, d, _levels(cfg))
        est = reassemble(
            patches.with_patches(reconstruct(code, d.truncate(code.levels_used))),
            img.width,
            img.height,
            img.peak,
        )
        io.write_pgm(out / "reconstruction.pgm", est.pixels)
        summary.append({"metric": "psnr", "value": psnr(img.pixels, est.pixels, img.peak)})
    else:
        code = enc(io.read_samples(cfg["input"]), d, _levels(cfg))
    io.write_codes(out / "codes.mlc", code)
    summary.insert(0, {"metric": "mse", "value": float(np.mean(code.residual**2))})
    _write_csv(out / "summary.csv", ["metric", "value"], summary)


def cmd_recover(cfg, out):
    d = io.read_dictionary(cfg["dictionary"])
    img = load_image(cfg["image"])
    M = d.n_features
    rows = []
    for N in cfg["measurements"]:
        for snr in cfg["snr"]:
            if cfg["identity"]:
                if N != M:
                    raise ConfigError(f"identity projection needs measurements={M}")
                ens = MeasurementEnsemble.identity(M, cfg["seed"], snr)
            else:
                ens = MeasurementEnsemble.gaussian(N, M, cfg["seed"], snr)
            res = compressed_recovery(img, d, ens, _levels(cfg))
            tag = "none" if snr is None else _format(snr)
            io.write_pgm(out / f"recovered_N{N}_snr{tag}.pgm", res.image.pixels)
            rows.append({"image": Path(cfg["image"]).name, "measurements": N, "snr_db": snr, "psnr": res.psnr})
    _write_csv(out / "recovery.csv", ["image", "measurements", "snr_db", "psnr"], rows)


def cmd_stability(cfg, out):
    rows = stability_experiment(
        cfg["T"],
        cfg["replace"],
        _source(cfg),
        cfg["trials"],
        cfg["seed"],
        cfg["atoms"],
        cfg["levels"],
        ClusteringConfig(K=1, n_init=cfg["n_init"]),
    )
    _write_csv(out / "stability.csv", ["T", "replace_count", "trial", "difference"], rows)
    means = mean_by(rows, ["T", "replace_count"], "difference")
    _write_csv(
        out / "stability_mean.csv",
        ["T", "replace_count", "mean_difference"],
        [{"T": T, "replace_count": n, "mean_difference": v} for (T, n), v in means.items()],
    )


def cmd_generalize(cfg, out):
    src = _source(cfg)
    test = src.draw(cfg["test_size"], make_rng(cfg["seed"], 0))
    params = {"n_atoms": cfg["atoms"], "n_levels": cfg["levels"]}
    res = generalization_experiment(
        cfg["T"],
        test,
        src,
        params,
        {**params, "rounds": cfg["rounds"], "subset_fraction": cfg["subset_fraction"]},
        cfg["seed"],
        cfg["rounds_sweep"],
    )
    _write_csv(out / "generalization.csv", ["method", "T", "mse"], res["mse"])
    _write_csv(out / "levels.csv", ["method", "T", "level", "mse"], res["levels"])
    _write_csv(out / "rounds.csv", ["rounds", "train_mse", "test_mse"], res["rounds"])


def load_bundled_two_class():
    with resources.files("mldict").joinpath("data/two_class.csv").open() as fh:
        return io.read_labeled_csv(fh)


def cmd_subspace(cfg, out):
    if cfg["input"] == "bundled":
        X, y = load_bundled_two_class()
    else:
        X, y = io.read_labeled_csv(cfg["input"])
    rows, embs = classification_experiment(
        X,
        y,
        cfg["train_per_class"],
        cfg["methods"],
        cfg["seed"],
        cfg["dim"],
        cfg["tau"],
        cfg["tau_between"],
        cfg["atoms"],
        cfg["levels"],
        cfg["rounds"],
        cfg["subset_fraction"],
        return_embeddings=True,
    )
    _write_csv(out / "accuracy.csv", ["train_per_class", "method", "accuracy"], rows)
    for method, emb in embs.items():
        io.write_matrix(out / f"embedding_{method}.mat", emb.V)


HANDLERS = {
    "train": cmd_train,
    "mdl-estimate": cmd_mdl_estimate,
    "encode": cmd_encode,
    "recover": cmd_recover,
    "stability": cmd_stability,
    "generalize": cmd_generalize,
    "subspace": cmd_subspace,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="mldict", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, spec in COMMANDS.items():
        p = sub.add_parser(name, help=spec["help"], description=spec["help"])
        p.add_argument("--config", help="key=value file; flags override its entries")
        for key, (_, default, text) in _params(name).items():
            flag = "--" + key.replace("_", "-")
            shown = "required" if default is REQUIRED else f"default: {_format(default)}"
            p.add_argument(flag, dest=key, default=None, help=f"{text} ({shown})")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        file_values = read_config(args.config) if args.config else {}
        cfg = resolve(args.command, file_values, flags)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            HANDLERS[args.command](cfg, out)
        write_manifest(out / MANIFEST, args.command, cfg)
    except ConfigError as exc:
        print(f"mldict {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MLDError as exc:
        print(f"mldict {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"mldict {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # parameter validation inside the library (alpha range, tau, ...)
        print(f"mldict {args.command}: invalid parameter: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"mldict {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
