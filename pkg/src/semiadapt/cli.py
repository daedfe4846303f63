"""Command-line front end: ``semiadapt {gen,train,run,compare}``.

Every subcommand accepts ``--config FILE.json``. Values are merged as
built-in defaults < config file < command-line flags, and the merged result
is written next to the outputs (or to stderr for ``run``).

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import _numfmt
from . import datagen as dg
from .baseline import IdentifierConfig
from .errors import ConfigError, DimensionError, InputError, NumericalError
from .eval import ExperimentConfig, canonical_method, run_experiment
from .mlp import MlpConfig, TrainHyperparams, init_mlp, load_model, save_model, train
from .pipeline import METHODS, OnlinePredictor, PipelineConfig, run_stream
from .rls import RlsConfig
from .uncertainty import UncertaintyConfig

log = logging.getLogger("semiadapt")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

DEFAULTS = {
    "gen": {"kind": None, "trials": 50, "seed": 0, "out_dir": "trajectories",
            "motion_class": 0, "coeffs": None, "noise": None, "dt": 0.05,
            "duration": 5.0, "steps": 30},
    "train": {"data": [], "out_dir": "model", "seed": 0, "epochs": 100,
              "learning_rate": 1e-3, "batch_size": None, "normalize": False,
              "hidden": [40], "N": 3, "M": 3, "smooth": False, "include_action": False},
    "run": {"model": None, "inputs": ["-"], "output": "-", "diagnostics": None,
            "method": "rls-paa", "N": 3, "M": 3, "lambda1": 0.998, "lambda2": 1.0,
            "f_init": 1000.0, "window": 10, "noise_window": 50, "noise_prior": 1.0,
            "confidence": 0.95, "step_size": 1e-3, "steps_per_sample": 1,
            "smooth": False, "flush": False},
    "compare": {"out_dir": "report", "methods": None, "system": None, "seed": None,
                "trials": None, "no_traces": False},
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _csv_floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _csv_ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _csv_words(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _d(cmd, key):
    return f" (default: {DEFAULTS[cmd][key]})"


def build_parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", metavar="JSON",
                        help="JSON file with option values; flags given here take precedence")
    common.add_argument("-v", "--verbose", action="count",
                        help="more logging (repeat for debug)")

    p = argparse.ArgumentParser(prog="semiadapt",
                                description="Semi-adaptable network motion prediction tools.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=[common],
                              argument_default=argparse.SUPPRESS,
                              description=help_)

    g = add("gen", "Generate synthetic trajectory CSV files plus a manifest.")
    g.add_argument("kind", choices=("tv", "ti"), help="time-varying or time-invariant system")
    g.add_argument("--trials", type=int, help="number of trials" + _d("gen", "trials"))
    g.add_argument("--seed", type=int, help="trial i uses seed+i" + _d("gen", "seed"))
    g.add_argument("--out-dir", dest="out_dir", help="output directory" + _d("gen", "out_dir"))
    g.add_argument("--motion-class", dest="motion_class", type=int, choices=(0, 1),
                   help="built-in coefficient set, also written as the action label"
                   + _d("gen", "motion_class"))
    g.add_argument("--coeffs", type=_csv_floats,
                   help="six comma-separated coefficients, overrides --motion-class")
    g.add_argument("--noise", type=float,
                   help="half-width of the uniform noise (tv: 1.0 s, ti: 0.02)")
    g.add_argument("--dt", type=float, help="sample period in s" + _d("gen", "dt"))
    g.add_argument("--duration", type=float, help="tv trial length in s" + _d("gen", "duration"))
    g.add_argument("--steps", type=int, help="ti steps per trial" + _d("gen", "steps"))

    t = add("train", "Train the offline network on trajectory CSV files.")
    t.add_argument("data", nargs="*", help="CSV files or directories of CSV files")
    t.add_argument("--out-dir", dest="out_dir",
                   help="writes model.json, loss.csv, manifest.json" + _d("train", "out_dir"))
    t.add_argument("--seed", type=int, help="init and shuffling seed" + _d("train", "seed"))
    t.add_argument("--epochs", type=int, help="training epochs (>= 1)" + _d("train", "epochs"))
    t.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float,
                   help="gradient step" + _d("train", "learning_rate"))
    t.add_argument("--batch-size", dest="batch_size", type=int,
                   help="mini-batch size (default: full batch below 256 samples, else 64)")
    t.add_argument("--normalize", action=argparse.BooleanOptionalAction,
                   help="train in standardised coordinates" + _d("train", "normalize"))
    t.add_argument("--hidden", type=_csv_ints,
                   help="comma-separated hidden widths (default: 40)")
    t.add_argument("--N", dest="N", type=int, help="input positions" + _d("train", "N"))
    t.add_argument("--M", dest="M", type=int, help="predicted positions" + _d("train", "M"))
    t.add_argument("--smooth", action=argparse.BooleanOptionalAction,
                   help="low-pass filter positions first" + _d("train", "smooth"))
    t.add_argument("--include-action", dest="include_action",
                   action=argparse.BooleanOptionalAction,
                   help="feed the action label to the network" + _d("train", "include_action"))

    r = add("run", "Stream trajectories through the online predictor; writes NDJSON.")
    r.add_argument("inputs", nargs="*",
                   help="trajectory CSV files, '-' for stdin (default: -); "
                        "each file is one trial")
    r.add_argument("--model", help="model JSON from 'train' (required)")
    r.add_argument("--output", "-o", help="NDJSON destination, '-' for stdout (default: -)")
    r.add_argument("--diagnostics", help="write final diagnostics JSON here (default: stderr)")
    r.add_argument("--method", choices=METHODS, help="adaptation method" + _d("run", "method"))
    r.add_argument("--N", dest="N", type=int, help="input positions" + _d("run", "N"))
    r.add_argument("--M", dest="M", type=int, help="predicted positions" + _d("run", "M"))
    r.add_argument("--lambda1", type=float, help="forgetting factor" + _d("run", "lambda1"))
    r.add_argument("--lambda2", type=float, help="gain weighting" + _d("run", "lambda2"))
    r.add_argument("--f-init", dest="f_init", type=float,
                   help="initial gain scale" + _d("run", "f_init"))
    r.add_argument("--window", type=int,
                   help="parameter-drift averaging window" + _d("run", "window"))
    r.add_argument("--noise-window", dest="noise_window", type=int,
                   help="residual window for the noise variance" + _d("run", "noise_window"))
    r.add_argument("--noise-prior", dest="noise_prior", type=float,
                   help="noise variance used before residuals exist" + _d("run", "noise_prior"))
    r.add_argument("--confidence", type=float,
                   help="ellipsoid confidence level" + _d("run", "confidence"))
    r.add_argument("--step-size", dest="step_size", type=float,
                   help="identifier gradient step" + _d("run", "step_size"))
    r.add_argument("--steps-per-sample", dest="steps_per_sample", type=int,
                   help="identifier steps per sample" + _d("run", "steps_per_sample"))
    r.add_argument("--smooth", action=argparse.BooleanOptionalAction,
                   help="low-pass filter positions first" + _d("run", "smooth"))
    r.add_argument("--flush", action=argparse.BooleanOptionalAction,
                   help="also emit trailing predictions that never got ground truth")

    c = add("compare", "Run the four-way method comparison; --config is the experiment JSON.")
    c.add_argument("--out-dir", dest="out_dir",
                   help="writes report.json, summary.csv, timing.json, traces.csv, manifest.json"
                   + _d("compare", "out_dir"))
    c.add_argument("--methods", type=_csv_words,
                   help="comma-separated subset, e.g. rls-paa,none (default: all four)")
    c.add_argument("--system", choices=("ti", "tv", "csv"), help="overrides the config's system")
    c.add_argument("--seed", type=int, help="overrides the config's seed")
    c.add_argument("--trials", type=int, help="trials per motion class")
    c.add_argument("--no-traces", dest="no_traces", action="store_true",
                   help="skip traces.csv")
    return p


def _merge(cmd, args):
    opts = dict(DEFAULTS[cmd])
    cfg_path = getattr(args, "config", None)
    file_cfg = {}
    if cfg_path and cmd != "compare":
        file_cfg = _read_json(cfg_path)
        unknown = set(file_cfg) - set(opts)
        if unknown:
            raise ConfigError(f"{cfg_path}: unknown option(s) {sorted(unknown)}")
        opts.update(file_cfg)
    for key, val in vars(args).items():
        if key not in ("command", "config", "verbose"):
            opts[key] = val
    return opts


def _read_json(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return d


def _write_json(path, obj):
    Path(path).write_text(_numfmt.dumps(obj, indent=1) + "\n")


def _expand_inputs(items):
    paths = []
    for item in items:
        if item == "-":
            paths.append(item)
        elif os.path.isdir(item):
            found = sorted(glob.glob(os.path.join(item, "*.csv")))
            if not found:
                raise InputError(f"no CSV files in directory {item}")
            paths.extend(found)
        elif os.path.exists(item):
            paths.append(item)
        else:
            raise InputError(f"no such file: {item}")
    return paths


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen(o):
    kind = o["kind"]
    coeffs = o["coeffs"]
    if coeffs is None:
        table = dg.TV_CLASSES if kind == "tv" else dg.TI_CLASSES
        coeffs = table[o["motion_class"]]
    params = {"coeffs": tuple(coeffs), "trials": o["trials"], "seed": o["seed"],
              "dt": o["dt"], "action_label": o["motion_class"]}
    if o["noise"] is not None:
        params["noise_halfwidth"] = o["noise"]
    if kind == "tv":
        params["duration"] = o["duration"]
    else:
        params["steps"] = o["steps"]
    p = dg.params_from_dict(kind, params)
    trajs = dg.generate(kind, p)
    out = Path(o["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, traj in enumerate(trajs):
        name = f"{kind}_trial_{i:03d}.csv"
        dg.write_trajectory_csv(traj, out / name)
        files.append({"file": name, "seed": p.seed + i, "length": len(traj),
                      "truncated": traj.truncated})
    _write_json(out / "manifest.json", {"command": "gen", "options": o,
                                        "params": dg.params_to_dict(p), "trials": files})
    log.info("wrote %d trajectories to %s", len(files), out)
    return EXIT_OK


def cmd_train(o):
    if o["epochs"] < 1:
        raise UsageError("--epochs must be >= 1")
    paths = _expand_inputs(o["data"])
    if not paths:
        raise UsageError("no training data given")
    trajs = [dg.read_trajectory_csv(sys.stdin if p == "-" else p) for p in paths]
    if o["smooth"]:
        trajs = [dg.smooth(t) for t in trajs]
    N, M = o["N"], o["M"]
    samples = [s for t in trajs for s in dg.make_samples(t, N, M, o["include_action"])]
    if not samples:
        raise InputError(f"no samples after windowing {len(trajs)} trajectories "
                         f"with N={N}, M={M}")
    mcfg = MlpConfig(input_dim=3 * N + (1 if o["include_action"] else 0),
                     hidden_dims=tuple(o["hidden"]), output_dim=3 * M, seed=o["seed"],
                     include_action=o["include_action"])
    hp = TrainHyperparams(learning_rate=o["learning_rate"], epochs=o["epochs"],
                          batch_size=o["batch_size"], seed=o["seed"], normalize=o["normalize"])
    model, history = train(init_mlp(mcfg), samples, hp)
    out = Path(o["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model.json")
    with open(out / "loss.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for i, loss in enumerate(history, start=1):
            w.writerow([i, _numfmt.fmt_float(loss)])
    _write_json(out / "manifest.json", {"command": "train", "options": o, "files": paths,
                                        "samples": len(samples),
                                        "layer_dims": list(mcfg.layer_dims)})
    log.info("trained %s on %d samples, final loss %.6g", mcfg.layer_dims, len(samples),
             history[-1])
    return EXIT_OK


def _pipeline_config(o):
    return PipelineConfig(
        N=o["N"], M=o["M"], method=o["method"], confidence=o["confidence"],
        rls=RlsConfig(o["lambda1"], o["lambda2"], o["f_init"]),
        uncertainty=UncertaintyConfig(window_size=o["window"], noise_window=o["noise_window"],
                                      noise_prior=o["noise_prior"]),
        identifier=IdentifierConfig(o["step_size"], o["steps_per_sample"]))


def cmd_run(o):
    if not o["model"]:
        raise UsageError("--model is required")
    model = load_model(o["model"])
    cfg = _pipeline_config(o)
    predictor = OnlinePredictor(model, cfg)
    paths = _expand_inputs(o["inputs"] or ["-"])
    out = sys.stdout if o["output"] == "-" else open(o["output"], "w")
    n = 0
    try:
        for trial, path in enumerate(paths):
            src = sys.stdin if path == "-" else open(path, newline="")
            try:
                rows = dg.iter_csv_rows(src, "<stdin>" if path == "-" else path)
                if o["smooth"]:
                    traj = dg.smooth(_rows_to_traj(rows, path))
                    rows = zip(traj.timestamps, traj.positions,
                               [traj.action_label] * len(traj))
                predictor.start_trial()
                for res in run_stream(model, rows, cfg, predictor=predictor, flush=o["flush"]):
                    rec = res.to_record()
                    rec["trial"] = trial
                    out.write(_numfmt.dumps(rec) + "\n")
                    n += 1
            finally:
                if src is not sys.stdin:
                    src.close()
    finally:
        if out is not sys.stdout:
            out.close()
    diag = predictor.diagnostics()
    diag.update(records=n, model=o["model"], inputs=paths)
    text = _numfmt.dumps(diag) + "\n"
    if o["diagnostics"]:
        Path(o["diagnostics"]).write_text(text)
    else:
        sys.stderr.write(text)
    return EXIT_OK


def _rows_to_traj(rows, source):
    rows = list(rows)
    if not rows:
        return dg.Trajectory(np.zeros(0), np.zeros((0, 3)))
    actions = {r[2] for r in rows}
    if len(actions) > 1:
        raise InputError(f"{source}: action label changes within one trajectory")
    return dg.Trajectory(np.array([r[0] for r in rows]),
                         np.array([r[1] for r in rows]), actions.pop())


def cmd_compare(o, config_path):
    base = _read_json(config_path) if config_path else {}
    if o["methods"] is not None:
        base["methods"] = [canonical_method(m) for m in o["methods"]]
    for key in ("system", "seed", "trials"):
        if o[key] is not None:
            base[key] = o[key]
    cfg = ExperimentConfig.from_dict(base)
    report = run_experiment(cfg)
    out = report.write(o["out_dir"], traces_csv=not o["no_traces"])
    _write_json(out / "manifest.json", {"command": "compare", "options": o,
                                        "experiment": cfg.to_dict()})
    w = csv.writer(sys.stdout, lineterminator="\n")
    for name, m in report.methods.items():
        w.writerow([name, f"{m['pooled_cm2']:.6g}", "cm^2"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    verbosity = getattr(args, "verbose", 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(verbosity, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    cmd = args.command
    try:
        opts = _merge(cmd, args)
        if cmd == "gen":
            return cmd_gen(opts)
        if cmd == "train":
            return cmd_train(opts)
        if cmd == "run":
            return cmd_run(opts)
        return cmd_compare(opts, getattr(args, "config", None))
    except UsageError as exc:
        parser.error(str(exc))  # exits with 2
    except ConfigError as exc:
        print(f"semiadapt {cmd}: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"semiadapt {cmd}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, DimensionError, OSError) as exc:
        print(f"semiadapt {cmd}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
