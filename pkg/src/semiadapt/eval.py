"""Four-way comparison of online adaptation methods.

Methods (aliases in parentheses):

* ``NN-w-RLS-PAA`` (``rls-paa``): output layer adapted by RLS;
* ``NN-w-ID`` (``identifier``, ``id``): every weight adapted by gradient descent;
* ``NN-wo-RLS-PAA`` (``none``): the offline network, no adaptation;
* ``NN-wo-ID`` (``none-id``): the identifier's offline network, no adaptation.

Per motion class the trials are split in order: the first ``train_fraction``
go to offline training, the rest are validation trials. Validation trials are
streamed class after class through one predictor per method, so adapted
parameters carry over between trials (and across the class boundary) while
the position buffer restarts with every trial. ``stream="per_trial"`` instead
gives every validation trial a fresh predictor.

``report.json`` is a pure function of the config; wall-clock latencies are
written separately to ``timing.json``.
"""
from __future__ import annotations

import csv
import glob
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _numfmt
from . import datagen as dg
from .baseline import IdentifierConfig
from .errors import ConfigError, DimensionError, InputError, NumericalError
from .mlp import MlpConfig, TrainHyperparams, init_mlp, train
from .pipeline import OnlinePredictor, PipelineConfig, run_stream
from .rls import RlsConfig
from .uncertainty import UncertaintyConfig

METHODS = ("NN-w-ID", "NN-w-RLS-PAA", "NN-wo-ID", "NN-wo-RLS-PAA")
ALIASES = {
    "rls-paa": "NN-w-RLS-PAA", "rls": "NN-w-RLS-PAA",
    "identifier": "NN-w-ID", "id": "NN-w-ID",
    "none": "NN-wo-RLS-PAA", "none-id": "NN-wo-ID",
}
# method -> (offline network, online method)
_PLAN = {
    "NN-w-ID": ("id", "identifier"),
    "NN-w-RLS-PAA": ("rls", "rls-paa"),
    "NN-wo-ID": ("id", "none"),
    "NN-wo-RLS-PAA": ("rls", "none"),
}
AXES = ("x", "y", "z")
CM_PER_UNIT = {"m": 100.0, "dm": 10.0, "cm": 1.0, "mm": 0.1}

# Identifier step sizes picked by tune_identifier_holdout (default grid, seeds
# and data settings) and frozen here so every comparison uses the same values.
# CSV data falls back to the IdentifierConfig defaults.
TUNED_IDENTIFIER = {
    "ti": IdentifierConfig(step_size=1e-2, steps_per_sample=2),
    "tv": IdentifierConfig(step_size=3e-6, steps_per_sample=5),
}


def canonical_method(name):
    if name in METHODS:
        return name
    try:
        return ALIASES[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown method {name!r}; choose from {METHODS} "
                          f"or aliases {sorted(ALIASES)}") from None


_SUBCONFIGS = {"train": TrainHyperparams, "rls": RlsConfig,
               "uncertainty": UncertaintyConfig, "identifier": IdentifierConfig}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    system: str = "ti"
    classes: tuple | None = None
    generator: dict = field(default_factory=dict)
    csv_classes: tuple | None = None
    trials: int = 50
    seed: int = 0
    train_fraction: float = 0.8
    N: int = 3
    M: int = 3
    smoothing: bool = False
    include_action: bool = False
    hidden_dims: tuple = (40,)
    identifier_hidden_dims: tuple | None = None
    train: TrainHyperparams = field(default_factory=TrainHyperparams)
    methods: tuple = METHODS
    rls: RlsConfig = field(default_factory=RlsConfig)
    uncertainty: UncertaintyConfig = field(default_factory=UncertaintyConfig)
    identifier: IdentifierConfig | None = None
    confidence: float = 0.95
    stream: str = "by_class"
    units: str | None = None

    def __post_init__(self):
        # nested settings may be given as plain dicts
        for key, typ in _SUBCONFIGS.items():
            val = getattr(self, key)
            if isinstance(val, dict):
                try:
                    object.__setattr__(self, key, typ(**val))
                except TypeError as exc:
                    raise ConfigError(f"{key}: {exc}") from None
        if self.system not in ("ti", "tv", "csv"):
            raise ConfigError(f"system must be 'ti', 'tv' or 'csv', got {self.system!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must be in (0, 1)")
        if self.trials < 2:
            raise ConfigError("need at least 2 trials per class")
        methods = tuple(dict.fromkeys(canonical_method(m) for m in self.methods))
        if not methods:
            raise ConfigError("at least one method is required")
        object.__setattr__(self, "methods", methods)
        if self.stream not in ("by_class", "per_trial"):
            raise ConfigError("stream must be 'by_class' or 'per_trial'")
        if self.system == "csv" and not self.csv_classes:
            raise ConfigError("system 'csv' needs csv_classes")
        if self.units is not None and self.units not in CM_PER_UNIT:
            raise ConfigError(f"units must be one of {sorted(CM_PER_UNIT)}")
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        if self.identifier_hidden_dims is not None:
            object.__setattr__(self, "identifier_hidden_dims",
                               tuple(self.identifier_hidden_dims))
        if self.classes is not None:
            object.__setattr__(self, "classes", tuple(tuple(c) for c in self.classes))
        if self.identifier is None:
            object.__setattr__(self, "identifier",
                               TUNED_IDENTIFIER.get(self.system, IdentifierConfig()))

    @property
    def native_units(self):
        if self.units:
            return self.units
        return {"ti": "dm", "tv": "m"}.get(self.system, "m")

    @property
    def class_coeffs(self):
        if self.classes is not None:
            return self.classes
        return dg.TI_CLASSES if self.system == "ti" else dg.TV_CLASSES

    def pipeline_config(self, method):
        return PipelineConfig(N=self.N, M=self.M, method=method, rls=self.rls,
                              uncertainty=self.uncertainty, identifier=self.identifier,
                              confidence=self.confidence)

    def to_dict(self):
        d = asdict(self)
        for key in ("hidden_dims", "identifier_hidden_dims", "methods"):
            if d[key] is not None:
                d[key] = list(d[key])
        if d["classes"] is not None:
            d["classes"] = [list(c) for c in d["classes"]]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown experiment key(s): {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path):
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None


# ---------------------------------------------------------------------------
# metric
# ---------------------------------------------------------------------------

def msee(predictions, truths, cm_per_unit=1.0):
    """Mean squared error per (horizon step, axis) and pooled over everything.

    Returns a dict with ``per_axis_horizon`` (``M x 3``), ``pooled``, their
    cm^2 counterparts and ``n``.
    """
    P = np.atleast_2d(np.asarray(predictions, dtype=float))
    T = np.atleast_2d(np.asarray(truths, dtype=float))
    if P.shape != T.shape:
        raise DimensionError(f"predictions {P.shape} vs truths {T.shape}")
    if P.shape[0] == 0 or P.shape[1] % 3:
        raise DimensionError("need at least one sample of stacked 3-D positions")
    sq = (P - T) ** 2
    return _summarise(sq.sum(axis=0), P.shape[0], cm_per_unit)


def _summarise(sse, n, cm_per_unit):
    sse = np.asarray(sse, dtype=float)
    per = (sse / n).reshape(-1, 3)
    pooled = float(sse.sum() / (n * sse.size))
    c2 = cm_per_unit ** 2
    return {"n": int(n), "per_axis_horizon": per, "pooled": pooled,
            "per_axis_horizon_cm2": per * c2, "pooled_cm2": pooled * c2}


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------

def _load_classes(cfg: ExperimentConfig):
    if cfg.system == "csv":
        classes = []
        for entry in cfg.csv_classes:
            patterns = [entry] if isinstance(entry, str) else list(entry)
            paths = sorted(p for pat in patterns for p in glob.glob(pat))
            if not paths:
                raise InputError(f"no trajectory files match {patterns}")
            classes.append([dg.read_trajectory_csv(p) for p in paths])
        return classes
    classes = []
    for ci, coeffs in enumerate(cfg.class_coeffs):
        params = dict(cfg.generator)
        params.update(coeffs=coeffs, trials=cfg.trials,
                      seed=cfg.seed + 1000 * ci, action_label=ci)
        classes.append(dg.generate(cfg.system, dg.params_from_dict(cfg.system, params)))
    return classes


def split_dataset(cfg: ExperimentConfig, classes):
    train_trials, val = [], []
    for trials in classes:
        n_train = int(round(cfg.train_fraction * len(trials)))
        n_train = min(max(n_train, 1), len(trials) - 1)
        train_trials.extend(trials[:n_train])
        val.append(trials[n_train:])
    if cfg.smoothing:
        train_trials = [dg.smooth(t) for t in train_trials]
        val = [[dg.smooth(t) for t in group] for group in val]
    return train_trials, val


def _train_model(cfg, hidden, train_trials):
    samples = [s for t in train_trials
               for s in dg.make_samples(t, cfg.N, cfg.M, cfg.include_action)]
    if not samples:
        raise InputError("no training samples after windowing")
    mcfg = MlpConfig(input_dim=3 * cfg.N + (1 if cfg.include_action else 0),
                     hidden_dims=hidden, output_dim=3 * cfg.M, seed=cfg.seed,
                     include_action=cfg.include_action)
    model, history = train(init_mlp(mcfg), samples, cfg.train)
    return model, history


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    config: dict
    methods: dict
    boundaries: list
    traces: dict
    training: dict
    timing: dict = field(default_factory=dict)

    def to_dict(self, include_timing=False):
        d = {"config": self.config, "methods": self.methods,
             "boundaries": self.boundaries, "training": self.training,
             "traces": self.traces}
        if include_timing:
            d["timing"] = self.timing
        return d

    def to_json(self, include_timing=False):
        return _numfmt.dumps(self.to_dict(include_timing), indent=1) + "\n"

    def pooled(self, method, cm2=True):
        return self.methods[canonical_method(method)]["pooled_cm2" if cm2 else "pooled"]

    def summary_rows(self):
        rows = []
        for name, m in self.methods.items():
            per = m["per_axis_horizon"]
            per_cm = m["per_axis_horizon_cm2"]
            for h in range(len(per)):
                for a, axis in enumerate(AXES):
                    rows.append([name, axis, f"k+{h + 1}", per[h][a], per_cm[h][a]])
            rows.append([name, "all", "all", m["pooled"], m["pooled_cm2"]])
        return rows

    def write(self, outdir, traces_csv=True):
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        (out / "timing.json").write_text(_numfmt.dumps(self.timing, indent=1) + "\n")
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "axis", "horizon", "msee_native", "msee_cm2"])
            for r in self.summary_rows():
                w.writerow(r[:3] + [_numfmt.fmt_float(r[3]), _numfmt.fmt_float(r[4])])
        if traces_csv:
            with open(out / "traces.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["method", "step", "class", "trial", "k"]
                           + [f"err_{a}_k+{h + 1}" for h in range(self.config["M"])
                              for a in AXES])
                for name, tr in self.traces.items():
                    for i, row in enumerate(tr):
                        w.writerow([name, i, row["class"], row["trial"], row["k"]]
                                   + [_numfmt.fmt_float(v) for v in row["error"]])
        return out


def _fsum_columns(rows):
    rows = list(rows)
    if not rows:
        return None
    return np.array([math.fsum(col) for col in zip(*rows)])


def _stream_groups(model, pcfg, groups, per_trial=False):
    """Run every trial of every group through the pipeline.

    Returns per-trial squared-error sums, per-trial coverage counts, the
    step trace, the number of scored predictions and predictor diagnostics.
    """
    predictor = None
    sse_rows, cov_rows, trace, diags = [], [], [], []
    n_total = 0
    for ci, group in enumerate(groups):
        for ti, traj in enumerate(group):
            if predictor is None or per_trial:
                if predictor is not None:
                    diags.append(predictor.diagnostics())
                predictor = OnlinePredictor(model, pcfg)
            predictor.start_trial()
            meas = ((t, p, traj.action_label)
                    for t, p in zip(traj.timestamps, traj.positions))
            sq_rows, cov = [], 0
            for res in run_stream(model, meas, pcfg, predictor=predictor):
                sq_rows.append(res.apriori_error ** 2)
                cov += res.prediction.coverage(res.truth)
                trace.append({"class": ci, "trial": ti, "k": res.k,
                              "error": res.apriori_error})
            if sq_rows:
                sse_rows.append(_fsum_columns(sq_rows))
                cov_rows.append(cov)
                n_total += len(sq_rows)
    if predictor is not None:
        diags.append(predictor.diagnostics())
    return sse_rows, cov_rows, trace, n_total, diags


def run_experiment(cfg: ExperimentConfig) -> EvalReport:
    classes = _load_classes(cfg)
    train_trials, val = split_dataset(cfg, classes)
    cm = CM_PER_UNIT[cfg.native_units]

    models, training = {}, {}
    needed = {_PLAN[m][0] for m in cfg.methods}
    id_hidden = cfg.identifier_hidden_dims or cfg.hidden_dims
    if "rls" in needed or id_hidden == cfg.hidden_dims:
        models["rls"], hist = _train_model(cfg, cfg.hidden_dims, train_trials)
        training["rls"] = {"hidden_dims": list(cfg.hidden_dims), "loss_first": hist[0],
                           "loss_last": hist[-1], "epochs": len(hist)}
    if "id" in needed:
        if id_hidden == cfg.hidden_dims:
            models["id"] = models["rls"]
            training["id"] = dict(training["rls"], shared_with="rls")
        else:
            models["id"], hist = _train_model(cfg, id_hidden, train_trials)
            training["id"] = {"hidden_dims": list(id_hidden), "loss_first": hist[0],
                              "loss_last": hist[-1], "epochs": len(hist)}

    boundaries, pos = [], 0
    for ci, group in enumerate(val):
        boundaries.append({"class": ci, "start": pos, "trials": len(group)})
        pos += sum(dg.n_windows(len(t), cfg.N, cfg.M) for t in group)

    results, traces, timing = {}, {}, {}
    for name in cfg.methods:
        model_key, method = _PLAN[name]
        pcfg = cfg.pipeline_config(method)
        try:
            run = _stream_groups(models[model_key], pcfg, val, cfg.stream == "per_trial")
        except NumericalError as exc:
            raise NumericalError(f"{name}: {exc}") from exc
        sse_rows, cov_rows, trace, n_total, diags = run
        if n_total == 0:
            raise InputError("validation trials are too short to produce any prediction")
        summary = _summarise(_fsum_columns(sse_rows), n_total, cm)
        summary["coverage"] = math.fsum(cov_rows) / (n_total * cfg.M)
        summary["architecture"] = {"hidden_dims": training[model_key]["hidden_dims"],
                                   "network": model_key}
        summary["adaptation_calls"] = sum(d["adaptations"] for d in diags)
        summary["psd_clips"] = sum(d["psd_clips"] for d in diags)
        summary["degenerate_steps"] = sum(d["degenerate"] for d in diags)
        results[name] = summary
        traces[name] = trace
        timing[name] = _merge_latency(diags)

    return EvalReport(cfg.to_dict(), results, boundaries, traces, training, timing)


def _merge_latency(diags):
    out = {}
    for key in ("adapt", "rls", "msee"):
        stats = [d["latency"][key] for d in diags if key in d["latency"]]
        if not stats:
            continue
        n = sum(s["n"] for s in stats)
        out[key] = {"mean_s": sum(s["mean"] * s["n"] for s in stats) / n,
                    "max_s": max(s["max"] for s in stats), "n": n}
    return out


def with_methods(cfg: ExperimentConfig, methods) -> ExperimentConfig:
    return replace(cfg, methods=tuple(methods))


IDENTIFIER_STEP_GRID = (1e-7, 3e-7, 1e-6, 3e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1)
HOLDOUT_SEED = 424_242


def tune_identifier_holdout(cfg: ExperimentConfig, step_sizes=IDENTIFIER_STEP_GRID,
                            steps_per_sample=(1, 2, 5), holdout_seed=HOLDOUT_SEED):
    """Pick the identifier step size on trials that are never evaluated.

    The offline network is trained on ``cfg``'s training split; each candidate
    then streams one freshly seeded trial per motion class through the lagged
    pipeline. Score is the pooled a-priori MSEE; a candidate that diverges
    scores ``inf``. Returns ``(best IdentifierConfig, {(step, n): score})``.
    """
    train_trials, _ = split_dataset(cfg, _load_classes(cfg))
    model, _ = _train_model(cfg, cfg.identifier_hidden_dims or cfg.hidden_dims, train_trials)
    held = []
    for ci, coeffs in enumerate(cfg.class_coeffs):
        params = dict(cfg.generator)
        params.update(coeffs=coeffs, trials=1, seed=holdout_seed + ci, action_label=ci)
        held.append(dg.generate(cfg.system, dg.params_from_dict(cfg.system, params)))
    scores = {}
    for n in steps_per_sample:
        for lr in step_sizes:
            pcfg = replace(cfg.pipeline_config("identifier"), identifier=IdentifierConfig(lr, n))
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    sse_rows, _, _, n_total, _ = _stream_groups(model, pcfg, held)
                score = float(_fsum_columns(sse_rows).sum() / (n_total * 3 * cfg.M))
            except NumericalError:
                score = math.inf
            scores[(lr, n)] = score if math.isfinite(score) else math.inf
    best = min(scores, key=lambda key: (scores[key], key))
    return IdentifierConfig(*best), scores
