"""Command line front end.

    bayesid simulate --config exp.yaml [--out DIR] [--seed-override S] [--force]
    bayesid fit      --config exp.yaml --method bayes|dmd|tdmd|sindy
    bayesid predict  --config exp.yaml [--chain FILE] [--horizon T] [--draws N] [--x0 a,b,..]
    bayesid suite    landscape|sweep|flops|scaling --config exp.yaml [--full]

Configs are YAML with ``schema_version: 1``; unknown keys are errors.  Every
command writes a ``manifest-<command>.json`` with the config echo, seeds,
package version and SHA-256 of every file written.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .baselines import (SindyConfig, SnapshotPair, dmd_fit, eig_analysis, sindy_fit, tdmd_fit,
                        write_coefficients, write_eigenvalues, write_matrix)
from .experiments import (FlopDims, LandscapeConfig, SweepSpec, fit_bayes, mse_ratio_sweep,
                          objective_landscape, pendulum_data, residual_variance, scaling_probe,
                          write_flops, write_landscape)
from .filters import GaussianBelief, kf_marginal_loglik, ukf_marginal_loglik
from .mcmc import Chain, chain_diagnostics
from .models import (DictionaryLibrary, ObservationSet, TruthSystemSpec, make_model, observe,
                     simulate_truth)
from .posterior import Prior, PosteriorHandle, PriorSpec
from .prediction import Mode, posterior_predictive, reduce, summary_reduction, theta_estimators

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

# allowed keys per section; None means "free-form leaf" (validated downstream)
_SCHEMA = {
    "schema_version": None,
    "truth": {"system": None, "params": None, "x0": None, "grid": None,
              "literal_c2_factor": None},
    "data": {"n": None, "dt": None, "t0": None, "noise_std": None, "seed": None,
             "keep_every": None},
    "model": {"family": None, "d": None, "degree": None, "include_constant": None,
              "system": None, "substeps": None, "proc_cov": None, "meas_cov": None,
              "observation": None, "a": None, "b": None, "n_points": None, "x_min": None,
              "x_max": None, "literal_c2_factor": None},
    "prior": {"dyn": None, "obs": None, "proc": None, "meas": None},
    "filter": {"kind": None, "alpha": None, "kappa": None, "beta": None, "eps": None,
               "strict": None, "init": None},
    "mcmc": {"n_samples": None, "n0": None, "gamma": None, "adapt_interval": None,
             "s_d": None, "seed": None, "stage2_scale": None, "theta_init": None,
             "map_method": None, "max_evals": None, "burn_in": None},
    "sindy": {"degree": None, "include_constant": None, "threshold": None,
              "max_sweeps": None, "derivative": None},
    "predict": {"draws": None, "horizon": None, "seed": None, "x0": None, "t0": None},
    "suite": {"landscape": None, "sweep": None, "flops": None, "scaling": None},
    "output": {"dir": None},
}

_DEFAULTS = {
    "data": {"t0": 0.0, "keep_every": 1},
    "filter": {"kind": "KF", "alpha": 1e-3, "kappa": 0.0, "beta": 1.0, "eps": 1e-10,
               "strict": False},
    "mcmc": {"n_samples": 5000, "n0": 200, "gamma": 0.01, "adapt_interval": 1, "seed": 0,
             "stage2_scale": "cov", "map_method": "nelder-mead", "max_evals": 2000},
    "sindy": {"degree": 3, "include_constant": True, "threshold": 0.1, "max_sweeps": 10,
              "derivative": "forward"},
    "predict": {"draws": 200, "seed": 0},
    "output": {"dir": "out"},
}


def _check_keys(node, schema, where):
    """Walk a composed YAML node against the allowed-key schema (errors carry line numbers)."""
    label = where or "config"
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"{label} (line {node.start_mark.line + 1}): expected a mapping")
    for key_node, value_node in node.value:
        key = key_node.value
        name = f"{where}.{key}" if where else key
        if key not in schema:
            allowed = ", ".join(sorted(schema))
            raise ConfigError(f"{name} (line {key_node.start_mark.line + 1}): unknown key "
                              f"(allowed: {allowed})")
        if isinstance(schema[key], dict) and not (
                isinstance(value_node, yaml.ScalarNode) and value_node.tag.endswith(":null")):
            _check_keys(value_node, schema[key], name)


def load_config(path):
    """Parse and validate a YAML experiment config; returns a dict with defaults filled."""
    try:
        with open(path) as fh:
            text = fh.read()
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError(f"{path}: YAML parse error{loc}: {getattr(exc, 'problem', exc)}")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}")
    if raw is None:
        raise ConfigError(f"{path}: empty config")
    _check_keys(node, _SCHEMA, "")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, "
                          f"got {raw.get('schema_version')!r}")
    cfg = copy.deepcopy(raw)
    for sec, vals in _DEFAULTS.items():
        cfg[sec] = {**vals, **(cfg.get(sec) or {})}
    return cfg


def _need(cfg, sec, key):
    try:
        return cfg[sec][key]
    except (KeyError, TypeError):
        raise ConfigError(f"{sec}.{key}: required") from None


def truth_spec(cfg):
    t = cfg.get("truth")
    if not t:
        raise ConfigError("truth: required section")
    grid = t.get("grid") or {}
    unknown = set(grid) - {"n_points", "x_min", "x_max"}
    if unknown:
        raise ConfigError(f"truth.grid: unknown keys {sorted(unknown)}")
    try:
        return TruthSystemSpec(_need(cfg, "truth", "system"), dict(t.get("params") or {}),
                               None if t.get("x0") is None else np.array(t["x0"], float),
                               n_points=int(grid.get("n_points", 201)),
                               x_min=float(grid.get("x_min", -40.0)),
                               x_max=float(grid.get("x_max", 40.0)),
                               literal_c2_factor=bool(t.get("literal_c2_factor", False)))
    except ValueError as exc:
        raise ConfigError(f"truth: {exc}") from None


def data_settings(cfg):
    d = cfg["data"]
    n = int(_need(cfg, "data", "n"))
    dt = float(_need(cfg, "data", "dt"))
    if n < 1:
        raise ConfigError("data.n: must be >= 1")
    if dt <= 0:
        raise ConfigError("data.dt: must be positive")
    if float(_need(cfg, "data", "noise_std")) < 0:
        raise ConfigError("data.noise_std: must be >= 0")
    _need(cfg, "data", "seed")
    if int(d["keep_every"]) < 1:
        raise ConfigError("data.keep_every: must be >= 1")
    return d


def build_model(cfg, obs_dt):
    m = dict(cfg.get("model") or {})
    family = m.pop("family", None)
    if family is None:
        raise ConfigError("model.family: required")
    m["dt"] = obs_dt
    try:
        return make_model(family, m)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"model: {exc}") from None


def _prior_entry(entry, where):
    if entry is None:
        return None
    try:
        if isinstance(entry, list):
            return [Prior(**e) for e in entry]
        return Prior(**entry)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def build_prior(cfg, model):
    p = cfg.get("prior") or {}
    try:
        return PriorSpec.for_model(model, *(_prior_entry(p.get(k), f"prior.{k}")
                                            for k in ("dyn", "obs", "proc", "meas")))
    except ValueError as exc:
        raise ConfigError(f"prior: {exc}") from None


def build_handle(cfg, model, data):
    f = cfg["filter"]
    init, t0 = None, None
    if f.get("init"):
        i = f["init"]
        mean = np.asarray(i["mean"], float)
        cov = np.asarray(i.get("cov", 1e-8), float)
        if cov.ndim == 0:
            cov = float(cov) * np.eye(mean.size)
        elif cov.ndim == 1:
            cov = np.diag(cov)
        init, t0 = GaussianBelief(mean, cov), i.get("t0")
    try:
        return PosteriorHandle(model, data, build_prior(cfg, model), f["kind"], f["alpha"],
                               f["kappa"], f["beta"], f["eps"], init, t0,
                               strict=bool(f["strict"]))
    except ValueError as exc:
        raise ConfigError(f"filter: {exc}") from None


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class Outputs:
    """Output directory with overwrite protection and a manifest of written files."""

    def __init__(self, directory, force, planned):
        self.dir = Path(directory)
        self.files = []
        clash = [f for f in planned if (self.dir / f).exists()]
        if clash and not force:
            raise ConfigError(f"{self.dir}: would overwrite {', '.join(clash)} "
                              "(use --force)")
        self.dir.mkdir(parents=True, exist_ok=True)

    def path(self, name):
        self.files.append(name)
        return self.dir / name

    def manifest(self, command, cfg, seeds, extra=None):
        man = {"command": command, "version": __version__, "schema_version": SCHEMA_VERSION,
               "config": cfg, "seeds": seeds, "rng": "numpy Philox",
               "files": {f: _sha256(self.dir / f) for f in self.files}}
        if extra:
            man.update(extra)
        with open(self.dir / f"manifest-{command}.json", "w") as fh:
            json.dump(_jsonable(man), fh, indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _out_dir(args, cfg):
    return args.out or cfg["output"]["dir"]


def _obs_path(args, cfg):
    # a chain passed explicitly is read together with the observations next to it
    chain = getattr(args, "chain", None)
    if chain and (Path(chain).parent / "observations.csv").exists():
        return Path(chain).parent / "observations.csv"
    return Path(_out_dir(args, cfg)) / "observations.csv"


def _load_observations(args, cfg):
    path = _obs_path(args, cfg)
    if not path.exists():
        raise ConfigError(f"{path}: observation file not found (run 'simulate' first)")
    return ObservationSet.from_csv(path)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args, cfg):
    spec = truth_spec(cfg)
    d = data_settings(cfg)
    seed = int(args.seed_override if args.seed_override is not None else d["seed"])
    out = Outputs(_out_dir(args, cfg), args.force, ["truth.csv", "observations.csv"])
    n, k = int(d["n"]), int(d["keep_every"])
    times = float(d["t0"]) + float(d["dt"]) * np.arange(n * k)
    traj = simulate_truth(spec, times)
    obs = observe(traj, spec, float(d["noise_std"]), seed, k)
    traj.to_csv(out.path("truth.csv"))
    obs.to_csv(out.path("observations.csv"))
    out.manifest("simulate", cfg, {"noise_seed": seed}, {"truth": spec.to_dict()})


def _obs_dt(data: ObservationSet, cfg=None):
    """Observation spacing; the configured ``data.dt * keep_every`` when given."""
    d = (cfg or {}).get("data") or {}
    if d.get("dt") is not None:
        return float(d["dt"]) * int(d.get("keep_every", 1))
    if data.n < 2:
        raise ConfigError("observation file has fewer than two rows")
    return float(np.min(np.diff(data.times)))


def _default_theta_init(model, data):
    if model.family != "LinearMatrix" or not model.obs_identity or not data.dense:
        raise ConfigError("mcmc.theta_init: required for this model family")
    X = data.values
    A = dmd_fit(SnapshotPair.from_states(X))
    v = max(residual_variance(X, A), 1e-12)
    return np.concatenate([A.ravel(), np.full(model.partition.sizes[2], 0.5 * v),
                           np.full(model.partition.sizes[3], 0.5 * v)])


def cmd_fit(args, cfg):
    method = args.method
    if method is None:
        raise ConfigError("--method is required for fit")
    data = _load_observations(args, cfg)
    out_dir = _out_dir(args, cfg)
    if method == "bayes":
        model = build_model(cfg, _obs_dt(data, cfg))
        handle = build_handle(cfg, model, data)  # checks likelihood/model compatibility
        mc = cfg["mcmc"]
        seed = int(args.seed_override if args.seed_override is not None else mc["seed"])
        theta_init = (np.asarray(mc["theta_init"], float) if mc.get("theta_init") is not None
                      else _default_theta_init(model, data))
        if theta_init.size != model.p:
            raise ConfigError(f"mcmc.theta_init: expected {model.p} values")
        out = Outputs(out_dir, args.force, ["map.json", "chain.csv", "diagnostics.json"])
        fit = fit_bayes(handle, theta_init, int(mc["n_samples"]), seed, mc["map_method"],
                        int(mc["max_evals"]), int(mc["n0"]), float(mc["gamma"]))
        with open(out.path("map.json"), "w") as fh:
            json.dump(_jsonable(fit.map.to_dict()), fh, indent=2, sort_keys=True)
        fit.chain.to_csv(out.path("chain.csv"), extra={"posterior": handle.settings()})
        out.files.append("chain.csv.json")
        rep = chain_diagnostics(fit.chain, mc.get("burn_in"))
        with open(out.path("diagnostics.json"), "w") as fh:
            json.dump(_jsonable(rep.to_dict()), fh, indent=2, sort_keys=True)
        out.manifest("fit-bayes", cfg, {"mcmc_seed": seed})
        return
    if method in ("dmd", "tdmd"):
        if data.n < 2:
            raise ConfigError(f"{method}: needs at least two observations")
        pair = SnapshotPair.from_observations(data)
        A = dmd_fit(pair) if method == "dmd" else tdmd_fit(pair)
        out = Outputs(out_dir, args.force, [f"{method}_A.csv", f"{method}_eigs.csv"])
        write_matrix(out.path(f"{method}_A.csv"), A)
        write_eigenvalues(out.path(f"{method}_eigs.csv"), eig_analysis(A, _obs_dt(data)))
        out.manifest(f"fit-{method}", cfg, {})
        return
    if method == "sindy":
        if not data.dense:
            raise ConfigError("sindy: dense data required (observation file has missing rows)")
        s = cfg["sindy"]
        lib = DictionaryLibrary.polynomial(data.m, int(s["degree"]), bool(s["include_constant"]))
        coef = sindy_fit(data, SindyConfig(lib, float(s["threshold"]), int(s["max_sweeps"]),
                                           s["derivative"]))
        out = Outputs(out_dir, args.force, ["sindy_coefficients.csv"])
        write_coefficients(out.path("sindy_coefficients.csv"), coef, lib.labels)
        out.manifest("fit-sindy", cfg, {})
        return
    raise ConfigError(f"unknown method {method!r}")


def cmd_predict(args, cfg):
    data = _load_observations(args, cfg)
    model = build_model(cfg, _obs_dt(data, cfg))
    chain_path = Path(args.chain) if args.chain else Path(_out_dir(args, cfg)) / "chain.csv"
    if not chain_path.exists():
        raise ConfigError(f"{chain_path}: chain file not found")
    chain = Chain.from_csv(chain_path)
    if chain.p != model.p:
        raise ConfigError(f"{chain_path}: chain has {chain.p} parameters, model has {model.p}")
    p = cfg["predict"]
    draws = int(args.draws if args.draws is not None else p["draws"])
    burn = cfg["mcmc"].get("burn_in")
    kept, _ = chain.after_burn_in(burn)
    if draws > kept.shape[0]:
        raise ConfigError(f"draws={draws} exceeds the {kept.shape[0]} post-burn-in samples")
    horizon = float(args.horizon if args.horizon is not None
                    else p.get("horizon", data.times[-1] - data.times[0]))
    alt_x0 = args.x0 if args.x0 is not None else p.get("x0")
    if alt_x0 is not None:
        x0 = np.asarray([float(v) for v in str(alt_x0).split(",")] if isinstance(alt_x0, str)
                        else alt_x0, float)
        if x0.size != model.d:
            raise ConfigError(f"x0: expected {model.d} values")
        t0 = float(p.get("t0", 0.0))
    else:
        # continue from the filtered state at the last observation under theta-MAP
        theta = theta_estimators(chain, burn)["theta_map"]
        handle = build_handle(cfg, model, data)
        fn = kf_marginal_loglik if handle.kind == "KF" else ukf_marginal_loglik
        kw = {"init": handle.init, "t0": handle.t0, "store": True}
        res = fn(model, theta, data, **kw)
        if not res.beliefs:
            raise ConfigError("filter failed at theta-MAP; pass an explicit x0")
        x0, t0 = res.beliefs[-1].mean, float(data.times[-1])
    n_steps = int(round(horizon / model.dt))
    t_grid = t0 + model.dt * np.arange(n_steps + 1)
    seed = int(args.seed_override if args.seed_override is not None else p["seed"])
    ens = posterior_predictive(chain, model, x0, t_grid, draws, seed, burn)
    files = ["ensemble.csv", "reduction.csv"] + (["mode.csv"] if draws >= 30 else [])
    out = Outputs(_out_dir(args, cfg), args.force, files)
    ens.to_csv(out.path("ensemble.csv"))
    summary_reduction(ens).to_csv(out.path("reduction.csv"))
    if int(np.sum(ens.valid)) >= 30:
        reduce(ens, Mode()).to_csv(out.path("mode.csv"))
    out.manifest("predict", cfg, {"draw_seed": seed},
                 {"x0": x0, "t0": t0, "horizon": horizon, "draws": draws,
                  "invalid_rollouts": ens.n_invalid})


def cmd_suite(args, cfg):
    name = args.suite
    s = (cfg.get("suite") or {}).get(name) or {}
    out_dir = _out_dir(args, cfg)
    if name == "flops":
        dims = [FlopDims(**d) for d in s.get("dims", [{"d": 2, "m": 2, "p": 6, "n": 40}])]
        out = Outputs(out_dir, args.force, ["flops.csv"])
        write_flops(out.path("flops.csv"), dims)
        out.manifest("suite-flops", cfg, {})
    elif name == "landscape":
        t1 = np.linspace(*s.get("theta1", [0.0, 2.0]), int(s.get("grid", 50)))
        t2 = np.linspace(*s.get("theta2", [-15.0, -5.0]), int(s.get("grid", 50)))
        lc = LandscapeConfig(float(s.get("dt", 0.1)), tuple(s.get("x0", (0.1, -0.5))),
                             float(s.get("proc_var", 1e-4)), float(s.get("meas_var", 1e-2)))
        n_list = [int(n) for n in s.get("n_values", [20, 40, 80])]
        seed = int(s.get("seed", 0))
        objectives = s.get("objectives", ["NoProcessNoise", "NoMeasurementNoise",
                                          "LogPosterior"])
        planned = [f"landscape_{o}_n{n}.csv" for o in objectives for n in n_list]
        out = Outputs(out_dir, args.force, planned)
        for n in n_list:
            data, _ = pendulum_data(n, lc.dt, float(s.get("sigma", 0.1)), seed, lc.x0)
            for o in objectives:
                vals = objective_landscape(o, t1, t2, data, lc)
                write_landscape(out.path(f"landscape_{o}_n{n}.csv"), vals, t1, t2)
        out.manifest("suite-landscape", cfg, {"data_seed": seed})
    elif name == "sweep":
        s = dict(s)
        if args.full:
            s.update(realizations=500, n_samples=max(int(s.get("n_samples", 5000)), 20000))
        if args.seed_override is not None:
            s["base_seed"] = int(args.seed_override)
        try:
            spec = SweepSpec(**s)
        except TypeError as exc:
            raise ConfigError(f"suite.sweep: {exc}") from None
        out = Outputs(out_dir, args.force, ["sweep.csv"])
        mse_ratio_sweep(spec).to_csv(out.path("sweep.csv"))
        out.manifest("suite-sweep", cfg, {"base_seed": spec.base_seed}, {"spec": spec.to_dict()})
    elif name == "scaling":
        out = Outputs(out_dir, args.force, ["scaling.csv"])
        res = scaling_probe(s.get("filter", "KF"), s.get("d_list", [2]),
                            s.get("n_list", [1000, 10000, 100000]), int(s.get("trials", 3)),
                            int(s.get("seed", 0)))
        res.to_csv(out.path("scaling.csv"))
        out.manifest("suite-scaling", cfg, {"seed": int(s.get("seed", 0))},
                     {"note": "wall-clock timings are not reproducible bit-for-bit"})
    else:
        raise ConfigError(f"unknown suite {name!r}")


def build_parser():
    ap = argparse.ArgumentParser(prog="bayesid", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--seed-override", type=int, help="replace the config seed")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")

    common(sub.add_parser("simulate", help="simulate truth and noisy observations"))
    p = sub.add_parser("fit", help="fit a model (Bayesian or baseline)")
    common(p)
    p.add_argument("--method", choices=["bayes", "dmd", "tdmd", "sindy"], required=True)
    p = sub.add_parser("predict", help="posterior-predictive rollouts from a chain")
    common(p)
    p.add_argument("--chain", help="chain CSV (default OUT/chain.csv)")
    p.add_argument("--horizon", type=float, help="prediction horizon in seconds")
    p.add_argument("--draws", type=int, help="number of posterior draws")
    p.add_argument("--x0", help="alternate initial state, comma separated")
    p = sub.add_parser("suite", help="run an experiment suite")
    p.add_argument("suite", choices=["landscape", "sweep", "flops", "scaling"])
    common(p)
    p.add_argument("--full", action="store_true", help="full-scale sweep (slow)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        {"simulate": cmd_simulate, "fit": cmd_fit, "predict": cmd_predict,
         "suite": cmd_suite}[args.command](args, cfg)
    except (ConfigError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
