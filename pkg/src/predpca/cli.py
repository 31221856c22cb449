"""Command-line driver.

Every subcommand resolves its configuration as flags over ``--config`` JSON
over built-in defaults, writes the resolved configuration to
``<out>/config.json`` and exits with 0 (success), 2 (usage or
configuration), 3 (bad data) or 4 (numerical failure).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, core, dataio, ica, mnist, modelsel, synth, sysid
from .errors import (
    DataError,
    DimensionError,
    FormatError,
    InputError,
    NumericError,
    ParameterError,
    PredPCAError,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

DEFAULTS = {
    "gen": {"kind": "linear", "nx": 5, "npsi": None, "ns": 30, "T": 10000, "seed": 0,
            "noise_ratio": 1.0, "radius": 0.9, "noise": "isotropic", "rho": "tanh"},
    "fit": {"Kp": 5, "Kf": 1, "Nu": "auto", "rel_tol": 1e-8, "online": False, "lr": 1e-2,
            "tau": None, "epochs": 100, "batch_size": None, "seed": 0, "test_fraction": 0.2},
    "select": {"Kp_range": "1", "Nu_range": None, "Kf": 1, "rel_tol": 1e-8,
               "plugin_correction": True},
    "identify": {"Kp": 5, "Kf": 1, "Nu": "auto", "Nx": "auto", "rel_tol": 1e-8, "truth": None},
    "benchmark": {"methods": "predpca,ar,pca,kalman", "T_grid": "1000,10000", "seeds": "0:3",
                  "noise_ratio": 1.0, "nx": 5, "ns": 30, "Kp": 5, "test_T": 20000,
                  "noise": "isotropic", "jobs": None},
    "rollout": {"mode": "cyclic", "horizon": 1000, "seed": 0, "states": 10, "ns": 40,
                "T": 20000, "noise": 0.5, "p_replace": 0.1, "Kp": None, "Nu": 10,
                "mnist_dir": None, "order": "ascending"},
    "mnist-prep": {"mnist_dir": None, "components": 40, "T": 60000, "test_T": 10000,
                   "order": "ascending", "p_replace": 0.1, "p_invert": 0.1, "seed": 0},
}


@dataclass
class RunConfig:
    command: str
    params: dict
    input: str = None
    out: str = None
    sources: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps({"command": self.command, "input": self.input, "out": self.out,
                           "params": self.params}, indent=2, sort_keys=True)


class UsageError(ParameterError):
    pass


# --------------------------------------------------------------------------
# parsing helpers
# --------------------------------------------------------------------------

def parse_range(text):
    """``"1:5"`` -> 1..5 inclusive, ``"1,3,7"`` -> those values, ``"4"`` -> (4,)."""
    text = str(text).strip()
    try:
        if ":" in text:
            lo, hi = (int(v) for v in text.split(":"))
            if hi < lo:
                raise UsageError(f"empty range {text!r}")
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse integer range {text!r}") from None


def _seeds(text):
    text = str(text)
    if ":" in text:
        lo, hi = (int(v) for v in text.split(":"))
        return list(range(lo, hi))  # half-open like Python ranges
    return parse_range(text)


def _auto_int(value, name):
    if value is None or str(value).lower() == "auto":
        return None
    try:
        return int(value)
    except ValueError:
        raise UsageError(f"{name} must be an integer or 'auto'") from None


def _bool(value):
    if isinstance(value, bool):
        return value
    return str(value).lower() in ("1", "true", "yes", "on")


def _add_common(p, with_input=True):
    p.add_argument("--config", help="JSON file with parameter values (flags take precedence)")
    p.add_argument("--out", help="output directory")
    if with_input:
        p.add_argument("--input", help="observations (.pmat or .csv)")


def build_parser():
    sup = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="predpca", description="Predictive PCA toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a ground-truth system and simulate it",
                       argument_default=sup)
    _add_common(p, with_input=False)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--linear", dest="kind", action="store_const", const="linear")
    g.add_argument("--nonlinear", dest="kind", action="store_const", const="nonlinear")
    p.add_argument("--nx", type=int)
    p.add_argument("--npsi", type=int)
    p.add_argument("--ns", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-ratio", dest="noise_ratio", type=float)
    p.add_argument("--radius", type=float)
    p.add_argument("--noise", choices=["isotropic", "anisotropic"])
    p.add_argument("--rho", choices=sorted(synth.RHO))

    p = sub.add_parser("fit", help="fit PredPCA and score a held-out split", argument_default=sup)
    _add_common(p)
    p.add_argument("--Kp", type=int)
    p.add_argument("--Kf", type=int)
    p.add_argument("--Nu")
    p.add_argument("--rel-tol", dest="rel_tol", type=float)
    p.add_argument("--online", action="store_const", const=True)
    p.add_argument("--lr", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--test-fraction", dest="test_fraction", type=float)

    p = sub.add_parser("select", help="minimize the test-error expectation over a grid",
                       argument_default=sup)
    _add_common(p)
    p.add_argument("--Nu-range", dest="Nu_range")
    p.add_argument("--Kp-range", dest="Kp_range")
    p.add_argument("--Kf", type=int)
    p.add_argument("--rel-tol", dest="rel_tol", type=float)
    p.add_argument("--no-plugin-correction", dest="plugin_correction", action="store_const",
                   const=False)

    p = sub.add_parser("identify", help="estimate all system parameters", argument_default=sup)
    _add_common(p)
    p.add_argument("--Kp", type=int)
    p.add_argument("--Kf", type=int)
    p.add_argument("--Nu")
    p.add_argument("--Nx")
    p.add_argument("--rel-tol", dest="rel_tol", type=float)
    p.add_argument("--truth", help="ground-truth bundle written by 'gen'")

    p = sub.add_parser("benchmark", help="compare predictors across sample sizes",
                       argument_default=sup)
    _add_common(p, with_input=False)
    p.add_argument("--methods")
    p.add_argument("--T-grid", dest="T_grid")
    p.add_argument("--seeds")
    p.add_argument("--noise-ratio", dest="noise_ratio", type=float)
    p.add_argument("--noise", choices=["isotropic", "anisotropic"])
    p.add_argument("--nx", type=int)
    p.add_argument("--ns", type=int)
    p.add_argument("--Kp", type=int)
    p.add_argument("--test-T", dest="test_T", type=int)
    p.add_argument("--jobs", type=int)

    p = sub.add_parser("rollout", help="greedy categorical rollout", argument_default=sup)
    _add_common(p, with_input=False)
    p.add_argument("--mode", choices=["cyclic", "mnist"])
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--states", type=int)
    p.add_argument("--ns", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--p-replace", dest="p_replace", type=float)
    p.add_argument("--Kp", type=int)
    p.add_argument("--Nu", type=int)
    p.add_argument("--mnist-dir", dest="mnist_dir")
    p.add_argument("--order", choices=list(mnist.ORDERS))

    p = sub.add_parser("mnist-prep", help="build PCA-compressed digit sequences from IDX files",
                       argument_default=sup)
    _add_common(p, with_input=False)
    p.add_argument("--mnist-dir", dest="mnist_dir")
    p.add_argument("--components", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--test-T", dest="test_T", type=int)
    p.add_argument("--order", choices=list(mnist.ORDERS))
    p.add_argument("--p-replace", dest="p_replace", type=float)
    p.add_argument("--p-invert", dest="p_invert", type=float)
    p.add_argument("--seed", type=int)
    return parser


def resolve_config(args):
    """Merge defaults, the optional JSON file and explicit flags (in rising priority)."""
    ns = vars(args).copy()
    command = ns.pop("command")
    cfg_path = ns.pop("config", None)
    params = dict(DEFAULTS[command])
    sources = {k: "default" for k in params}
    file_cfg = {}
    if cfg_path:
        path = Path(cfg_path)
        if not path.exists():
            raise UsageError(f"config file {cfg_path} not found")
        try:
            file_cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {cfg_path}: {exc}") from exc
        if "params" in file_cfg and isinstance(file_cfg["params"], dict):
            file_cfg = {**file_cfg["params"],
                        **{k: v for k, v in file_cfg.items() if k in ("input", "out")}}
    io = {"input": None, "out": None}
    for key, value in file_cfg.items():
        if key in io:
            io[key] = value
        elif key in params:
            params[key] = value
            sources[key] = "file"
        elif key != "command":
            raise UsageError(f"unknown configuration key {key!r} for {command}")
    for key, value in ns.items():
        if key in io:
            io[key] = value
        else:
            params[key] = value
            sources[key] = "flag"
    if io["out"] is None:
        raise UsageError("--out is required")
    return RunConfig(command, params, io["input"], io["out"], sources)


def _prepare_out(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json() + "\n")
    return out


def _load_input(cfg):
    if not cfg.input:
        raise UsageError("--input is required")
    if not Path(cfg.input).exists():
        raise UsageError(f"input {cfg.input} does not exist")
    return dataio.load_series(cfg.input)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_gen(cfg):
    p = cfg.params
    if p["kind"] == "linear":
        gt = synth.gen_linear(p["nx"], p["ns"], p["radius"], p["noise_ratio"], seed=p["seed"],
                              noise=p["noise"])
    else:
        npsi = p["npsi"] if p["npsi"] is not None else min(p["ns"], 10 * p["nx"])
        gt = synth.gen_nonlinear(p["nx"], npsi, p["ns"], rho=p["rho"], seed=p["seed"],
                                 spectral_radius=p["radius"], noise_ratio=p["noise_ratio"])
    traj = synth.simulate(gt, p["T"], seed=p["seed"] + 1)
    out = _prepare_out(cfg)
    dataio.save_bundle(out / "truth", "ground-truth", gt.to_arrays(), gt.meta())
    dataio.save_matrix(traj.states, out / "states.pmat")
    dataio.save_matrix(traj.observations, out / "observations.pmat")
    return EXIT_OK


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def cmd_fit(cfg):
    p = cfg.params
    series = _load_input(cfg)
    out = _prepare_out(cfg)
    train, test = dataio.split_contiguous(series, p["test_fraction"])
    train = dataio.center(train)
    ds = dataio.lag_embed(train, p["Kp"], p["Kf"])
    te = dataio.lag_embed(dataio.apply_center(test, train.mean), p["Kp"], p["Kf"])
    n_u = _auto_int(p["Nu"], "Nu")
    model = core.fit_batch(ds, 1, p["rel_tol"])
    if n_u is None:
        n_u = modelsel.choose_n_u(model)
    model = model.with_dims(n_u)
    if _bool(p["online"]):
        model = core.fit_online(ds, n_u, model=model, lr=p["lr"], tau=p["tau"],
                                epochs=p["epochs"], batch_size=p["batch_size"], seed=p["seed"])
    terms = modelsel.test_error_expectation(model)
    dataio.save_bundle(out / "model", "predpca-model",
                       {"W": model.W, "Q": model.Q, "mean": model.mean,
                        "eigenvalues": model.eig.values},
                       {"N_u": n_u, "K_p": p["Kp"], "K_f": p["Kf"]})
    _write_rows(out / "metrics.csv",
                ["N_u", "K_p", "K_f", "train_error", "test_error", "L_hat"],
                [[n_u, p["Kp"], p["Kf"], core.heldout_loss(model, ds),
                  core.heldout_loss(model, te), terms.L_hat]])
    return EXIT_OK


def cmd_select(cfg):
    p = cfg.params
    series = dataio.center(_load_input(cfg))
    out = _prepare_out(cfg)
    nu = parse_range(p["Nu_range"]) if p["Nu_range"] else list(range(1, series.n_s + 1))
    report = modelsel.select(series, nu, parse_range(p["Kp_range"]), p["Kf"], p["rel_tol"],
                             plugin_correction=_bool(p["plugin_correction"]))
    report.to_csv(out / "selection.csv")
    return EXIT_OK


def cmd_identify(cfg):
    p = cfg.params
    series = _load_input(cfg)
    out = _prepare_out(cfg)
    est = sysid.identify_all(series, p["Kp"], p["Kf"], N_u=_auto_int(p["Nu"], "Nu"),
                             N_x=_auto_int(p["Nx"], "Nx"), rel_tol=p["rel_tol"])
    sysid.save_estimate(est, out / "estimate")
    metrics = None
    if p["truth"]:
        if not Path(p["truth"]).exists():
            raise UsageError(f"truth bundle {p['truth']} does not exist")
        kind, arrays, meta = dataio.load_bundle(p["truth"])
        if kind != "ground-truth":
            raise FormatError(f"{p['truth']} is a {kind!r} bundle, not ground truth")
        metrics = sysid.compare_to_truth(est, synth.GroundTruth.from_arrays(arrays, meta))
    sysid.write_report(est, out / "report.csv", metrics)
    return EXIT_OK


def cmd_benchmark(cfg):
    p = cfg.params
    out = _prepare_out(cfg)
    sc = baselines.Scenario(N_x=p["nx"], N_s=p["ns"], noise_ratio=p["noise_ratio"],
                            noise=p["noise"], K_p=p["Kp"], test_T=p["test_T"])
    methods = [m.strip() for m in str(p["methods"]).split(",") if m.strip()]
    rows = baselines.run_benchmark(methods, parse_range(p["T_grid"]), _seeds(p["seeds"]), sc,
                                   jobs=p["jobs"])
    baselines.write_benchmark(rows, out / "benchmark.csv")
    return EXIT_OK


def cmd_rollout(cfg):
    p = cfg.params
    if p["horizon"] < 0:
        raise UsageError("horizon must be non-negative")
    if p["mode"] == "mnist":
        if not p["mnist_dir"] or not Path(p["mnist_dir"]).is_dir():
            raise UsageError("mnist mode needs --mnist-dir pointing at the IDX files")
        tr_x, tr_y, te_x, te_y = mnist.load_mnist(p["mnist_dir"])
        comp = mnist.fit_compressor(tr_x, 40)
        f_tr, l_tr = mnist.build_sequence(tr_x, tr_y, p["T"], p["order"], p["p_replace"],
                                          0.1, seed=p["seed"])
        f_te, l_te = mnist.build_sequence(te_x, te_y, 2000, p["order"], 0.0, 0.0,
                                          seed=p["seed"] + 1)
        s_tr, s_te = comp(f_tr), comp(f_te)
    else:
        tmpl = synth.categorical_templates(p["states"], p["ns"], seed=p["seed"])
        s_tr, l_tr = synth.categorical_sequence(tmpl, p["T"], p["noise"], p["p_replace"],
                                                seed=p["seed"] + 1)
        s_te, l_te = synth.categorical_sequence(tmpl, 2000, p["noise"], 0.0, seed=p["seed"] + 2)
    # the synthetic chain is first-order Markov; digit sequences profit from a few lags
    K_p = p["Kp"] if p["Kp"] is not None else (3 if p["mode"] == "mnist" else 1)
    out = _prepare_out(cfg)
    res = mnist.run_pipeline(s_tr, l_tr, s_te, l_te, K_p=K_p, N_u=p["Nu"],
                             order=p["order"], horizon=p["horizon"], seed=p["seed"])
    ica.write_rollout(res.rollout, out / "rollout.csv")
    return EXIT_OK


def cmd_mnist_prep(cfg):
    p = cfg.params
    if not p["mnist_dir"] or not Path(p["mnist_dir"]).is_dir():
        raise UsageError("--mnist-dir must point at a directory with the IDX files")
    tr_x, tr_y, te_x, te_y = mnist.load_mnist(p["mnist_dir"])
    out = _prepare_out(cfg)
    comp = mnist.fit_compressor(tr_x, p["components"])
    f_tr, l_tr = mnist.build_sequence(tr_x, tr_y, p["T"], p["order"], p["p_replace"],
                                      p["p_invert"], seed=p["seed"])
    f_te, l_te = mnist.build_sequence(te_x, te_y, p["test_T"], p["order"], 0.0, 0.0,
                                      seed=p["seed"] + 1)
    dataio.save_matrix(comp(f_tr), out / "train.pmat")
    dataio.save_matrix(comp(f_te), out / "test.pmat")
    dataio.save_matrix(comp.components, out / "components.pmat")
    for name, labels in (("train_labels.csv", l_tr), ("test_labels.csv", l_te)):
        np.savetxt(out / name, labels, fmt="%d")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "fit": cmd_fit, "select": cmd_select, "identify": cmd_identify,
            "benchmark": cmd_benchmark, "rollout": cmd_rollout, "mnist-prep": cmd_mnist_prep}


def exit_code(exc):
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, (DataError, FormatError, InputError, OSError)):
        return EXIT_DATA
    if isinstance(exc, (ParameterError, DimensionError)):
        return EXIT_USAGE
    return EXIT_USAGE


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = resolve_config(args)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[cfg.command](cfg)
    except (PredPCAError, OSError, np.linalg.LinAlgError) as exc:
        if isinstance(exc, np.linalg.LinAlgError):
            exc = NumericError(str(exc))
        print(f"predpca {args.command}: error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
