"""Command-line front end.

Usage: ``entropic-tail <group> <action> [--config FILE] [options]``. Each run
writes its CSV/JSON artifacts, optional PNG figures and a ``manifest.json``
into the output directory. Exit status: 0 on success (including FAIL
verdicts, which are data), 2 on invalid input, 3 when the computation
itself reports a problem such as a divergent entropy integral.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, plotting
from .bounds import THETA_PREFACTOR, field_tail_bound, sup_tail_bound
from .config import (ConfigError, config_hash, jsonable, load, make_grid, parse_grid_flag, set_key,
                     tomllib, validate)
from .conjugate import SEED_NODES, co_transform, is_nu_convex, nu_star
from .continuity import continuity_modulus, tau_from_tail
from .counterexample import (build_model, exact_tail, fit_quartic_log_constant, quartic_log_bound,
                             sup_moment_curve, tail_shape_ratio)
from .fields import ConstantField, GaussianField, ScaledField, gaussian_circle
from .gls import INF, NoGLSHomeError, QuadratureError, default_p_grid, natural_psi, psi_from_spec
from .metric import FiniteIndexSpace, entropy_profile, harmonic_space
from .partition import (Partition, boundedness_certificate, partition_tail_y, search_partition)
from .simulate import BLOCK, dominance_report, empirical_sup_tail, sample_sup

log = logging.getLogger(__name__)

COMMANDS = {
    "psi": ("estimate",),
    "conjugate": ("eval",),
    "bound": ("compute",),
    "partition": ("search",),
    "continuity": ("certify",),
    "counterexample": ("run",),
    "verify": ("mc",),
}


class ComputationError(RuntimeError):
    pass


# output helpers --------------------------------------------------------

def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


class Outputs:
    def __init__(self, directory, plots: bool):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.plots = plots
        self.files: list = []

    def path(self, name) -> Path:
        self.files.append(name)
        return self.dir / name

    def csv(self, name, header, columns):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in zip(*columns):
                w.writerow([_cell(v) for v in row])
        return name

    def json(self, name, obj):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            json.dump(jsonable(obj), fh, sort_keys=True, indent=2, allow_nan=False)
            fh.write("\n")
        return name

    def plot(self, name, fn, *args, **kw):
        if self.plots:
            fn(self.path(name), *args, **kw)


# input construction ----------------------------------------------------

def _read_matrix(path) -> FiniteIndexSpace:
    try:
        return FiniteIndexSpace.from_csv(path)
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def build_field(cfg):
    m = cfg["model"]
    name = m["name"]
    model = None
    if name == "gaussian_circle":
        fld = gaussian_circle(m["n_points"], m["length_scale"], m["sigma"])
    elif name == "gaussian":
        sp = _read_matrix(m.get("cov_csv", m.get("path")))
        try:
            fld = GaussianField(sp.dist, sp.labels)
        except ValueError as exc:
            raise ConfigError(f"model.cov_csv: {exc}") from None
    elif name == "counterexample":
        model = build_model(m["beta"], m["N"], m["base"])
        fld = model.field(signed=m["signed"])
    elif name == "constant":
        fld = ConstantField(m["values"], b=float(m.get("b", INF)))
    else:
        raise ConfigError(f"model.name: {name!r} defines a space, not a field")
    if m["scale"] != 1.0:
        fld = ScaledField(fld, m["scale"])
    return fld, model


def build_space(cfg) -> FiniteIndexSpace:
    m = cfg["model"]
    if m["name"] == "harmonic":
        return harmonic_space(m["N"])
    return _read_matrix(m.get("path", m.get("cov_csv")))


def build_psi(cfg, fld=None):
    spec = cfg["psi"]
    if spec["kind"] == "natural":
        if fld is None:
            raise ConfigError("psi.kind: 'natural' needs a field model")
        return natural_psi(fld)
    try:
        return psi_from_spec(spec)
    except FileNotFoundError:
        raise ConfigError(f"psi.path: file not found: {spec.get('path')}") from None
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"psi: {exc}") from None


def grid(cfg, key, default=None):
    spec = cfg["grids"].get(key)
    if spec is None:
        return default
    return make_grid(spec)


# commands --------------------------------------------------------------

def cmd_psi_estimate(cfg, out: Outputs) -> dict:
    fld, _ = build_field(cfg)
    p = grid(cfg, "p", default_p_grid(fld.b))
    psi = natural_psi(fld, p_grid=p)
    vals = psi(p)
    out.csv("psi.csv", ["p", "psi"], [p, vals])
    summary = {"field": fld.name, "b": fld.b, "nodes": int(np.sum(np.isfinite(vals))),
               "p_min": float(p.min()), "p_max": float(p.max()), "nu_convex": is_nu_convex(psi)}
    out.json("psi_summary.json", summary)
    out.plot("psi.png", plotting.xy_curves, p, {"natural psi": vals}, "p", "psi(p)", fld.name)
    return summary


def cmd_conjugate_eval(cfg, out: Outputs) -> dict:
    fld = None
    if cfg["psi"]["kind"] == "natural":
        fld, _ = build_field(cfg)
    psi = build_psi(cfg, fld)
    x = grid(cfg, "x")
    vstar = np.asarray(co_transform(psi, x), dtype=float)
    nstar = np.asarray(nu_star(psi, x), dtype=float)
    out.csv("conjugate.csv", ["x", "vstar", "nustar"], [x, vstar, nstar])
    summary = {"psi": psi.name, "b": psi.b, "nu_convex": is_nu_convex(psi), "points": int(x.size)}
    out.json("conjugate_summary.json", summary)
    out.plot("conjugate.png", plotting.xy_curves, x, {"v*": vstar, "nu*": nstar}, "x", "value", psi.name)
    return summary


def cmd_bound_compute(cfg, out: Outputs) -> dict:
    u = grid(cfg, "u")
    pref = cfg["constants"]["theta_prefactor"]
    if cfg["model"]["name"] in ("space_csv", "harmonic"):
        if cfg["psi"]["kind"] == "natural":
            raise ConfigError("psi.kind: a bare distance matrix needs an explicit psi")
        space = build_space(cfg)
        psi = build_psi(cfg)
        res = sup_tail_bound(space, psi, u, anchor=1.0, prefactor=pref)
    else:
        fld, _ = build_field(cfg)
        psi = None if cfg["psi"]["kind"] == "natural" else build_psi(cfg, fld)
        res = field_tail_bound(fld, u, psi=psi, p_grid=grid(cfg, "p"), prefactor=pref)
    res.curve.to_csv(out.path("bound.csv"))
    if res.space is not None:
        prof = entropy_profile(res.space)
        rows = list(prof.rows())
        out.csv("entropy_profile.csv", ["eps", "H", "exact_flag"],
                [[r[0] for r in rows], [r[1] for r in rows], [str(r[2]).lower() for r in rows]])
    summary = dict(res.summary(), diagnostics=res.curve.diagnostics, bound_csv="bound.csv")
    out.json("bound_summary.json", summary)
    out.plot("bound.png", plotting.tail_curves, u, {"entropy bound": res.curve.values}, "sup-tail bound")
    if not res.finite:
        raise ComputationError("entropy integral diverges")
    return summary


def cmd_partition_search(cfg, out: Outputs) -> dict:
    fld, _ = build_field(cfg)
    u = grid(cfg, "u")
    pc = cfg["partition"]
    pref = cfg["constants"]["theta_prefactor"]
    p_grid = grid(cfg, "p")
    if "file" in pc:
        try:
            part = Partition.from_file(pc["file"], fld.labels)
        except FileNotFoundError:
            raise ConfigError(f"partition.file: file not found: {pc['file']}") from None
        except ValueError as exc:
            raise ConfigError(f"partition.file: {exc}") from None
        tail = partition_tail_y(fld, part, u, pref, p_grid)
        curve, env, objective, evals, exhaustive = tail.curve, tail.curve, tail.objective, 1, False
    else:
        res = search_partition(fld, u, pc["budget"], pc["seed"], pref, p_grid)
        part, curve, env = res.partition, res.curve, res.envelope
        objective, evals, exhaustive = res.objective, res.evaluations, res.exhaustive
        tail = partition_tail_y(fld, part, u, pref, p_grid)
    cert = boundedness_certificate(tail, pc["threshold"])
    curve.to_csv(out.path("partition_Y.csv"))
    env.to_csv(out.path("partition_envelope.csv"))
    part.to_file(out.path("partition.txt"), fld.labels)
    summary = {"parts": part.labelled(fld.labels), "objective": objective, "y_curve_csv": "partition_Y.csv",
               "envelope_csv": "partition_envelope.csv", "evaluations": evals, "exhaustive": exhaustive,
               "certificate": cert.to_dict(), "diagnostics": curve.diagnostics}
    out.json("partition.json", summary)
    out.plot("partition.png", plotting.tail_curves, u, {"Y (best partition)": curve.values,
                                                       "envelope": env.values}, "partition bound")
    return summary


def _continuity_tail(cfg, fld, model, u):
    src = cfg["continuity"]["tail_source"]
    if src == "entropy":
        res = field_tail_bound(fld, u, prefactor=cfg["constants"]["theta_prefactor"])
        if not res.finite:
            raise ComputationError("entropy integral diverges")
        return res.curve
    if model is None:
        raise ConfigError(f"continuity.tail_source: {src!r} needs the counterexample model")
    exact = exact_tail(model, u, truncated=False)
    if src == "exact":
        return exact
    return quartic_log_bound(u, fit_quartic_log_constant(exact))


def cmd_continuity_certify(cfg, out: Outputs) -> dict:
    fld, model = build_field(cfg)
    u = grid(cfg, "u")
    p = grid(cfg, "p", default_p_grid(fld.b))
    delta = grid(cfg, "delta")
    R = _continuity_tail(cfg, fld, model, u)
    tau = tau_from_tail(R, p)
    out.csv("tau.csv", ["p", "tau"], [tau.p, tau.values])
    if not tau.usable:
        out.json("continuity.json", {"b_tau": tau.b_tau, "certificate": "INCONCLUSIVE",
                                     "diagnostics": tau.diagnostics, "tau_csv": "tau.csv"})
        raise ComputationError(f"tau is not finite on enough p > 1 (b_tau = {tau.b_tau})")
    res = continuity_modulus(fld, tau, delta, cfg["continuity"]["threshold"],
                             cfg["constants"]["theta_prefactor"])
    out.csv("modulus.csv", ["delta", "bound"], [res.delta, res.bound])
    summary = {"b_tau": tau.b_tau, "tail_exponent": tau.tail_exponent, "tail_source": cfg["continuity"]["tail_source"],
               "certificate": res.verdict, "reason": res.reason, "modulus_csv": "modulus.csv",
               "tau_csv": "tau.csv", "diagnostics": tau.diagnostics}
    out.json("continuity.json", summary)
    out.plot("modulus.png", plotting.xy_curves, res.delta, {"Theta(delta)": res.bound}, "delta",
             "modulus bound", "continuity modulus", logx=True, logy=True)
    return summary


def _counterexample_p_grid():
    return np.unique(np.concatenate((np.linspace(1.0, 3.9, 30), 4.0 - np.geomspace(0.1, 1e-4, 16))))


def cmd_counterexample_run(cfg, out: Outputs) -> dict:
    m = cfg["model"]
    model = build_model(m["beta"], m["N"], m["base"])
    p = grid(cfg, "p", _counterexample_p_grid())
    u = grid(cfg, "u")
    curve = sup_moment_curve(model, p)
    out.csv("moments.csv", ["p", "sup_norm", "compensated"], [curve.p, curve.norm, curve.compensated])
    full = exact_tail(model, u, truncated=False)
    trunc = exact_tail(model, u, truncated=True)
    uu, ratio = tail_shape_ratio(full)
    C1 = float(np.max(ratio)) if ratio.size else math.nan
    out.csv("exact_tail.csv", ["u", "tail", "tail_truncated", "quartic_log_bound"],
            [u, full.values, trunc.values, quartic_log_bound(u, C1).values if ratio.size else np.full(u.shape, np.nan)])
    summary = {"beta": model.beta, "N": model.N, "C_beta": model.C, "C2": curve.C2,
               "C2_fit": float(curve.compensated[-1]), "p_at_fit": float(curve.p[-1]),
               "N_used": curve.N_used, "tail_sup_ratio": C1}
    out.json("counterexample.json", summary)
    out.plot("compensated.png", plotting.xy_curves, curve.p, {"(4-p)^(1/4) |sup g|_p": curve.compensated},
             "p", "compensated norm", f"beta = {model.beta:g}")
    out.plot("exact_tail.png", plotting.tail_curves, u, {"exact tail": full.values,
                                                        "truncated": trunc.values}, "counterexample tail")
    return summary


def _mc_bound(cfg, fld, model, u):
    src = cfg["mc"]["bound_source"]
    pref = cfg["constants"]["theta_prefactor"]
    if src == "entropy":
        return field_tail_bound(fld, u, prefactor=pref).curve
    if src == "singletons":
        return partition_tail_y(fld, Partition.singletons(len(fld)), u, pref).curve
    if src == "partition":
        pc = cfg["partition"]
        if "file" in pc:
            part = Partition.from_file(pc["file"], fld.labels)
            return partition_tail_y(fld, part, u, pref).curve
        return search_partition(fld, u, pc["budget"], pc["seed"], pref).curve
    if model is None:
        raise ConfigError("mc.bound_source: 'exact' needs the counterexample model")
    return exact_tail(model, u, truncated=True)


def cmd_verify_mc(cfg, out: Outputs) -> dict:
    fld, model = build_field(cfg)
    mc = cfg["mc"]
    u = grid(cfg, "u")
    bound = _mc_bound(cfg, fld, model, u)
    if mc["bound_scale"] != 1.0:
        bound = bound.scaled(mc["bound_scale"])
    sups = sample_sup(fld, mc["paths"], mc["seed"])
    emp = empirical_sup_tail(sups, u)
    rep = dominance_report(emp, bound, mc["alpha"], strict=mc["strict"])
    out.csv("mc_curves.csv", ["u", "empirical", "lower", "upper", "bound"],
            [u, rep.empirical, rep.lower, rep.upper, rep.bound])
    summary = dict(rep.to_dict(), bound_source=mc["bound_source"], bound_scale=mc["bound_scale"],
                   seed=mc["seed"], paths=mc["paths"], field=fld.name, curves_csv="mc_curves.csv")
    out.json("mc_report.json", summary)
    out.plot("mc.png", plotting.tail_curves, u, {"empirical": rep.empirical, "bound": rep.bound},
             f"{fld.name}: {rep.verdict}", band=(rep.lower, rep.upper))
    return summary


HANDLERS = {
    ("psi", "estimate"): cmd_psi_estimate,
    ("conjugate", "eval"): cmd_conjugate_eval,
    ("bound", "compute"): cmd_bound_compute,
    ("partition", "search"): cmd_partition_search,
    ("continuity", "certify"): cmd_continuity_certify,
    ("counterexample", "run"): cmd_counterexample_run,
    ("verify", "mc"): cmd_verify_mc,
}


# argument handling -----------------------------------------------------

def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. --set mc.seed=3 (value in TOML syntax)")
    p.add_argument("--model", help="model name")
    p.add_argument("--p-grid", help="min:max:count[:linear|log]")
    p.add_argument("--u-grid", help="min:max:count[:linear|log]")
    p.add_argument("--theta-prefactor", type=float)
    p.add_argument("--beta", type=float, help="counterexample exponent")
    p.add_argument("--N", type=int, help="truncation level of the counterexample or harmonic space")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entropic-tail",
                                     description="Entropy tail bounds for suprema of random fields.")
    groups = parser.add_subparsers(dest="group", required=True, metavar="group")
    actions = {}
    for g, acts in COMMANDS.items():
        gp = groups.add_parser(g)
        sub = gp.add_subparsers(dest="action", required=True, metavar="action")
        for a in acts:
            ap = sub.add_parser(a)
            _add_common(ap)
            actions[(g, a)] = ap
    actions[("conjugate", "eval")].add_argument("--x-grid")
    actions[("conjugate", "eval")].add_argument("--psi", help="psi kind")
    actions[("bound", "compute")].add_argument("--space", help="distance-matrix CSV")
    actions[("bound", "compute")].add_argument("--psi", help="psi kind")
    ps = actions[("partition", "search")]
    ps.add_argument("--budget", type=int)
    ps.add_argument("--seed", type=int)
    ps.add_argument("--partition-file")
    cc = actions[("continuity", "certify")]
    cc.add_argument("--delta-grid")
    cc.add_argument("--tail-source")
    vm = actions[("verify", "mc")]
    vm.add_argument("--bound-source")
    vm.add_argument("--paths", type=int)
    vm.add_argument("--seed", type=int)
    vm.add_argument("--alpha", type=float)
    vm.add_argument("--bound-scale", type=float)
    vm.add_argument("--strict", action="store_true")
    return parser


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def resolve_config(args) -> dict:
    raw = load(args.config) if args.config else {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected KEY=VALUE")
        k, v = item.split("=", 1)
        set_key(raw, k.strip(), _parse_value(v.strip()))
    flag_map = {
        "model": "model.name", "theta_prefactor": "constants.theta_prefactor",
        "budget": "partition.budget", "partition_file": "partition.file",
        "tail_source": "continuity.tail_source", "beta": "model.beta", "N": "model.N",
        "bound_source": "mc.bound_source", "paths": "mc.paths", "alpha": "mc.alpha",
        "bound_scale": "mc.bound_scale", "out": "output.dir", "psi": "psi.kind",
    }
    for attr, key in flag_map.items():
        val = getattr(args, attr, None)
        if val is not None:
            set_key(raw, key, val)
    if getattr(args, "seed", None) is not None:
        set_key(raw, "partition.seed" if args.group == "partition" else "mc.seed", args.seed)
    if getattr(args, "strict", False):
        set_key(raw, "mc.strict", True)
    if getattr(args, "space", None):
        set_key(raw, "model.name", "space_csv")
        set_key(raw, "model.path", args.space)
    for attr, key in (("p_grid", "p"), ("u_grid", "u"), ("x_grid", "x"), ("delta_grid", "delta")):
        val = getattr(args, attr, None)
        if val is not None:
            set_key(raw, f"grids.{key}", parse_grid_flag(val))
    if args.no_plots:
        set_key(raw, "output.plots", False)
    return validate(raw)


def manifest(cfg, command, outputs: Outputs, status: int) -> dict:
    seeds = {"mc": cfg["mc"]["seed"], "partition": cfg["partition"]["seed"]}
    return {
        "command": command,
        "version": __version__,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": seeds,
        "constants": {"theta_prefactor": cfg["constants"]["theta_prefactor"],
                      "theta_prefactor_default": THETA_PREFACTOR, "mc_block": BLOCK,
                      "conjugate_seed_nodes": SEED_NODES},
        "outputs": sorted(set(outputs.files)),
        "exit_status": status,
    }


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    command = f"{args.group} {args.action}"
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Outputs(cfg["output"]["dir"], cfg["output"]["plots"])
    status = 0
    summary: dict = {}
    try:
        summary = HANDLERS[(args.group, args.action)](cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = 2
    except ComputationError as exc:
        print(f"computation: {exc}", file=sys.stderr)
        status = 3
    except (NoGLSHomeError, QuadratureError, ValueError, ArithmeticError) as exc:
        print(f"computation: {exc}", file=sys.stderr)
        status = 3
    out.json("manifest.json", manifest(cfg, command, out, status))
    if status == 0:
        print(f"{command}: wrote {len(set(out.files))} files to {out.dir}")
        for k in sorted(summary):
            v = summary[k]
            if isinstance(v, (list, dict)):
                continue
            print(f"  {k} = {v}")
    return status


if __name__ == "__main__":
    sys.exit(main())
