"""Command-line entry point: ``cklab <subcommand> --config run.json --out DIR``.

Exit codes: 0 success, 1 acceptance failure, 2 bad configuration,
3 infeasible model, 4 numerical instability or non-convergence,
5 resource cap.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
import warnings
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, acceptance, fdt, langevin, model, noncrossing, twotime
from .errors import (CklabError, HorizonTooShortError, InfeasibleModelError,
                     InstabilityError, InvalidArgumentError, NonConvergenceError,
                     ResourceLimitError)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERIC, EXIT_RESOURCE = 0, 1, 2, 3, 4, 5
THREADS_ENV = "CKLAB_THREADS"

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_MODEL = {
    "type": "object",
    "additionalProperties": False,
    "required": ["terms"],
    "properties": {
        "terms": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["p", "a"],
                "properties": {"p": {"type": "integer", "minimum": 2}, "a": _NUM},
            },
        },
        "beta": {"type": "number", "minimum": 0},
    },
}
_GRID = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dt", "T"],
    "properties": {"dt": _POS, "T": _POS, "max_n": {"type": "integer", "minimum": 1}},
}
_SOFT = {
    "type": "object",
    "additionalProperties": False,
    "required": ["L", "k"],
    "properties": {
        "L": {"type": "number", "minimum": 0},
        "k": {"type": "integer", "minimum": 1},
        "K0": _POS,
        "substeps": {"type": "integer", "minimum": 1},
    },
}
_LANGEVIN = {
    "type": "object",
    "additionalProperties": False,
    "required": ["N", "dt", "T"],
    "properties": {
        "N": {"type": "integer", "minimum": 2},
        "dt": _POS,
        "T": _POS,
        "replicas": {"type": "integer", "minimum": 1},
        "save_stride": {"type": "integer", "minimum": 1},
        "disorder_seed": {"type": "integer", "minimum": 0},
    },
}


def _schema(required, props):
    base = {"schema_version": {"const": 1}, "seed": {"type": "integer", "minimum": 0}}
    base.update(props)
    return {"type": "object", "additionalProperties": False,
            "required": ["schema_version"] + required, "properties": base}


SCHEMAS = {
    "critical": _schema(["model"], {
        "model": _MODEL,
        "b": _POS,
        "betas": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "beta_range": {
            "type": "object", "additionalProperties": False,
            "required": ["start", "stop", "num"],
            "properties": {"start": {"type": "number", "minimum": 0},
                           "stop": {"type": "number", "minimum": 0},
                           "num": {"type": "integer", "minimum": 1}},
        },
    }),
    "solve-fdt": _schema(["fdt"], {
        "model": _MODEL,
        "fdt": {
            "type": "object", "additionalProperties": False, "required": ["dt"],
            "properties": {
                "dt": _POS, "T": _POS, "b": _POS, "gamma": _NUM,
                "phi": {"type": "array", "items": _NUM, "minItems": 1},
                "method": {"enum": ["direct", "fixed-point"]},
                "tol": _POS, "max_iter": {"type": "integer", "minimum": 1},
                "fit_window": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
            },
        },
    }),
    "solve-twotime": _schema(["model", "grid"], {
        "model": _MODEL,
        "grid": _GRID,
        "mode": {"enum": ["spherical", "soft"]},
        "soft": _SOFT,
        "sections": {
            "type": "object", "additionalProperties": False, "required": ["t", "tau_max"],
            "properties": {"t": {"type": "array", "items": _NUM}, "tau_max": _NUM},
        },
        "lags": {"type": "array", "items": _NUM},
        "export_h": {"type": "boolean"},
        "diagnostics": {"type": "boolean"},
    }),
    "psi-iterate": _schema(["model", "grid"], {
        "model": _MODEL,
        "grid": _GRID,
        "iterations": {"type": "integer", "minimum": 1},
        "perturbation": {"type": "number", "minimum": 0, "maximum": 0.5},
    }),
    "simulate": _schema(["model", "langevin", "soft"], {
        "model": _MODEL,
        "langevin": _LANGEVIN,
        "soft": _SOFT,
    }),
    "compare": _schema(["model", "langevin", "soft"], {
        "model": _MODEL,
        "langevin": _LANGEVIN,
        "soft": _SOFT,
        "grid_dt": _POS,
        "checkpoint": {"type": "string"},
    }),
}


class ConfigError(CklabError):
    pass


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def load_config(path, command: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as e:
        loc = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config error at {loc}: {e.message}") from e
    return cfg


def _mix(cfg):
    try:
        return model.MixturePolynomial(cfg["model"]["terms"]), float(cfg["model"].get("beta", 0.0))
    except InvalidArgumentError as e:
        raise ConfigError(str(e)) from e


class Emitter:
    def __init__(self, out: Path, cfg: dict):
        self.out = out
        self.hash = config_hash(cfg)
        out.mkdir(parents=True, exist_ok=True)

    @property
    def stamp(self) -> str:
        return f"cklab {__version__} config_sha256={self.hash}"

    def path(self, name):
        return self.out / name

    def json(self, name, data: dict):
        data = dict(data)
        data["config_sha256"] = self.hash
        data["version"] = __version__
        with open(self.out / name, "w") as fh:
            fh.write(json.dumps(_plain(data), indent=2, sort_keys=True) + "\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


# ---------------------------------------------------------------- commands

CRITICAL_COLUMNS = ["beta", "beta_c", "x_star", "q", "gamma", "d_infinity", "i_gamma",
                    "q_is_trivial", "decay_at_one", "decay_at_plateau"]


def cmd_critical(cfg, em: Emitter):
    mix, _ = _mix(cfg)
    b = float(cfg.get("b", 0.5))
    if "betas" in cfg:
        betas = [float(x) for x in cfg["betas"]]
    elif "beta_range" in cfg:
        r = cfg["beta_range"]
        betas = [float(x) for x in np.linspace(r["start"], r["stop"], r["num"])]
    else:
        betas = [float(cfg["model"].get("beta", 0.0))]
    rows = []
    for beta in betas:
        cp = model.critical_profile(mix, beta, b=b)
        rows.append([beta, cp.beta_c, cp.x_star, cp.q, cp.gamma, cp.d_infinity, cp.i_gamma,
                     int(cp.q_is_trivial), int(cp.criteria[0]), int(cp.criteria[1])])
    with open(em.path("critical.csv"), "w") as fh:
        fh.write(f"# {em.stamp}\n")
        fh.write(",".join(CRITICAL_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in r) + "\n")
    em.json("critical.json", {"mixture": mix.to_json(), "b": b, "rows": len(rows)})


def cmd_solve_fdt(cfg, em: Emitter):
    f = cfg["fdt"]
    b = float(f.get("b", 0.5))
    extra = {}
    mix = gamma = None
    if "phi" in f:
        prob = fdt.FdtProblem(b, np.polynomial.Polynomial(f["phi"]), f["dt"], f.get("T"))
    else:
        if "model" not in cfg:
            raise ConfigError("solve-fdt needs either fdt.phi or a model section")
        mix, beta = _mix(cfg)
        gamma = f.get("gamma")
        if gamma is None:
            gamma = model.gamma_of_beta(mix, beta)
        prob = fdt.FdtProblem.from_mixture(mix, beta, f["dt"], f.get("T"), gamma=gamma, b=b)
    if f.get("method", "direct") == "direct":
        sol = fdt.solve_direct(prob)
    else:
        sol = fdt.solve_fixed_point(prob, f.get("tol", 1e-10), f.get("max_iter", 500))
    if mix is not None:
        try:
            extra["residuals"] = fdt.stationary_residuals(sol, None, mix, beta, gamma, b).as_dict()
        except HorizonTooShortError as e:
            extra["residuals"] = {"skipped": str(e)}
    lo, hi = f.get("fit_window", [prob.T / 2, prob.T])
    try:
        C, R = sol.pair()
        extra["fitted_rate_R"] = fdt.decay_rate_fit(sol.tau, R, (lo, hi))[0]
        extra["fitted_rate_C"] = fdt.decay_rate_fit(sol.tau, sol.D - sol.d_infinity, (lo, hi))[0]
    except InvalidArgumentError as e:
        extra["fitted_rate"] = f"unavailable: {e}"
    extra["gamma"] = gamma
    extra["criteria"] = list(model.exp_decay_criterion(prob.phi, b, prob.d_infinity, 1e-12))
    sol.to_csv(em.path("fdt.csv"), em.stamp)
    em.json("fdt.json", json.loads(fdt.sidecar(sol, extra)))


def cmd_solve_twotime(cfg, em: Emitter):
    mix, beta = _mix(cfg)
    g = cfg["grid"]
    max_n = g.get("max_n", twotime.DEFAULT_MAX_N)
    if cfg.get("mode", "spherical") == "soft":
        s = cfg.get("soft")
        if s is None:
            raise ConfigError("soft mode needs a 'soft' section")
        pot = model.SoftPotential(s["L"], s["k"])
        grid = twotime.solve_soft(mix, beta, pot, g["dt"], g["T"], s.get("K0", 1.0),
                                  s.get("substeps"), max_n)
    else:
        grid = twotime.solve_spherical(mix, beta, g["dt"], g["T"], max_n)
    grid.save(em.path("twotime.ttgrid"))
    grid.write_diagonal_csv(em.path("diagonal.csv"), em.stamp)
    sec = cfg.get("sections")
    if sec:
        for t in sec["t"]:
            grid.write_section_csv(em.path(f"section_t{t:g}.csv"), t, sec["tau_max"], em.stamp)
    for tau in cfg.get("lags", []):
        grid.write_lag_csv(em.path(f"lag_{tau:g}.csv"), tau, em.stamp)
    meta = {"mixture": mix.to_json(), "beta": beta, "dt": grid.dt, "T": grid.T,
            "mode": cfg.get("mode", "spherical"),
            "response_bound_ratio": twotime.response_bound_check(grid),
            "min_R": float(grid.R.min()), "min_C": float(grid.C.min())}
    if cfg.get("diagnostics", True) and grid.mode == twotime.SPHERICAL:
        dg = twotime.fdt_violation(grid)
        meta.update(rho=dg.rho, I_hat=dg.I_hat_estimate, diag_identity_error=dg.diag_identity_error)
    if cfg.get("export_h"):
        H = noncrossing.h_ode(grid, mix, beta, grid.dt)
        H.to_csv(em.path("kraichnan_H.csv"), em.stamp)
    em.json("twotime.json", meta)


def cmd_psi_iterate(cfg, em: Emitter):
    mix, beta = _mix(cfg)
    g = cfg["grid"]
    sol = twotime.solve_spherical(mix, beta, g["dt"], g["T"], g.get("max_n", twotime.DEFAULT_MAX_N))
    eps = float(cfg.get("perturbation", 0.1))
    s = sol.times
    lag = np.tril(s[:, None] - s[None, :])
    damp = np.exp(-eps * lag)
    x = twotime.grid_from_dense(sol.R_dense() * damp, np.tril(sol.C_dense() * damp),
                                sol.dt, mix, beta)
    rows = []
    prev = twotime.sup_sum_distance(x, sol)
    for k in range(1, int(cfg.get("iterations", 5)) + 1):
        x = twotime.apply_psi(x, mix, beta)
        d = twotime.sup_sum_distance(x, sol)
        rows.append((k, d, d / prev if prev > 0 else 0.0))
        prev = d
    with open(em.path("psi.csv"), "w") as fh:
        fh.write(f"# {em.stamp}\n")
        fh.write("iteration,distance,ratio\n")
        for k, d, r in rows:
            fh.write(f"{k},{d!r},{r!r}\n")
    em.json("psi.json", {"iterations": len(rows), "final_distance": rows[-1][1],
                         "max_ratio": max(r for _, _, r in rows)})


def _langevin_cfg(cfg, seed):
    lc = cfg["langevin"]
    return langevin.LangevinConfig(
        N=lc["N"], dt=lc["dt"], T=lc["T"], replicas=lc.get("replicas", 1), seed=seed,
        save_stride=lc.get("save_stride", 1), disorder_seed=lc.get("disorder_seed"))


def cmd_simulate(cfg, em: Emitter, seed):
    mix, beta = _mix(cfg)
    s = cfg["soft"]
    run = langevin.simulate(mix, beta, model.SoftPotential(s["L"], s["k"]), _langevin_cfg(cfg, seed))
    run.to_csv(em.path("langevin.csv"), em.stamp)
    em.json("langevin.json", json.loads(run.metadata()))


def cmd_compare(cfg, em: Emitter, seed):
    mix, beta = _mix(cfg)
    s = cfg["soft"]
    pot = model.SoftPotential(s["L"], s["k"])
    lcfg = _langevin_cfg(cfg, seed)
    if "checkpoint" in cfg:
        grid = twotime.TwoTimeGrid.load(cfg["checkpoint"])
    else:
        gdt = float(cfg.get("grid_dt", 0.01))
        T = math.ceil(lcfg.T / gdt - 1e-9) * gdt
        grid = twotime.solve_soft(mix, beta, pot, gdt, T)
    run = langevin.simulate(mix, beta, pot, lcfg)
    rep = langevin.compare_to_limit(run, grid)
    em.json("compare.json", {"discrepancy": rep.as_dict(), "langevin": json.loads(run.metadata()),
                             "grid": {"dt": grid.dt, "T": grid.T, "mode": grid.mode}})


def cmd_verify(level: str, out: Path, only=None, echo=print) -> int:
    results = acceptance.run_all(level, only=only, echo=echo)
    out.mkdir(parents=True, exist_ok=True)
    report = {"level": level, "version": __version__,
              "criteria": [r.as_dict() for r in results],
              "failed": [r.cid for r in results if not r.passed]}
    with open(out / "verify.json", "w") as fh:
        fh.write(json.dumps(_plain(report), indent=2, sort_keys=True) + "\n")
    if report["failed"]:
        print("failing criteria: " + ", ".join(report["failed"]), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# ------------------------------------------------------------------- main

def _set_threads(n):
    if n is None:
        env = os.environ.get(THREADS_ENV)
        n = int(env) if env else None
    if n is None:
        return
    try:
        import numba
    except ImportError:  # pragma: no cover
        return
    with warnings.catch_warnings():
        # the threading-layer probe warns about old TBB builds it will not use
        warnings.simplefilter("ignore", numba.NumbaWarning)
        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def build_parser():
    p = argparse.ArgumentParser(prog="cklab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"cklab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("critical", "solve-fdt", "solve-twotime", "psi-iterate", "simulate", "compare"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    v = sub.add_parser("verify")
    v.add_argument("--level", choices=("quick", "full"), default="quick")
    v.add_argument("--only", nargs="*", default=None, help="criterion ids, e.g. A1 A4")
    v.add_argument("--out", default=".")
    v.add_argument("--threads", type=int, default=None)
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--config", default=None, help=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _set_threads(args.threads)
    out = Path(args.out)
    try:
        if args.command == "verify":
            return cmd_verify(args.level, out, args.only)
        cfg = load_config(args.config, args.command)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        if args.seed is not None:
            cfg = copy.deepcopy(cfg)
            cfg["seed"] = args.seed
        em = Emitter(out, cfg)
        if args.command == "critical":
            cmd_critical(cfg, em)
        elif args.command == "solve-fdt":
            cmd_solve_fdt(cfg, em)
        elif args.command == "solve-twotime":
            cmd_solve_twotime(cfg, em)
        elif args.command == "psi-iterate":
            cmd_psi_iterate(cfg, em)
        elif args.command == "simulate":
            cmd_simulate(cfg, em, seed)
        elif args.command == "compare":
            cmd_compare(cfg, em, seed)
        return EXIT_OK
    except (ConfigError, InvalidArgumentError, HorizonTooShortError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleModelError as e:
        print(f"infeasible model: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InstabilityError, NonConvergenceError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ResourceLimitError as e:
        print(f"resource limit: {e}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
