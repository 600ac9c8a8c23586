"""Command-line entry point: ``quermass <command> [flags]``.

Every flag can also come from ``--config file.yaml`` (YAML or JSON); keys are
flag names with dashes or underscores, and values from the file override
flags given on the command line.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import diagnostics as D
from .estimation import (MODELS, TestFunctionSpec, build_sample_table, default_alphas,
                         default_grid, default_margin, estimator_suite, fit_from_grid, gnz_residual,
                         grid_integrals, observed_statistics, standard_specs, suite_variants)
from .experiments import PRESETS, run_experiment, summarize, summary_csv
from .geometry import MarkedConfiguration, Window, minkowski, read_discs, write_discs
from .model import QuermassParams, RadiusLaw
from .raster import approximate, rasterize, read_pgm, write_pgm
from .sampler import ChainSettings, derive_seed, replicate, run_chain

log = logging.getLogger("quermass")


class CliError(Exception):
    """A user-facing error: printed as one line, exit status 2."""


# -- shared flag groups ------------------------------------------------------

def _add_model(p, z=0.1):
    p.add_argument("--z", type=float, default=z, help="intensity")
    p.add_argument("--theta1", type=float, default=0.0, help="area coefficient")
    p.add_argument("--theta2", type=float, default=0.0, help="perimeter coefficient")
    p.add_argument("--theta3", type=float, default=0.0, help="Euler characteristic coefficient")
    p.add_argument("--radius-law", default="uniform(0.5, 2)", help="uniform(a, b) or discrete[(r, p), ...]")


def _add_window(p, default=(0.0, 0.0, 50.0, 50.0)):
    p.add_argument("--window", type=float, nargs=4, default=list(default), metavar=("X0", "Y0", "X1", "Y1"))


def _add_chain(p):
    p.add_argument("--steps", type=int, default=ChainSettings.n_steps, help="MCMC steps per chain")
    p.add_argument("--p-birth", type=float, default=1 / 3)
    p.add_argument("--p-death", type=float, default=1 / 3)
    p.add_argument("--p-move", type=float, default=1 / 3)
    p.add_argument("--move-sd", type=float, default=None, help="move step sd (default: R0)")


def _add_seed(p):
    p.add_argument("--seed", type=int, default=0)


def _params(a) -> QuermassParams:
    return QuermassParams(a.z, (a.theta1, a.theta2, a.theta3))


def _law(text) -> RadiusLaw:
    return RadiusLaw.parse(str(text))


def _window(a) -> Window:
    return Window(*map(float, a.window))


def _settings(a) -> ChainSettings:
    return ChainSettings(n_steps=a.steps, burn_in=0, p_birth=a.p_birth, p_death=a.p_death,
                         p_move=a.p_move, move_sd=a.move_sd, seed=a.seed)


def _write_json(path, doc):
    text = json.dumps(doc, indent=2, sort_keys=False, allow_nan=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _summary(config: MarkedConfiguration) -> dict:
    m = minkowski(config)
    return {"n": len(config), "area": m.area, "perimeter": m.perimeter, "euler": m.euler}


# -- commands ----------------------------------------------------------------

def cmd_simulate(a):
    law = _law(a.radius_law)
    res = run_chain(_params(a), law, _window(a), _settings(a), trace=a.trace is not None)
    write_discs(a.out, res.config)
    if a.pgm:
        write_pgm(a.pgm, rasterize(res.config, a.pixel_size))
    if a.trace:
        np.savetxt(a.trace, res.trace, delimiter=",", header="n,area,perimeter,euler", comments="",
                   fmt=["%d", "%.17g", "%.17g", "%d"])
    doc = _summary(res.config)
    doc["acceptance"] = res.acceptance_rates
    _write_json(a.summary, doc)


def cmd_replicate(a):
    law = _law(a.radius_law)
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    configs = replicate(_params(a), law, _window(a), _settings(a), a.reps, workers=a.workers)
    rows = []
    for i, cfg in enumerate(configs):
        write_discs(out / f"rep_{i:03d}.csv", cfg)
        rows.append({"replicate": i, **_summary(cfg)})
    _write_json(a.summary, rows)


def _load_obs(a, law: RadiusLaw) -> MarkedConfiguration:
    path = Path(a.obs)
    if not path.exists():
        raise CliError(f"observation file {path} not found")
    if path.suffix.lower() == ".pgm":
        raster = read_pgm(path, pixel_size=a.pixel_size)
        r_min = a.rmin if a.rmin is not None else max(law.r_min, raster.pixel_size)
        r_max = a.rmax if a.rmax is not None else law.R0
        return approximate(raster, r_min, r_max, coverage_tol=a.tol)
    return read_discs(path, _window(a))


def _alphas(a, law):
    return tuple(a.alphas) if a.alphas else default_alphas(law.R0)


def _grid(a, free):
    grid = default_grid(free)
    if a.grid:
        lo, hi, step = a.grid
        grid = {t: (lo, hi, step) for t in free}
    return grid


def cmd_estimate(a):
    law = _law(a.radius_law)
    if a.model not in MODELS:
        raise CliError(f"unknown model {a.model!r}; choose from {sorted(MODELS)}")
    free = MODELS[a.model]
    obs = _load_obs(a, law)
    alphas = _alphas(a, law)
    variants = suite_variants(alphas)
    if a.tests not in variants:
        raise CliError(f"unknown test-function set {a.tests!r}; choose from {sorted(variants)}")
    specs = standard_specs(alphas)
    margin = default_margin(law, specs)
    seed = derive_seed(a.seed, "estimate")
    table = build_sample_table(obs, law, specs, N=a.N, seed=seed, margin=margin)
    grid = _grid(a, free)
    S_all = observed_statistics(specs, obs, margin)
    chosen = variants[a.tests]
    gi = grid_integrals(table, grid)
    res = fit_from_grid(table, {s: S_all[s] for s in chosen}, gi, refine=not a.no_refine)
    fitted = QuermassParams(res.z_hat, res.theta_hat) if res.z_hat > 0 else None
    residuals = {}
    for s in specs:
        if fitted is not None:
            residuals[s.name] = gnz_residual(fitted, obs, s, margin, table=table)
    suite = estimator_suite(obs, law, model=a.model, alphas=alphas, grid=grid, refine=not a.no_refine,
                            table=table)
    doc = {
        "model": a.model,
        "tests": a.tests,
        "z_hat": res.z_hat,
        "theta_hat": list(res.theta_hat),
        "contrast": res.contrast,
        "radius_law": str(law),
        "window": list(obs.window.as_tuple()),
        "n_discs": len(obs),
        "N": a.N,
        "seed": a.seed,
        "alphas": list(alphas),
        "local_minima": res.grid_minima,
        "gnz_residuals": residuals,
        "variants": {k: e.as_dict() for k, e in suite.items()},
    }
    _write_json(a.out, doc)


def cmd_approximate(a):
    raster = read_pgm(a.input, pixel_size=a.pixel_size)
    r_min = a.rmin if a.rmin is not None else raster.pixel_size
    cfg = approximate(raster, r_min, a.rmax, coverage_tol=a.tol, max_discs=a.max_discs)
    write_discs(a.out, cfg)
    log.info("%d discs written to %s", len(cfg), a.out)


def cmd_diagnose(a):
    raster = read_pgm(a.data, pixel_size=a.pixel_size)
    fit = json.loads(Path(a.model_json).read_text())
    try:
        params = QuermassParams(fit["z_hat"], tuple(fit["theta_hat"]))
        law = _law(fit["radius_law"])
    except KeyError as exc:
        raise CliError(f"{a.model_json}: missing key {exc}; expected output of 'estimate'") from None
    step = a.r_step if a.r_step else raster.pixel_size
    r_grid = np.arange(0.0, a.r_max + 0.5 * step, step)
    kinds = tuple(a.kinds)
    data = D.curves(raster, r_grid, kinds)
    settings = replace(_settings(a), seed=0)
    env = D.envelopes(params, law, raster.window, kinds, n_sim=a.nsim, quantiles=tuple(a.quantiles),
                      seed=a.seed, r_grid=r_grid, pixel_size=raster.pixel_size, settings=settings)
    with open(a.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "r", "data", "lower", "upper"])
        for k in kinds:
            for q, r in enumerate(r_grid):
                w.writerow([k, f"{r:.10g}", f"{data[k].values[q]:.10g}",
                            f"{env[k].lower.values[q]:.10g}", f"{env[k].upper.values[q]:.10g}"])


def _spec(text: str) -> TestFunctionSpec:
    if text == "f0":
        return TestFunctionSpec.f0()
    if text == "iso":
        return TestFunctionSpec.f_iso()
    if text.startswith("alpha="):
        return TestFunctionSpec.f_alpha(float(text.split("=", 1)[1]))
    if text.startswith("sum="):
        return TestFunctionSpec.f_sum([float(v) for v in text.split("=", 1)[1].split(",")])
    raise CliError(f"unknown test function {text!r}; use f0, iso, alpha=<a> or sum=<a1,a2,...>")


def cmd_gnz_check(a):
    law = _law(a.radius_law)
    obs = _load_obs(a, law)
    params = _params(a)
    specs = [_spec(t) for t in a.tests]
    margin = default_margin(law, specs)
    table = build_sample_table(obs, law, specs, N=a.N, seed=derive_seed(a.seed, "gnz"), margin=margin)
    area = table.eroded_window.area
    out = []
    for s in specs:
        res = gnz_residual(params, obs, s, margin, table=table)
        out.append({"test": s.name, "residual": res, "per_area": res / area})
    _write_json(a.out, {"z": params.z, "theta": list(params.theta), "margin": margin,
                        "eroded_area": area, "residuals": out})


def cmd_experiment(a):
    if a.name not in PRESETS:
        raise CliError(f"unknown experiment {a.name!r}; choose from {sorted(PRESETS)}")
    records = run_experiment(a.name, reps=a.reps, seed=a.seed, workers=a.workers, N=a.N)
    text = summary_csv(summarize(a.name, records))
    if a.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(a.out).write_text(text)
    if a.details:
        _write_json(a.details, records)


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quermass", description="Quermass-interaction random sets: "
                                "simulation, estimation and diagnostics.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one MCMC chain and write the final discs")
    _add_model(s)
    _add_window(s)
    _add_chain(s)
    _add_seed(s)
    s.add_argument("--out", required=True, help="disc CSV (x,y,r)")
    s.add_argument("--pgm", help="optional raster rendering")
    s.add_argument("--pixel-size", type=float, default=0.1)
    s.add_argument("--trace", help="per-step n, area, perimeter, euler CSV")
    s.add_argument("--summary", default="-", help="JSON summary (default stdout)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("replicate", help="independent chains, one CSV each")
    _add_model(s)
    _add_window(s)
    _add_chain(s)
    _add_seed(s)
    s.add_argument("--reps", type=int, default=20)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--summary", default="-")
    s.set_defaults(func=cmd_replicate)

    def obs_flags(s):
        s.add_argument("--obs", required=True, help="disc CSV or PGM raster")
        _add_window(s)
        s.add_argument("--pixel-size", type=float, default=None, help="overrides the PGM sidecar")
        s.add_argument("--tol", type=float, default=0.05, help="coverage tolerance for PGM input")
        s.add_argument("--rmin", type=float, default=None)
        s.add_argument("--rmax", type=float, default=None)
        s.add_argument("--N", type=int, default=2500, help="Monte-Carlo dummy points")

    s = sub.add_parser("estimate", help="Takacs-Fiksel fit")
    obs_flags(s)
    s.add_argument("--radius-law", default="uniform(0.5, 2)")
    s.add_argument("--model", default="A", help=f"one of {sorted(MODELS)}")
    s.add_argument("--tests", default="all", help="test-function set reported as the main fit")
    s.add_argument("--alphas", type=float, nargs="+")
    s.add_argument("--grid", type=float, nargs=3, metavar=("LO", "HI", "STEP"))
    s.add_argument("--no-refine", action="store_true")
    _add_seed(s)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("approximate", help="cover a PGM raster by discs")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--pixel-size", type=float, default=None)
    s.add_argument("--tol", type=float, default=0.05)
    s.add_argument("--rmin", type=float, default=None, help="default: one pixel")
    s.add_argument("--rmax", type=float, required=True)
    s.add_argument("--max-discs", type=int, default=5000)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_approximate)

    s = sub.add_parser("diagnose", help="summary curves of a raster with model envelopes")
    s.add_argument("--data", required=True)
    s.add_argument("--model-json", required=True, help="output of 'estimate'")
    s.add_argument("--pixel-size", type=float, default=None)
    s.add_argument("--nsim", type=int, default=99)
    s.add_argument("--quantiles", type=float, nargs=2, default=[0.025, 0.975])
    s.add_argument("--kinds", nargs="+", default=list(D.KINDS))
    s.add_argument("--r-max", type=float, required=True)
    s.add_argument("--r-step", type=float, default=None, help="default: one pixel")
    _add_chain(s)
    _add_seed(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("gnz-check", help="GNZ residuals at given parameters")
    obs_flags(s)
    _add_model(s)
    s.add_argument("--tests", nargs="+", default=["f0"], help="f0, iso, alpha=<a>, sum=<a1,...>")
    _add_seed(s)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_gnz_check)

    s = sub.add_parser("experiment", help="run a named simulation study")
    s.add_argument("name", help=f"one of {sorted(PRESETS)}")
    s.add_argument("--reps", type=int, default=None)
    s.add_argument("--N", type=int, default=2500)
    s.add_argument("--workers", type=int, default=1)
    _add_seed(s)
    s.add_argument("--out", default="-", help="summary CSV")
    s.add_argument("--details", help="per-replicate JSON")
    s.set_defaults(func=cmd_experiment)
    return p


def _apply_config(args, path):
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except FileNotFoundError:
        raise CliError(f"config file {path} not found") from None
    except yaml.YAMLError as exc:
        raise CliError(f"config file {path} is not valid YAML/JSON: {exc}") from None
    if not isinstance(data, dict):
        raise CliError(f"config file {path} must hold a mapping of flag names to values")
    for key, value in data.items():
        dest = str(key).replace("-", "_")
        if dest in ("command", "func", "config") or not hasattr(args, dest):
            raise CliError(f"unknown config key {key!r} for '{args.command}'")
        setattr(args, dest, value)


def main(argv=None) -> int:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    args = parser.parse_args(rest)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if known.config:
            _apply_config(args, known.config)
        args.func(args)
    except CliError as exc:
        print(f"quermass: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError, OSError) as exc:
        print(f"quermass: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
