"""Named simulation studies: simulate replicates of a known model and re-fit them."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .estimation import MODELS, THETA_NAMES, estimator_suite
from .geometry import MarkedConfiguration, Window
from .model import QuermassParams, RadiusLaw
from .sampler import ChainSettings, derive_seed, simulate

SUMMARY_ESTIMATORS = ("iso", "all", "med", "sum", "all+sum+iso")


@dataclass(frozen=True)
class Preset:
    name: str
    params: QuermassParams
    model: str  # key of estimation.MODELS: which theta components are fitted
    law: RadiusLaw
    window: Window
    settings: ChainSettings
    reps: int = 20


def _preset(name, z, theta, model, reps=20):
    return Preset(name, QuermassParams(z, theta), model, RadiusLaw.uniform(0.5, 2.0),
                  Window(0.0, 0.0, 50.0, 50.0), ChainSettings(), reps)


PRESETS = {p.name: p for p in (
    _preset("A-process-fig3", 0.1, (0.2, 0.0, 0.0), "A"),
    _preset("L-process-fig3", 0.2, (0.0, 0.4, 0.0), "L"),
    _preset("Chi-process-fig3", 0.1, (0.0, 0.0, 1.0), "Chi"),
    _preset("AL-process", 0.1, (-0.2, 0.3, 0.0), "AL", reps=10),
    _preset("full-process", 0.1, (-0.2, 0.3, -1.0), "full", reps=10),
)}


def simulate_replicate(preset: Preset, i: int, seed=0) -> MarkedConfiguration:
    s = replace(preset.settings, seed=derive_seed(seed, preset.name, "simulate", i))
    return simulate(preset.params, preset.law, preset.window, s)


def fit_replicate(preset: Preset, obs: MarkedConfiguration, i: int, seed=0, N: int = 2500):
    return estimator_suite(obs, preset.law, seed=derive_seed(seed, preset.name, "fit", i),
                           model=preset.model, N=N)


def _one(args):
    preset, i, seed, N = args
    obs = simulate_replicate(preset, i, seed)
    suite = fit_replicate(preset, obs, i, seed, N)
    return {"replicate": i, "n_discs": len(obs), "estimates": {k: e.as_dict() for k, e in suite.items()}}


def run_experiment(name: str, reps: int | None = None, seed=0, workers: int = 1, N: int = 2500) -> list[dict]:
    """Per-replicate records; replicate ``i`` depends only on (name, seed, i)."""
    if name not in PRESETS:
        raise ValueError(f"unknown experiment {name!r}; choose from {sorted(PRESETS)}")
    preset = PRESETS[name]
    reps = preset.reps if reps is None else reps
    if reps < 1:
        raise ValueError(f"reps must be at least 1, got {reps}")
    jobs = [(preset, i, seed, N) for i in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_one, jobs))
    return [_one(j) for j in jobs]


def _iqr(v: np.ndarray) -> float:
    q75, q25 = np.percentile(v, [75, 25])
    return float(q75 - q25)


def summarize(name: str, records: list[dict]) -> list[dict]:
    """Median and interquartile range per estimator of z and each fitted theta component."""
    preset = PRESETS[name]
    free = MODELS[preset.model]
    names = [k for k in SUMMARY_ESTIMATORS if any(k in r["estimates"] for r in records)]
    rows = []
    for est in names:
        vals = [r["estimates"][est] for r in records if est in r["estimates"]]
        ok = [v for v in vals if v["error"] is None and math.isfinite(v["z"])]
        row = {"estimator": est, "n_ok": len(ok), "n_failed": len(vals) - len(ok)}
        cols = {"z": [v["z"] for v in ok]}
        for t in free:
            cols[t] = [v["theta"][THETA_NAMES.index(t)] for v in ok]
        for key, xs in cols.items():
            xs = np.asarray(xs, dtype=float)
            row[f"median_{key}"] = float(np.median(xs)) if len(xs) else math.nan
            row[f"iqr_{key}"] = _iqr(xs) if len(xs) else math.nan
        rows.append(row)
    return rows


def summary_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
