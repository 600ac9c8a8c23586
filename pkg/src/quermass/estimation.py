"""Takacs-Fiksel estimation of (z, theta) from an observed union of discs.

The observed side of each estimating equation is a sum over observed discs
with centre in the eroded window; the integral side is a Monte-Carlo
average over dummy discs. Because the dummy-disc geometry does not depend
on theta, it is computed once into a :class:`SampleTable` and every theta
on a grid is evaluated from it with a matrix product.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import _kernels as K
from .geometry import MarkedConfiguration, Window
from .model import QuermassParams, RadiusLaw

log = logging.getLogger(__name__)

THETA_NAMES = ("theta1", "theta2", "theta3")

MODELS = {
    "A": ("theta1",),
    "L": ("theta2",),
    "Chi": ("theta3",),
    "AL": ("theta1", "theta2"),
    "LChi": ("theta2", "theta3"),
    "AChi": ("theta1", "theta3"),
    "full": THETA_NAMES,
}


@dataclass(frozen=True)
class TestFunctionSpec:
    """One test function: ``f0``, ``f_alpha``, a sum of ``f_alpha`` or the isolated-ball indicator."""

    __test__ = False  # keep pytest from collecting this class

    kind: str
    alpha: float = 0.0
    alphas: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("f0", "alpha", "sum", "iso"):
            raise ValueError(f"unknown test function kind {self.kind!r}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if self.kind == "sum":
            if not self.alphas or any(a < 0 for a in self.alphas) or len(set(self.alphas)) != len(self.alphas):
                raise ValueError("f_sum needs a non-empty list of distinct non-negative alphas")

    @classmethod
    def f0(cls):
        return cls("f0")

    @classmethod
    def f_alpha(cls, alpha: float):
        return cls("alpha", alpha=float(alpha))

    @classmethod
    def f_sum(cls, alphas):
        return cls("sum", alphas=tuple(float(a) for a in alphas))

    @classmethod
    def f_iso(cls):
        return cls("iso")

    @property
    def name(self) -> str:
        if self.kind == "alpha":
            return f"f_alpha({self.alpha:g})"
        return {"f0": "f0", "sum": "f_sum", "iso": "f_iso"}[self.kind]

    @property
    def reach(self) -> float:
        """Largest inflation the test function looks at."""
        if self.kind == "alpha":
            return self.alpha
        if self.kind == "sum":
            return max(self.alphas)
        return 0.0

    def alphas_needed(self) -> tuple[float, ...]:
        if self.kind == "f0":
            return (0.0,)
        if self.kind == "alpha":
            return (self.alpha,)
        if self.kind == "sum":
            return self.alphas
        return ()


def default_alphas(R0: float, count: int = 10) -> tuple[float, ...]:
    """``alpha_i = i * R0 / 100``: i/50 for R0 = 2 and 0.005 i for R0 = 0.5."""
    return tuple(i * R0 / 100.0 for i in range(1, count + 1))


def standard_specs(alphas) -> list[TestFunctionSpec]:
    """f0, each f_alpha, their sum and the isolated-ball indicator."""
    return ([TestFunctionSpec.f0()] + [TestFunctionSpec.f_alpha(a) for a in alphas]
            + [TestFunctionSpec.f_sum(alphas), TestFunctionSpec.f_iso()])


def default_margin(law: RadiusLaw, specs) -> float:
    return law.R0 + max((s.reach for s in specs), default=0.0)


def _columns(specs, cx, cy, r, rows_fn):
    """Evaluate every needed inflation once and assemble per-spec columns."""
    alphas = sorted({a for s in specs for a in s.alphas_needed()})
    want_iso = any(s.kind == "iso" for s in specs)
    raw = rows_fn(np.array(alphas, dtype=float), want_iso)
    col = {a: raw[:, q] for q, a in enumerate(alphas)}
    out = {}
    for s in specs:
        if s.kind == "iso":
            out[s] = raw[:, -1].copy()
        elif s.kind == "sum":
            out[s] = np.sum([col[a] for a in s.alphas], axis=0)
        else:
            out[s] = col[s.alphas_needed()[0]].copy()
    return out


def observed_statistics(specs, obs: MarkedConfiguration, margin: float) -> dict[TestFunctionSpec, float]:
    """S_k for each spec: sum over discs centred in the eroded window of f_k(disc, obs minus disc)."""
    inner = obs.window.eroded(margin)
    cx, cy, r = obs.arrays()
    sel = np.flatnonzero(inner.contains(cx, cy)).astype(np.int64)
    cols = _columns(specs, cx, cy, r,
                    lambda al, iso: K.leave_one_out_rows(sel, al, iso, cx, cy, r, K.EPS))
    return {s: float(v.sum()) for s, v in cols.items()}


def observed_statistic(spec: TestFunctionSpec, obs: MarkedConfiguration, margin: float) -> float:
    return observed_statistics([spec], obs, margin)[spec]


@dataclass
class SampleTable:
    """Dummy discs in the eroded window with their deltas and test-function values."""

    points: np.ndarray  # (N, 3): x, y, R
    deltas: np.ndarray  # (N, 3): dA, dL, dchi against the observation
    values: dict  # TestFunctionSpec -> (N,) values
    eroded_window: Window

    @property
    def N(self) -> int:
        return len(self.points)

    @property
    def specs(self) -> list[TestFunctionSpec]:
        return list(self.values)

    def matrix(self, specs) -> np.ndarray:
        """(N, K) values of the chosen specs."""
        missing = [s.name for s in specs if s not in self.values]
        if missing:
            raise KeyError(f"sample table lacks test functions {missing}")
        return np.column_stack([self.values[s] for s in specs])

    def integrals(self, specs, theta) -> np.ndarray:
        """I_k(theta) = |eroded window| / N * sum_i exp(-theta . delta_i) f_k,i."""
        w = np.exp(-(self.deltas @ np.asarray(theta, dtype=float)))
        return self.eroded_window.area / self.N * (self.matrix(specs).T @ w)


def build_sample_table(obs: MarkedConfiguration, law: RadiusLaw, specs, N: int = 2500,
                       seed=0, margin: float | None = None) -> SampleTable:
    """Draw ``N`` dummy discs uniformly on the eroded window with radii from ``law``."""
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    specs = list(specs)
    if margin is None:
        margin = default_margin(law, specs)
    inner = obs.window.eroded(margin)
    rng = np.random.default_rng(seed)
    xs = rng.uniform(inner.x0, inner.x1, N)
    ys = rng.uniform(inner.y0, inner.y1, N)
    rs = law.sample(rng, N)
    cx, cy, r = obs.arrays()
    store = {}

    def rows(al, iso):
        d, v = K.table_rows(xs, ys, rs, al, iso, cx, cy, r, K.EPS)
        store["deltas"] = d
        return v

    values = _columns(specs, cx, cy, r, rows)
    return SampleTable(np.column_stack([xs, ys, rs]), store["deltas"], values, inner)


@dataclass
class ContrastEvaluation:
    theta: tuple[float, float, float]
    z_profile: float
    residuals: np.ndarray
    total: float


def _as_vectors(table: SampleTable, S: dict):
    specs = list(S)
    return specs, np.array([S[s] for s in specs], dtype=float)


def profile_intensity(table: SampleTable, S: dict, theta) -> float:
    """Least-squares z at fixed theta: sum_k S_k I_k / sum_k I_k^2."""
    specs, s = _as_vectors(table, S)
    I = table.integrals(specs, theta)
    denom = float(I @ I)
    if denom <= 0:
        raise ValueError("all Monte-Carlo integrals vanish: the test functions are degenerate for this table")
    return float(s @ I) / denom


def contrast(table: SampleTable, S: dict, theta) -> ContrastEvaluation:
    specs, s = _as_vectors(table, S)
    I = table.integrals(specs, theta)
    denom = float(I @ I)
    if denom <= 0:
        raise ValueError("all Monte-Carlo integrals vanish: the test functions are degenerate for this table")
    z = float(s @ I) / denom
    res = s - z * I
    return ContrastEvaluation(tuple(float(t) for t in theta), z, res, float(res @ res))


# -- grid search ---------------------------------------------------------------

def default_grid(free, lo: float = -2.0, hi: float = 2.0) -> dict[str, tuple[float, float, float]]:
    step = 0.05 if len(free) <= 2 else 0.1
    return {name: (lo, hi, step) for name in free}


def _axis(lo, hi, step):
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


@dataclass
class GridIntegrals:
    """I_k(theta) for every table column over a theta grid (computed once, shared by variants)."""

    free: tuple[str, ...]
    axes: list[np.ndarray]
    thetas: np.ndarray  # (G, 3)
    integrals: dict  # spec -> (G,)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)


def grid_integrals(table: SampleTable, grid: dict, fixed: dict | None = None,
                   chunk: int = 2048) -> GridIntegrals:
    fixed = dict(fixed or {})
    free = tuple(n for n in THETA_NAMES if n in grid)
    unknown = set(grid) - set(THETA_NAMES)
    if unknown:
        raise ValueError(f"unknown grid parameters {sorted(unknown)}")
    if not free:
        raise ValueError("empty grid: at least one theta component must be free")
    axes = [_axis(*grid[n]) for n in free]
    if any(len(a) == 0 for a in axes):
        raise ValueError("empty grid axis")
    mesh = np.meshgrid(*axes, indexing="ij")
    G = mesh[0].size
    thetas = np.zeros((G, 3))
    for q, name in enumerate(THETA_NAMES):
        if name in free:
            thetas[:, q] = mesh[free.index(name)].ravel()
        else:
            thetas[:, q] = fixed.get(name, 0.0)
    specs = table.specs
    F = table.matrix(specs)
    out = np.empty((len(specs), G))
    scale = table.eroded_window.area / table.N
    with np.errstate(over="ignore", invalid="ignore"):
        for a in range(0, G, chunk):
            W = np.exp(-(table.deltas @ thetas[a:a + chunk].T))
            out[:, a:a + chunk] = scale * (F.T @ W)
    return GridIntegrals(free, axes, thetas, {s: out[q] for q, s in enumerate(specs)})


def _grid_contrast(gi: GridIntegrals, S: dict):
    specs, s = list(S), np.array(list(S.values()), dtype=float)
    I = np.vstack([gi.integrals[k] for k in specs])
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        denom = (I * I).sum(axis=0)
        z = (s @ I) / denom
        total = ((s[:, None] - z * I) ** 2).sum(axis=0)
    return z, total


def local_minima(values: np.ndarray) -> np.ndarray:
    """Flat indices of grid cells strictly below all their axis neighbours."""
    ok = np.ones(values.shape, dtype=bool)
    for ax in range(values.ndim):
        n = values.shape[ax]
        if n < 2:
            continue
        lo = [slice(None)] * values.ndim
        hi = [slice(None)] * values.ndim
        lo[ax] = slice(0, n - 1)
        hi[ax] = slice(1, n)
        fwd = values[tuple(lo)] < values[tuple(hi)]
        bwd = values[tuple(hi)] < values[tuple(lo)]
        ok[tuple(lo)] &= fwd
        ok[tuple(hi)] &= bwd
    idx = np.flatnonzero(ok.ravel())
    return idx[np.argsort(values.ravel()[idx], kind="stable")]


@dataclass
class FitResult:
    z_hat: float
    theta_hat: tuple[float, float, float]
    contrast: float
    free: tuple[str, ...]
    grid_minima: list[dict]
    specs: list[str]
    refined: bool
    settings: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "z_hat": self.z_hat,
            "theta_hat": list(self.theta_hat),
            "contrast": self.contrast,
            "free": list(self.free),
            "specs": self.specs,
            "refined": self.refined,
            "grid_minima": self.grid_minima,
            "settings": self.settings,
        }


def _check_counts(specs, free):
    p = len(free) + 1
    if len(specs) < p:
        raise ValueError(f"{len(specs)} test functions cannot identify {p} parameters")
    if len(specs) == p:
        warnings.warn(f"K = p = {p}: identifiability is not guaranteed with as many test functions as parameters",
                      stacklevel=3)


def fit_from_grid(table: SampleTable, S: dict, gi: GridIntegrals, refine: bool = True,
                  max_minima: int = 20, max_iter: int = 200) -> FitResult:
    """Minimise the profiled contrast over a precomputed grid, then optionally polish.

    The Nelder-Mead polish stays inside the grid box, which is the search
    domain; it starts from the best grid cell with edges of one grid step.
    """
    specs = list(S)
    _check_counts(specs, gi.free)
    z, total = _grid_contrast(gi, S)
    bad = ~np.isfinite(total) | ~np.isfinite(z)
    if bad.any():
        th = gi.thetas[np.flatnonzero(bad)[0]]
        raise ValueError(f"non-finite contrast at theta={tuple(th.tolist())}")
    mins = local_minima(total.reshape(gi.shape))
    if len(mins) == 0:
        mins = np.array([int(np.argmin(total))])
    minima = [{"theta": gi.thetas[i].tolist(), "z": float(z[i]), "contrast": float(total[i])}
              for i in mins[:max_minima]]
    best = int(np.argmin(total))
    theta_best = gi.thetas[best].copy()
    best_val = float(total[best])
    free_idx = [THETA_NAMES.index(n) for n in gi.free]
    refined = False
    if refine:
        steps = np.array([ax[1] - ax[0] if len(ax) > 1 else 0.05 for ax in gi.axes])

        def objective(x):
            th = theta_best.copy()
            th[free_idx] = x
            val = contrast(table, S, th).total
            return val if math.isfinite(val) else math.inf

        x0 = theta_best[free_idx]
        bounds = [(ax[0], ax[-1]) for ax in gi.axes]
        # step inwards at the upper edge so the simplex never collapses
        signs = np.where(x0 + steps > np.array([b[1] for b in bounds]), -1.0, 1.0)
        simplex = np.vstack([x0] + [x0 + signs[q] * steps[q] * np.eye(len(x0))[q] for q in range(len(x0))])
        simplex = np.clip(simplex, [b[0] for b in bounds], [b[1] for b in bounds])
        opt = minimize(objective, x0, method="Nelder-Mead", bounds=bounds,
                       options={"initial_simplex": simplex, "xatol": math.inf, "fatol": 1e-10,
                                "maxiter": max_iter})
        if math.isfinite(opt.fun) and opt.fun < best_val:
            theta_best[free_idx] = opt.x
            best_val = float(opt.fun)
            refined = True
    ev = contrast(table, S, theta_best)
    return FitResult(ev.z_profile, tuple(theta_best.tolist()), ev.total, gi.free, minima,
                     [s.name for s in specs], refined)


def fit(obs: MarkedConfiguration, law: RadiusLaw, specs, grid: dict | None = None,
        refine: bool = True, N: int = 2500, seed=0, fixed: dict | None = None,
        margin: float | None = None, table: SampleTable | None = None) -> FitResult:
    """Takacs-Fiksel fit of z and the free theta components named in ``grid``."""
    specs = list(specs)
    if grid is None:
        grid = default_grid(("theta1",))
    if margin is None:
        margin = default_margin(law, specs)
    if table is None:
        table = build_sample_table(obs, law, specs, N=N, seed=seed, margin=margin)
    S = observed_statistics(specs, obs, margin)
    gi = grid_integrals(table, grid, fixed)
    res = fit_from_grid(table, S, gi, refine=refine)
    res.settings = {"N": table.N, "margin": margin, "grid": {k: list(v) for k, v in grid.items()},
                    "fixed": dict(fixed or {}), "law": str(law)}
    return res


def gnz_residual(params: QuermassParams, obs: MarkedConfiguration, spec: TestFunctionSpec,
                 margin: float, law: RadiusLaw | None = None, table: SampleTable | None = None,
                 N: int = 2500, seed=0) -> float:
    """Empirical GNZ residual: S minus z times the Monte-Carlo integral (about 0 at the truth)."""
    if table is None:
        if law is None:
            raise ValueError("gnz_residual needs either a sample table or a radius law")
        table = build_sample_table(obs, law, [spec], N=N, seed=seed, margin=margin)
    S = observed_statistic(spec, obs, margin)
    return S - params.z * float(table.integrals([spec], params.theta)[0])


# -- estimator suite -----------------------------------------------------------

@dataclass
class Estimate:
    name: str
    z: float
    theta: tuple[float, float, float]
    contrast: float = float("nan")
    n_minima: int = 0
    error: str | None = None

    def as_dict(self) -> dict:
        return {"name": self.name, "z": self.z, "theta": list(self.theta), "contrast": self.contrast,
                "n_minima": self.n_minima, "error": self.error}


def suite_variants(alphas) -> dict[str, list[TestFunctionSpec]]:
    f0 = TestFunctionSpec.f0()
    fa = [TestFunctionSpec.f_alpha(a) for a in alphas]
    fsum = TestFunctionSpec.f_sum(alphas)
    fiso = TestFunctionSpec.f_iso()
    variants = {"iso": [f0, fiso]}
    for a, f in zip(alphas, fa):
        variants[f"alpha={a:g}"] = [f0, f]
    variants["sum"] = [f0, fsum]
    variants["all"] = [f0] + fa
    variants["all+sum+iso"] = [f0] + fa + [fsum, fiso]
    variants["all+sum"] = [f0] + fa + [fsum]
    return variants


def estimator_suite(obs: MarkedConfiguration, law: RadiusLaw, seed=0, model: str = "A",
                    alphas=None, N: int = 2500, grid: dict | None = None, refine: bool = True,
                    table: SampleTable | None = None) -> dict[str, Estimate]:
    """All named estimators from one shared sample table.

    ``med`` is the componentwise median of the single-alpha estimates.
    """
    free = MODELS[model]
    if alphas is None:
        alphas = default_alphas(law.R0)
    specs = standard_specs(alphas)
    margin = default_margin(law, specs)
    if table is None:
        table = build_sample_table(obs, law, specs, N=N, seed=seed, margin=margin)
    S_all = observed_statistics(specs, obs, margin)
    gi = grid_integrals(table, grid or default_grid(free))
    out: dict[str, Estimate] = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, vs in suite_variants(alphas).items():
            if len(vs) < len(free) + 1:
                continue
            try:
                r = fit_from_grid(table, {s: S_all[s] for s in vs}, gi, refine=refine)
                out[name] = Estimate(name, r.z_hat, r.theta_hat, r.contrast, len(r.grid_minima))
            except (ValueError, ArithmeticError) as exc:
                log.warning("estimator %s failed: %s", name, exc)
                out[name] = Estimate(name, math.nan, (math.nan,) * 3, error=str(exc))
    singles = [e for k, e in out.items() if k.startswith("alpha=") and e.error is None]
    if singles:
        z_med = float(np.median([e.z for e in singles]))
        th_med = tuple(float(v) for v in np.median([e.theta for e in singles], axis=0))
        out["med"] = Estimate("med", z_med, th_med)
    else:
        out["med"] = Estimate("med", math.nan, (math.nan,) * 3, error="no single-alpha estimate")
    return out
