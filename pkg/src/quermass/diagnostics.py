"""Raster summary curves of a random set and simulation envelopes.

All curves are minus-sampled: at radius ``r`` only pixels far enough from
the raster border for the answer not to depend on the unseen outside are
counted.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.ndimage import distance_transform_edt

from .geometry import Window
from .model import QuermassParams, RadiusLaw
from .raster import BinaryRaster, rasterize
from .sampler import ChainSettings, derive_seed, simulate

log = logging.getLogger(__name__)

KINDS = ("contact", "covariance", "erosion", "dilation", "opening", "closing")
MORPH_KINDS = ("erosion", "dilation", "opening", "closing")


@dataclass(frozen=True)
class CurveEstimate:
    r_grid: np.ndarray
    values: np.ndarray
    kind: str

    def __post_init__(self):
        r = np.asarray(self.r_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if self.kind not in KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}; expected one of {KINDS}")
        if r.ndim != 1 or len(r) == 0 or r[0] != 0 or np.any(np.diff(r) <= 0):
            raise ValueError("r_grid must be strictly increasing and start at 0")
        if v.shape != r.shape or not np.all(np.isfinite(v)):
            raise ValueError("curve values must be finite, one per grid point")
        object.__setattr__(self, "r_grid", r)
        object.__setattr__(self, "values", v)


def _grid(r_grid) -> np.ndarray:
    r = np.asarray(r_grid, dtype=float)
    if r.ndim != 1 or len(r) == 0 or r[0] != 0 or np.any(np.diff(r) <= 0):
        raise ValueError("r_grid must be strictly increasing and start at 0")
    return r


def _edt(mask: np.ndarray, ps: float) -> np.ndarray:
    """Distance from each pixel to the nearest pixel outside ``mask`` (inf if there is none)."""
    if mask.all():
        return np.full(mask.shape, np.inf)
    return distance_transform_edt(mask) * ps


def _inner(raster: BinaryRaster, margin: float) -> np.ndarray:
    inner = raster.edge_distance() > margin
    if not inner.any():
        raise ValueError(f"radius {margin} leaves no pixel after minus sampling; shrink the r grid")
    return inner


def _check_mixed(raster: BinaryRaster):
    if raster.bits.all():
        raise ValueError("raster has no background pixels")
    if not raster.bits.any():
        raise ValueError("raster has no foreground pixels")


def contact_distribution(raster: BinaryRaster, r_grid) -> CurveEstimate:
    """Spherical contact distribution H(r) = P(D <= r | D > 0).

    D is the distance from a background pixel centre to the nearest
    foreground pixel centre, the same distance the dilation curve uses.
    """
    _check_mixed(raster)
    r = _grid(r_grid)
    ps = raster.pixel_size
    bg = ~raster.bits
    d = _edt(bg, ps)
    edge = raster.edge_distance()
    vals = np.empty(len(r))
    for k, rk in enumerate(r):
        sel = bg & (edge > rk)
        if not sel.any():
            raise ValueError(f"radius {rk} leaves no background pixel after minus sampling")
        vals[k] = np.mean(d[sel] <= rk)
    return CurveEstimate(r, vals, "contact")


def covariance(raster: BinaryRaster, r_grid) -> CurveEstimate:
    """C(r) = P(x in X, x + h in X) for |h| = r, averaged over the two axis directions.

    Lags are rounded to whole pixels; isotropy is assumed.
    """
    _check_mixed(raster)
    r = _grid(r_grid)
    b = raster.bits
    vals = np.empty(len(r))
    for k, rk in enumerate(r):
        lag = int(round(rk / raster.pixel_size))
        if lag >= min(b.shape):
            raise ValueError(f"lag {rk} exceeds the raster extent")
        if lag == 0:
            vals[k] = b.mean()
            continue
        horiz = np.mean(b[:, :-lag] & b[:, lag:])
        vert = np.mean(b[:-lag, :] & b[lag:, :])
        vals[k] = 0.5 * (horiz + vert)
    return CurveEstimate(r, vals, "covariance")


class MorphCurves(NamedTuple):
    erosion: CurveEstimate
    dilation: CurveEstimate
    opening: CurveEstimate
    closing: CurveEstimate
    foreground: np.ndarray  # foreground fraction over the same minus-sampled pixels


def morph_curves(raster: BinaryRaster, r_grid) -> MorphCurves:
    """Area fractions after erosion, dilation, opening and closing by a disc of radius r.

    Operations use pixel-centre distances, so ``E <= O <= X <= C <= D`` holds
    pixelwise. Each fraction at ``r`` is taken over pixels more than ``2r``
    from the raster border, which is where opening and closing are exact.
    """
    r = _grid(r_grid)
    ps = raster.pixel_size
    x = raster.bits
    inside = _edt(x, ps)  # distance to background
    outside = _edt(~x, ps)  # distance to foreground
    edge = raster.edge_distance()
    out = {k: np.empty(len(r)) for k in MORPH_KINDS}
    fg = np.empty(len(r))
    for k, rk in enumerate(r):
        sel = _inner(raster, 2 * rk) if rk > 0 else edge > 0
        ero = inside > rk
        dil = x | (outside <= rk)
        opened = _edt(~ero, ps) <= rk if ero.any() else np.zeros_like(x)
        closed = _edt(dil, ps) > rk
        n = sel.sum()
        out["erosion"][k] = (ero & sel).sum() / n
        out["dilation"][k] = (dil & sel).sum() / n
        out["opening"][k] = (opened & sel).sum() / n
        out["closing"][k] = (closed & sel).sum() / n
        fg[k] = (x & sel).sum() / n
    return MorphCurves(*(CurveEstimate(r, out[k], k) for k in MORPH_KINDS), fg)


def curves(raster: BinaryRaster, r_grid, kinds=KINDS) -> dict[str, CurveEstimate]:
    """The requested curve kinds for one raster."""
    unknown = set(kinds) - set(KINDS)
    if unknown:
        raise ValueError(f"unknown curve kinds {sorted(unknown)}; expected some of {KINDS}")
    res = {}
    if "contact" in kinds:
        res["contact"] = contact_distribution(raster, r_grid)
    if "covariance" in kinds:
        res["covariance"] = covariance(raster, r_grid)
    if set(kinds) & set(MORPH_KINDS):
        m = morph_curves(raster, r_grid)
        for k in MORPH_KINDS:
            if k in kinds:
                res[k] = getattr(m, k)
    return res


@dataclass(frozen=True)
class Envelope:
    lower: CurveEstimate
    upper: CurveEstimate

    def contains(self, curve: CurveEstimate) -> np.ndarray:
        return (curve.values >= self.lower.values) & (curve.values <= self.upper.values)


def envelopes(params: QuermassParams, law: RadiusLaw, window: Window, curve_kinds=KINDS,
              n_sim: int = 99, quantiles=(0.025, 0.975), seed=0, *, r_grid, pixel_size: float,
              settings: ChainSettings | None = None) -> dict[str, Envelope]:
    """Pointwise quantile envelopes of curves from ``n_sim`` simulations of the model.

    Simulation ``i`` is seeded with ``derive_seed(seed, "envelope", i)``.
    """
    if n_sim < 2:
        raise ValueError(f"n_sim must be at least 2, got {n_sim}")
    lo, hi = quantiles
    if not (0 <= lo < hi <= 1):
        raise ValueError(f"quantiles must satisfy 0 <= lower < upper <= 1, got {quantiles}")
    settings = settings or ChainSettings()
    r = _grid(r_grid)
    stacks = {k: [] for k in curve_kinds}
    for i in range(n_sim):
        s = replace(settings, seed=derive_seed(seed, "envelope", i))
        try:
            cfg = simulate(params, law, window, s)
            cs = curves(rasterize(cfg, pixel_size), r, curve_kinds)
        except Exception as exc:
            raise RuntimeError(f"envelope simulation {i} failed: {exc}") from exc
        for k in curve_kinds:
            stacks[k].append(cs[k].values)
    res = {}
    for k, rows in stacks.items():
        a = np.vstack(rows)
        res[k] = Envelope(CurveEstimate(r, np.quantile(a, lo, axis=0), k),
                          CurveEstimate(r, np.quantile(a, hi, axis=0), k))
    return res
