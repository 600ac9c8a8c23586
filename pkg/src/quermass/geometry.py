"""Exact geometry of finite unions of closed discs.

Area and perimeter come from the boundary arcs of the union (area by the
line integral 1/2 (x dy - y dx)); the Euler characteristic comes from the
turning-angle sum over the same arcs. A second, independent route through
the dual complex of the power diagram is kept in :func:`euler_dual_complex`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np
from scipy.spatial import ConvexHull

from . import _kernels as K

EPS = K.EPS


@dataclass(frozen=True)
class Disc:
    cx: float
    cy: float
    r: float

    def __post_init__(self):
        if not (math.isfinite(self.cx) and math.isfinite(self.cy) and math.isfinite(self.r)):
            raise ValueError(f"disc coordinates must be finite, got {self}")
        if self.r < 0:
            raise ValueError(f"radius must be non-negative, got {self.r}")


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangle ``[x0, x1] x [y0, y1]``."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"window must have positive area, got {self.as_tuple()}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)

    def contains(self, x, y):
        """Closed-rectangle membership; works elementwise on arrays."""
        return (x >= self.x0) & (x <= self.x1) & (y >= self.y0) & (y <= self.y1)

    def eroded(self, margin: float) -> "Window":
        """The window shrunk by ``margin`` on every side (minus sampling)."""
        if margin < 0:
            raise ValueError(f"erosion margin must be non-negative, got {margin}")
        if 2 * margin >= self.width or 2 * margin >= self.height:
            raise ValueError(
                f"margin {margin} leaves an empty eroded window inside {self.as_tuple()}"
            )
        return Window(self.x0 + margin, self.y0 + margin, self.x1 - margin, self.y1 - margin)


class MarkedConfiguration:
    """Finite list of discs (germs with radii) observed in a window.

    Stored as an ``(n, 3)`` array of ``x, y, r``. Centres must lie in the
    window unless ``validate=False``; grains may protrude past it.
    """

    __slots__ = ("xyr", "window")

    def __init__(self, discs, window: Window, validate: bool = True):
        if isinstance(discs, np.ndarray):
            xyr = np.array(discs, dtype=float).reshape(-1, 3)
        else:
            xyr = np.array([(d.cx, d.cy, d.r) if isinstance(d, Disc) else tuple(d)
                            for d in discs], dtype=float).reshape(-1, 3)
        if validate and len(xyr):
            if not np.all(np.isfinite(xyr)):
                raise ValueError("disc coordinates must be finite")
            if np.any(xyr[:, 2] < 0):
                raise ValueError("radii must be non-negative")
            inside = window.contains(xyr[:, 0], xyr[:, 1])
            if not np.all(inside):
                bad = xyr[~inside][0]
                raise ValueError(f"disc centre ({bad[0]}, {bad[1]}) lies outside window {window.as_tuple()}")
        xyr.setflags(write=False)
        self.xyr = xyr
        self.window = window

    @classmethod
    def empty(cls, window: Window) -> "MarkedConfiguration":
        return cls(np.empty((0, 3)), window)

    def __len__(self) -> int:
        return len(self.xyr)

    def __iter__(self):
        return iter(self.discs)

    def __repr__(self) -> str:
        return f"MarkedConfiguration(n={len(self)}, window={self.window.as_tuple()})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, MarkedConfiguration):
            return NotImplemented
        return self.window == other.window and np.array_equal(self.xyr, other.xyr)

    @property
    def discs(self) -> tuple[Disc, ...]:
        return tuple(Disc(*row) for row in self.xyr.tolist())

    @property
    def n(self) -> int:
        return len(self.xyr)

    def arrays(self):
        """Contiguous ``cx, cy, r`` arrays for the kernels."""
        return (np.ascontiguousarray(self.xyr[:, 0]), np.ascontiguousarray(self.xyr[:, 1]),
                np.ascontiguousarray(self.xyr[:, 2]))

    def with_discs(self, xyr, validate: bool = True) -> "MarkedConfiguration":
        return MarkedConfiguration(np.asarray(xyr, dtype=float), self.window, validate=validate)

    def add(self, disc: Disc, validate: bool = True) -> "MarkedConfiguration":
        return self.with_discs(np.vstack([self.xyr, [[disc.cx, disc.cy, disc.r]]]), validate)

    def remove(self, index: int) -> "MarkedConfiguration":
        return self.with_discs(np.delete(self.xyr, index, axis=0), validate=False)

    def translated(self, dx: float, dy: float) -> "MarkedConfiguration":
        w = self.window
        moved = Window(w.x0 + dx, w.y0 + dy, w.x1 + dx, w.y1 + dy)
        return MarkedConfiguration(self.xyr + [dx, dy, 0.0], moved, validate=False)

    def restricted(self, x: float, y: float, radius: float) -> "MarkedConfiguration":
        """Discs whose closed disc meets ``B((x, y), radius)``."""
        d = np.hypot(self.xyr[:, 0] - x, self.xyr[:, 1] - y)
        return self.with_discs(self.xyr[d <= radius + self.xyr[:, 2]], validate=False)


class BoundaryArc(NamedTuple):
    disc_index: int
    a0: float
    a1: float

    @property
    def angle(self) -> float:
        return self.a1 - self.a0


class MinkowskiTriple(NamedTuple):
    area: float
    perimeter: float
    euler: int

    def __sub__(self, other):
        return MinkowskiTriple(self.area - other.area, self.perimeter - other.perimeter,
                               self.euler - other.euler)

    def __add__(self, other):
        return MinkowskiTriple(self.area + other.area, self.perimeter + other.perimeter,
                               self.euler + other.euler)

    def dot(self, theta) -> float:
        return theta[0] * self.area + theta[1] * self.perimeter + theta[2] * self.euler


def _all(n: int) -> np.ndarray:
    return np.arange(n, dtype=np.int64)


def boundary_arcs(config: MarkedConfiguration) -> list[BoundaryArc]:
    """Maximal arcs of each circle not covered by the interior of another disc.

    Exact duplicates are collapsed: only the first copy contributes arcs.
    """
    cx, cy, r = config.arrays()
    out = K.arcs(cx, cy, r, _all(len(cx)), EPS)
    return [BoundaryArc(int(i), a0, a1) for i, a0, a1 in out.tolist()]


def minkowski(config: MarkedConfiguration) -> MinkowskiTriple:
    """Area, perimeter and Euler characteristic of the union of the discs."""
    cx, cy, r = config.arrays()
    a, l, e = K.functionals(cx, cy, r, _all(len(cx)), EPS)
    return MinkowskiTriple(float(a), float(l), int(e))


def _query(p: Disc):
    return float(p.cx), float(p.cy), float(p.r)


def uncovered_arc_length(p: Disc, config: MarkedConfiguration) -> float:
    """Length of the circle of ``p`` lying outside the union (the f0 test function)."""
    cx, cy, r = config.arrays()
    px, py, pr = _query(p)
    nb = K.neighbours(px, py, pr + EPS, cx, cy, r, 0.0, -1)
    return float(K.uncovered_length(px, py, pr, cx, cy, r, nb, EPS))


def inflate(config: MarkedConfiguration, alpha: float) -> MarkedConfiguration:
    """Every radius grown by ``alpha``; the union becomes its alpha-parallel set."""
    if alpha < 0:
        raise ValueError(f"inflation radius must be non-negative, got {alpha}")
    return MarkedConfiguration(config.xyr + [0.0, 0.0, alpha], config.window, validate=False)


def f_alpha(p: Disc, config: MarkedConfiguration, alpha: float) -> float:
    """Uncovered length of the circle of radius ``p.r + alpha`` against the alpha-parallel set."""
    if alpha < 0:
        raise ValueError(f"inflation radius must be non-negative, got {alpha}")
    cx, cy, r = config.arrays()
    px, py, pr = _query(p)
    return float(K.f_alpha_query(px, py, pr, float(alpha), cx, cy, r, -1, EPS))


def is_isolated(p: Disc, config: MarkedConfiguration) -> bool:
    """True iff the circle of ``p`` meets no disc of ``config``.

    Discs strictly inside ``p`` are allowed; tangency counts as contact.
    """
    cx, cy, r = config.arrays()
    px, py, pr = _query(p)
    return bool(K.isolated(px, py, pr, cx, cy, r, _all(len(cx)), EPS))


def local_delta(p: Disc, config: MarkedConfiguration) -> MinkowskiTriple:
    """Change of the Minkowski functionals when ``p`` is added to the union."""
    cx, cy, r = config.arrays()
    px, py, pr = _query(p)
    da, dl, de = K.local_delta(px, py, pr, cx, cy, r, -1, EPS)
    return MinkowskiTriple(float(da), float(dl), int(de))


# -- power diagram route to the Euler characteristic -------------------------

def _dedup(xyr: np.ndarray) -> np.ndarray:
    keep = []
    for i, row in enumerate(xyr):
        if not any(abs(row[0] - xyr[j, 0]) <= EPS and abs(row[1] - xyr[j, 1]) <= EPS
                   and abs(row[2] - xyr[j, 2]) <= EPS for j in keep):
            keep.append(i)
    return xyr[keep]


def _seg_dist(p, a, b) -> float:
    ab = b - a
    L2 = ab @ ab
    t = 0.0 if L2 == 0 else min(1.0, max(0.0, ((p - a) @ ab) / L2))
    return float(np.hypot(*(a + t * ab - p)))


def _poly_dist(p, poly) -> float:
    """Distance from a point to a convex polygon given by ordered vertices."""
    m = len(poly)
    inside = True
    for q in range(m):
        a, b = poly[q], poly[(q + 1) % m]
        if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) < 0:
            inside = False
            break
    if inside:
        return 0.0
    return min(_seg_dist(p, poly[q], poly[(q + 1) % m]) for q in range(m))


def euler_dual_complex(config: MarkedConfiguration) -> int:
    """Euler characteristic from the dual complex of the power diagram.

    The regular triangulation is the lower hull of the lifted points
    ``(x, y, x^2 + y^2 - r^2)``. Three far-away dummy sites close every
    power cell so no real cell is unbounded; simplices touching them are
    discarded. A vertex, edge or triangle enters the complex when the
    matching power cell, power edge or power vertex meets the discs.
    """
    xyr = _dedup(config.xyr)
    n = len(xyr)
    if n == 0:
        return 0
    c = xyr[:, :2] - xyr[:, :2].mean(axis=0)
    w = xyr[:, 2] ** 2
    extent = float(np.abs(c).max() + xyr[:, 2].max()) + 1.0
    far = 8.0 * extent
    dummies = far * np.array([[1.0, 0.0], [-0.5, math.sqrt(3) / 2], [-0.5, -math.sqrt(3) / 2]])
    pts = np.vstack([c, dummies])
    wts = np.concatenate([w, np.zeros(3)])
    lifted = np.column_stack([pts, (pts ** 2).sum(axis=1) - wts])
    hull = ConvexHull(lifted)
    lower = [tuple(s) for s, eq in zip(hull.simplices, hull.equations) if eq[2] < 0]

    def orthocentre(tri):
        i, j, k = tri
        A = 2.0 * np.array([pts[j] - pts[i], pts[k] - pts[i]])
        b = np.array([pts[j] @ pts[j] - wts[j] - pts[i] @ pts[i] + wts[i],
                      pts[k] @ pts[k] - wts[k] - pts[i] @ pts[i] + wts[i]])
        return np.linalg.solve(A, b)

    centres = [orthocentre(t) for t in lower]
    edge_tris: dict[tuple[int, int], list[int]] = {}
    vert_tris: dict[int, list[int]] = {}
    for ti, tri in enumerate(lower):
        for a in range(3):
            u, v = sorted((tri[a], tri[(a + 1) % 3]))
            edge_tris.setdefault((u, v), []).append(ti)
            vert_tris.setdefault(tri[a], []).append(ti)

    radius = xyr[:, 2]
    V = 0
    for i, tris in vert_tris.items():
        if i >= n:
            continue
        poly = np.array([centres[t] for t in tris])
        # a site can lie outside its own power cell; order around the cell's centroid
        mid = poly.mean(axis=0)
        ang = np.arctan2(poly[:, 1] - mid[1], poly[:, 0] - mid[0])
        poly = poly[np.argsort(ang)]
        if _poly_dist(c[i], poly) <= radius[i] + EPS:
            V += 1
    E = 0
    for (u, v), tris in edge_tris.items():
        if v >= n or len(tris) != 2:
            continue
        if _seg_dist(c[u], centres[tris[0]], centres[tris[1]]) <= radius[u] + EPS:
            E += 1
    T = 0
    for ti, tri in enumerate(lower):
        if max(tri) >= n:
            continue
        if np.hypot(*(centres[ti] - c[tri[0]])) <= radius[tri[0]] + EPS:
            T += 1
    return V - E + T


# -- disc-set files ------------------------------------------------------------

def write_discs(path, config: MarkedConfiguration) -> None:
    """CSV with header ``x,y,r``; 17 significant digits round-trip exactly."""
    with open(path, "w", newline="") as fh:
        fh.write("x,y,r\n")
        for x, y, r in config.xyr.tolist():
            fh.write(f"{x:.17g},{y:.17g},{r:.17g}\n")


def read_discs(path, window: Window, validate: bool = True) -> MarkedConfiguration:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["x", "y", "r"]:
            raise ValueError(f"{path}: expected header 'x,y,r', got {','.join(header)!r}")
        rows = [tuple(float(v) for v in row) for row in reader if row]
    return MarkedConfiguration(np.array(rows, dtype=float).reshape(-1, 3), window, validate=validate)


def random_configuration(rng: np.random.Generator, n: int, window: Window,
                         r_min: float, r_max: float) -> MarkedConfiguration:
    """``n`` discs with uniform centres and radii, a convenience for tests and demos."""
    xs = rng.uniform(window.x0, window.x1, n)
    ys = rng.uniform(window.y0, window.y1, n)
    rs = rng.uniform(r_min, r_max, n)
    return MarkedConfiguration(np.column_stack([xs, ys, rs]), window)


def configuration_from(discs: Iterable, window: Window | None = None) -> MarkedConfiguration:
    """Build a configuration, inventing a bounding window when none is given."""
    xyr = np.array([tuple(d) if not isinstance(d, Disc) else (d.cx, d.cy, d.r) for d in discs],
                   dtype=float).reshape(-1, 3)
    if window is None:
        if len(xyr):
            lo = xyr[:, :2].min(axis=0) - 1.0
            hi = xyr[:, :2].max(axis=0) + 1.0
            window = Window(lo[0], lo[1], hi[0], hi[1])
        else:
            window = Window(0.0, 0.0, 1.0, 1.0)
    return MarkedConfiguration(xyr, window)
