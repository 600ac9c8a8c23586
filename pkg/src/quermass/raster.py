"""Binary rasters of observed sets and their approximation by unions of discs.

Pixel ``(i, j)`` of a raster has its centre at
``(origin_x + (j + 0.5) * pixel_size, origin_y + (i + 0.5) * pixel_size)``:
row index grows with y. PGM files store rows top-down, so reading and
writing flip the rows.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit
from scipy.ndimage import distance_transform_edt

from .geometry import MarkedConfiguration, Window

@dataclass
class BinaryRaster:
    bits: np.ndarray  # (height, width) bool, row i at y = origin_y + (i + 0.5) * pixel_size
    pixel_size: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 2 or min(self.bits.shape) < 1:
            raise ValueError(f"raster needs a non-empty 2-D mask, got shape {self.bits.shape}")
        if not self.pixel_size > 0:
            raise ValueError(f"pixel_size must be positive, got {self.pixel_size}")
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def window(self) -> Window:
        ox, oy = self.origin
        return Window(ox, oy, ox + self.width * self.pixel_size, oy + self.height * self.pixel_size)

    @property
    def foreground_fraction(self) -> float:
        return float(self.bits.mean())

    def pixel_centres(self):
        ox, oy = self.origin
        xs = ox + (np.arange(self.width) + 0.5) * self.pixel_size
        ys = oy + (np.arange(self.height) + 0.5) * self.pixel_size
        return xs, ys

    def edge_distance(self) -> np.ndarray:
        """Distance from each pixel centre to the raster border, in length units."""
        i = np.arange(self.height) + 0.5
        j = np.arange(self.width) + 0.5
        di = np.minimum(i, self.height - i)
        dj = np.minimum(j, self.width - j)
        return np.minimum.outer(di, dj) * self.pixel_size


@njit(cache=True)
def _paint(bits, cx, cy, r, ox, oy, ps):
    h, w = bits.shape
    for k in range(cx.shape[0]):
        j0 = max(0, int(math.floor((cx[k] - r[k] - ox) / ps - 0.5)))
        j1 = min(w - 1, int(math.ceil((cx[k] + r[k] - ox) / ps - 0.5)))
        i0 = max(0, int(math.floor((cy[k] - r[k] - oy) / ps - 0.5)))
        i1 = min(h - 1, int(math.ceil((cy[k] + r[k] - oy) / ps - 0.5)))
        rr = r[k] * r[k]
        for i in range(i0, i1 + 1):
            y = oy + (i + 0.5) * ps - cy[k]
            for j in range(j0, j1 + 1):
                x = ox + (j + 0.5) * ps - cx[k]
                if x * x + y * y <= rr:
                    bits[i, j] = True


def rasterize(config: MarkedConfiguration, pixel_size: float, window: Window | None = None) -> BinaryRaster:
    """Pixels whose centre lies in some closed disc, over ``window`` (the configuration's by default)."""
    if not pixel_size > 0:
        raise ValueError(f"pixel_size must be positive, got {pixel_size}")
    window = window or config.window
    width = max(1, int(round(window.width / pixel_size)))
    height = max(1, int(round(window.height / pixel_size)))
    bits = np.zeros((height, width), dtype=bool)
    cx, cy, r = config.arrays()
    _paint(bits, cx, cy, r, window.x0, window.y0, float(pixel_size))
    return BinaryRaster(bits, pixel_size, (window.x0, window.y0))


@njit(cache=True)
def _disc_gain(fg, covered, y, x, rho):
    """Uncovered foreground minus uncovered background pixels with centres in the disc (pixel units)."""
    h, w = fg.shape
    rr = rho * rho
    gain = 0
    for i in range(max(0, int(math.ceil(y - rho))), min(h, int(math.floor(y + rho)) + 1)):
        for j in range(max(0, int(math.ceil(x - rho))), min(w, int(math.floor(x + rho)) + 1)):
            if not covered[i, j] and (i - y) * (i - y) + (j - x) * (j - x) <= rr:
                gain += 1 if fg[i, j] else -1
    return gain


@njit(cache=True)
def _cover(fg, covered, y, x, rho):
    h, w = fg.shape
    rr = rho * rho
    delta = 0
    for i in range(max(0, int(math.ceil(y - rho))), min(h, int(math.floor(y + rho)) + 1)):
        for j in range(max(0, int(math.ceil(x - rho))), min(w, int(math.floor(x + rho)) + 1)):
            if not covered[i, j] and (i - y) * (i - y) + (j - x) * (j - x) <= rr:
                covered[i, j] = True
                delta += -1 if fg[i, j] else 1
    return delta


@njit(cache=True)
def _greedy_cover(fg, order, radius_px, rmin_px, rmax_px, target, max_discs):
    h, w = fg.shape
    covered = np.zeros((h, w), dtype=np.bool_)
    sym = 0
    for i in range(h):
        for j in range(w):
            if fg[i, j]:
                sym += 1
    out = np.empty((max_discs, 3))
    n = 0
    for q in range(order.shape[0]):
        if sym <= target or n >= max_discs:
            break
        p = order[q]
        ci = p // w
        cj = p % w
        if covered[ci, cj]:
            continue
        # the set's boundary lies up to a pixel beyond the nearest background centre and
        # the best centre within half a pixel: search both on a quarter-pixel lattice
        best = 0
        by, bx, br = 0.0, 0.0, 0.0
        for a in range(-2, 3):
            for b in range(-2, 3):
                y = ci + 0.25 * a
                x = cj + 0.25 * b
                for c in range(5):
                    rho = min(max(radius_px[ci, cj] + 0.25 * c, rmin_px), rmax_px)
                    g = _disc_gain(fg, covered, y, x, rho)
                    if g > best:
                        best = g
                        by, bx, br = y, x, rho
        # clamped-up radii may spill onto background; only keep net improvements
        if best <= 0:
            continue
        out[n, 0] = bx
        out[n, 1] = by
        out[n, 2] = br
        n += 1
        sym += _cover(fg, covered, by, bx, br)
    return out[:n], sym


def approximate(raster: BinaryRaster, r_min: float, r_max: float, coverage_tol: float = 0.05,
                max_discs: int = 5000) -> MarkedConfiguration:
    """Greedy medial-axis covering of the foreground by discs.

    Candidates are uncovered foreground pixels in decreasing order of their
    distance to the background. Each candidate disc starts from the largest
    radius whose pixels are all foreground; its centre (within half a pixel)
    and radius (up to one pixel more, within ``[r_min, r_max]``) are then
    tuned to maximise newly covered foreground minus newly covered
    background, and it is skipped when that net gain is not positive.
    Placement stops once the symmetric difference with the foreground is at
    most ``coverage_tol`` of the foreground area or ``max_discs`` are placed.
    """
    if not (0 < r_min <= r_max):
        raise ValueError(f"need 0 < r_min <= r_max, got ({r_min}, {r_max})")
    if not (0 < coverage_tol < 1):
        raise ValueError(f"coverage_tol must lie in (0, 1), got {coverage_tol}")
    window = raster.window
    fg = raster.bits
    n_fg = int(fg.sum())
    if n_fg == 0:
        return MarkedConfiguration.empty(window)
    ps = raster.pixel_size
    dist = distance_transform_edt(fg) if not fg.all() else np.full(fg.shape, np.inf)
    # every pixel centre strictly closer than ``dist`` is foreground
    radius_px = np.minimum(dist * (1 - 1e-9), r_max / ps)
    flat = np.flatnonzero(fg.ravel())
    order = flat[np.argsort(-dist.ravel()[flat], kind="stable")].astype(np.int64)
    target = int(math.floor(coverage_tol * n_fg))
    discs, sym = _greedy_cover(fg, order, radius_px, r_min / ps, r_max / ps, target, int(max_discs))
    achieved = sym / n_fg
    if sym > target:
        msg = (f"coverage tolerance {coverage_tol} not reached: symmetric difference "
               f"{achieved:.4f} of the foreground with {len(discs)} discs")
        warnings.warn(msg, stacklevel=2)
    ox, oy = raster.origin
    xyr = np.column_stack([ox + (discs[:, 0] + 0.5) * ps, oy + (discs[:, 1] + 0.5) * ps, discs[:, 2] * ps])
    return MarkedConfiguration(xyr, window)


def symmetric_difference(raster: BinaryRaster, config: MarkedConfiguration) -> float:
    """Pixel-counted symmetric difference between the raster and the union, relative to the foreground."""
    painted = rasterize(config, raster.pixel_size, raster.window).bits
    return float((painted ^ raster.bits).sum() / max(1, raster.bits.sum()))


# -- PGM files ---------------------------------------------------------------

def _meta_path(path) -> Path:
    return Path(str(path) + ".meta")


def write_pgm(path, raster: BinaryRaster) -> None:
    """8-bit binary PGM (255 foreground) plus a ``.meta`` sidecar with pixel size and origin."""
    img = np.where(raster.bits[::-1], 255, 0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{raster.width} {raster.height}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    with open(_meta_path(path), "w") as fh:
        fh.write(f"pixel_size = {raster.pixel_size!r}\n")
        fh.write(f"origin = {raster.origin[0]!r}, {raster.origin[1]!r}\n")


def _tokens(data: bytes):
    """Header tokens of a PGM file and the offset just after the last one."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    return tokens, pos + 1


def read_pgm(path, pixel_size: float | None = None, origin=None) -> BinaryRaster:
    """Read a P5 or P2 PGM; grey levels at least half of maxval are foreground.

    Pixel size and origin come from the ``.meta`` sidecar unless given.
    """
    data = Path(path).read_bytes()
    (magic, w, h, maxval), off = _tokens(data)
    w, h, maxval = int(w), int(h), int(maxval)
    if magic == "P5":
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        img = np.frombuffer(data, dtype=dtype, count=w * h, offset=off).reshape(h, w)
    elif magic == "P2":
        img = np.array(data[off:].split()[: w * h], dtype=int).reshape(h, w)
    else:
        raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
    meta = {}
    mp = _meta_path(path)
    if mp.exists():
        for line in mp.read_text().splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                meta[k.strip()] = v.strip()
    if pixel_size is None:
        if "pixel_size" not in meta:
            raise ValueError(f"{path}: pixel size unknown; add {mp.name} or pass pixel_size")
        pixel_size = float(meta["pixel_size"])
    if origin is None:
        origin = tuple(float(v) for v in meta.get("origin", "0, 0").split(","))
    threshold = (maxval + 1) // 2
    return BinaryRaster(img[::-1] >= threshold, pixel_size, origin)
