"""The Quermass-interaction model: parameters, radius law and energies.

The partition function is never computed; everything downstream uses
ratios of densities, i.e. the Papangelou intensity.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .geometry import Disc, MarkedConfiguration, local_delta, minkowski


def _alias_table(probs: np.ndarray):
    """Walker/Vose alias tables for sampling a discrete law in O(1)."""
    n = len(probs)
    scaled = probs * n
    prob = np.zeros(n)
    alias = np.zeros(n, dtype=np.int64)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = scaled[g] + scaled[s] - 1.0
        (small if scaled[g] < 1.0 else large).append(g)
    for i in large + small:
        prob[i] = 1.0
        alias[i] = i
    return prob, alias


@dataclass(frozen=True)
class RadiusLaw:
    """Reference law of the radii: ``uniform(r_min, r_max)`` or a discrete law.

    ``R0`` is the supremum of the support unless given explicitly.
    """

    kind: str
    r_min: float = 0.0
    r_max: float = 0.0
    atoms: tuple[tuple[float, float], ...] = ()
    R0: float = 0.0
    _alias: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.kind == "uniform":
            if not (0 <= self.r_min < self.r_max):
                raise ValueError(f"uniform radius law needs 0 <= r_min < r_max, got ({self.r_min}, {self.r_max})")
            sup = self.r_max
        elif self.kind == "discrete":
            if not self.atoms:
                raise ValueError("discrete radius law needs at least one (radius, probability) atom")
            radii = np.array([a[0] for a in self.atoms], dtype=float)
            probs = np.array([a[1] for a in self.atoms], dtype=float)
            if np.any(radii < 0) or np.any(probs <= 0) or not math.isclose(probs.sum(), 1.0, abs_tol=1e-9):
                raise ValueError("discrete radius law needs radii >= 0 and positive probabilities summing to 1")
            sup = float(radii.max())
            object.__setattr__(self, "_alias", (radii, *_alias_table(probs / probs.sum())))
        else:
            raise ValueError(f"unknown radius law kind {self.kind!r}")
        R0 = self.R0 or sup
        if R0 <= 0 or R0 < sup:
            raise ValueError(f"R0 must be positive and bound the support, got {R0}")
        object.__setattr__(self, "R0", float(R0))

    @classmethod
    def uniform(cls, r_min: float, r_max: float) -> "RadiusLaw":
        return cls("uniform", r_min=float(r_min), r_max=float(r_max))

    @classmethod
    def discrete(cls, atoms) -> "RadiusLaw":
        return cls("discrete", atoms=tuple((float(r), float(p)) for r, p in atoms))

    @classmethod
    def parse(cls, text: str) -> "RadiusLaw":
        """Parse ``uniform(a, b)`` or ``discrete[(r, p), ...]``."""
        text = text.strip()
        m = re.fullmatch(r"uniform\(\s*([^,]+),\s*([^)]+)\)", text)
        if m:
            return cls.uniform(float(m.group(1)), float(m.group(2)))
        m = re.fullmatch(r"discrete\s*\[(.*)\]", text)
        if m:
            pairs = re.findall(r"\(\s*([^,()]+)\s*,\s*([^,()]+)\s*\)", m.group(1))
            return cls.discrete([(float(a), float(b)) for a, b in pairs])
        raise ValueError(f"cannot parse radius law {text!r}; use uniform(a, b) or discrete[(r, p), ...]")

    def __str__(self) -> str:
        if self.kind == "uniform":
            return f"uniform({self.r_min!r}, {self.r_max!r})"
        return "discrete[" + ", ".join(f"({r!r}, {p!r})" for r, p in self.atoms) + "]"

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "uniform":
            return self.r_min + (self.r_max - self.r_min) * rng.random(size)
        radii, prob, alias = self._alias
        col = rng.integers(0, len(radii), size)
        coin = rng.random(size)
        return radii[np.where(coin < prob[col], col, alias[col])]

    def mean(self) -> float:
        if self.kind == "uniform":
            return 0.5 * (self.r_min + self.r_max)
        return float(sum(r * p for r, p in self.atoms))

    def moment2(self) -> float:
        if self.kind == "uniform":
            a, b = self.r_min, self.r_max
            return (a * a + a * b + b * b) / 3.0
        return float(sum(r * r * p for r, p in self.atoms))


@dataclass(frozen=True)
class QuermassParams:
    """Intensity ``z`` and interaction vector ``theta = (area, perimeter, euler)``."""

    z: float
    theta: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        theta = tuple(float(t) for t in self.theta)
        if len(theta) != 3:
            raise ValueError(f"theta must have three components, got {self.theta}")
        if not (self.z > 0 and math.isfinite(self.z)):
            raise ValueError(f"intensity z must be positive and finite, got {self.z}")
        if not all(math.isfinite(t) for t in theta):
            raise ValueError(f"theta must be finite, got {theta}")
        object.__setattr__(self, "theta", theta)


def hamiltonian(theta, config: MarkedConfiguration) -> float:
    return minkowski(config).dot(theta)


def local_energy(theta, p: Disc, config: MarkedConfiguration) -> float:
    """Energy cost of adding ``p``: theta . (dA, dL, dchi)."""
    return local_delta(p, config).dot(theta)


def papangelou(params: QuermassParams, p: Disc, config: MarkedConfiguration) -> float:
    return params.z * math.exp(-local_energy(params.theta, p, config))
