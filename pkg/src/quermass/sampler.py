"""Birth/death/move Metropolis-Hastings simulation on a bounded window.

Free boundary: germs live in the window, grains may stick out, and nothing
outside the window is conditioned on.
"""
from __future__ import annotations

import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels as K
from .geometry import MarkedConfiguration, Window
from .model import QuermassParams, RadiusLaw

log = logging.getLogger(__name__)

CHUNK = 200_000


def derive_seed(seed, *keys) -> np.random.SeedSequence:
    """Child stream of ``seed`` addressed by integer or string keys.

    Strings are hashed with CRC32 so the mapping is stable across runs and
    platforms; the result does not depend on the order streams are created.
    """
    if isinstance(seed, np.random.SeedSequence):
        entropy, base = seed.entropy, tuple(seed.spawn_key)
    else:
        entropy, base = int(seed), ()
    key = tuple(zlib.crc32(k.encode()) if isinstance(k, str) else int(k) for k in keys)
    return np.random.SeedSequence(entropy, spawn_key=base + key)


@dataclass(frozen=True)
class ChainSettings:
    n_steps: int = 200_000
    burn_in: int = 50_000
    p_birth: float = 1 / 3
    p_death: float = 1 / 3
    p_move: float = 1 / 3
    move_sd: float | None = None  # defaults to R0 of the radius law
    seed: object = 0

    def __post_init__(self):
        if self.p_birth <= 0 or self.p_death <= 0:
            raise ValueError("birth and death proposals need positive probability for an irreducible chain")
        if self.p_move < 0 or not math.isclose(self.p_birth + self.p_death + self.p_move, 1.0, abs_tol=1e-12):
            raise ValueError(
                f"proposal probabilities must be non-negative and sum to 1, got "
                f"({self.p_birth}, {self.p_death}, {self.p_move})")
        if self.n_steps < 1 or not (0 <= self.burn_in < self.n_steps):
            raise ValueError(f"need 0 <= burn_in < n_steps, got burn_in={self.burn_in}, n_steps={self.n_steps}")
        if self.move_sd is not None and self.move_sd <= 0:
            raise ValueError(f"move_sd must be positive, got {self.move_sd}")


@dataclass
class ChainResult:
    config: MarkedConfiguration
    trace: np.ndarray | None  # (n_steps, 4): n, area, perimeter, euler after each step
    accepted: np.ndarray  # per move type: birth, death, move
    proposed: np.ndarray

    @property
    def acceptance_rates(self) -> dict[str, float]:
        names = ("birth", "death", "move")
        return {k: (a / p if p else float("nan")) for k, a, p in zip(names, self.accepted, self.proposed)}


def run_chain(params: QuermassParams, law: RadiusLaw, window: Window, settings: ChainSettings,
              initial: MarkedConfiguration | None = None, trace: bool = False) -> ChainResult:
    """Run one chain from ``initial`` (empty by default) and return its final state."""
    rng = np.random.default_rng(settings.seed)
    sd = settings.move_sd if settings.move_sd is not None else law.R0
    th1, th2, th3 = params.theta
    if initial is None:
        state = (np.empty(0), np.empty(0), np.empty(0))
    else:
        state = initial.arrays()
    traces = []
    accepted = np.zeros(3, dtype=np.int64)
    proposed = np.zeros(3, dtype=np.int64)
    done = 0
    while done < settings.n_steps:
        m = min(CHUNK, settings.n_steps - done)
        draws = (rng.random(m), rng.random(m), rng.random(m),
                 rng.uniform(window.x0, window.x1, m), rng.uniform(window.y0, window.y1, m),
                 law.sample(rng, m), rng.standard_normal(m), rng.standard_normal(m),
                 law.sample(rng, m))
        cx, cy, r, tr, acc, prop = K.run_chain(
            *state, params.z, th1, th2, th3, window.x0, window.y0, window.x1, window.y1,
            settings.p_birth, settings.p_death, sd, *draws, trace, K.EPS)
        state = (cx, cy, r)
        accepted += acc
        proposed += prop
        if trace:
            traces.append(tr)
        done += m
    config = MarkedConfiguration(np.column_stack(state), window, validate=False)
    result = ChainResult(config, np.vstack(traces) if trace else None, accepted, proposed)
    log.info("chain finished: n=%d, acceptance %s", len(config),
             {k: round(v, 3) for k, v in result.acceptance_rates.items()})
    return result


def simulate(params: QuermassParams, law: RadiusLaw, window: Window,
             settings: ChainSettings) -> MarkedConfiguration:
    return run_chain(params, law, window, settings).config


def _replicate_one(args):
    params, law, window, settings = args
    return simulate(params, law, window, settings)


def replicate(params: QuermassParams, law: RadiusLaw, window: Window, settings: ChainSettings,
              n_rep: int, workers: int = 1) -> list[MarkedConfiguration]:
    """``n_rep`` independent chains; replicate ``i`` uses ``derive_seed(settings.seed, i)``."""
    if n_rep < 1:
        raise ValueError(f"n_rep must be at least 1, got {n_rep}")
    jobs = [(params, law, window, replace(settings, seed=derive_seed(settings.seed, i)))
            for i in range(n_rep)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_replicate_one, jobs))
    return [_replicate_one(j) for j in jobs]
