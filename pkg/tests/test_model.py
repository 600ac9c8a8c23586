from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quermass.geometry import Disc, MarkedConfiguration, Window, configuration_from, random_configuration
from quermass.model import QuermassParams, RadiusLaw, hamiltonian, local_energy, papangelou

W = Window(-5, -5, 5, 5)


def test_hamiltonian_examples():
    assert hamiltonian((0.3, -1.0, 2.0), MarkedConfiguration.empty(W)) == 0.0
    assert hamiltonian((0.2, 0, 0), configuration_from([Disc(0, 0, 1)], W)) == pytest.approx(0.2 * math.pi)
    two = configuration_from([Disc(0, 0, 1), Disc(1, 0, 1)], W)
    assert hamiltonian((0, 0.14, 0.22), two) == pytest.approx(0.14 * 8 * math.pi / 3 + 0.22, abs=1e-12)
    assert hamiltonian((0, 0.14, 0.22), two) == pytest.approx(1.3929, abs=1e-4)


def test_local_energy_examples():
    assert local_energy((0.2, 0, 0), Disc(0, 0, 1), MarkedConfiguration.empty(W)) == pytest.approx(0.2 * math.pi)
    assert local_energy((0, 0, 1), Disc(0, 0, 0.3), configuration_from([Disc(0, 0, 1)], W)) == 0.0
    e = local_energy((-0.2, 0.3, 0), Disc(0, 0, 1), configuration_from([Disc(1, 0, 1)], W))
    assert e == pytest.approx(-0.2 * 1.9132229549810367 + 0.3 * 2 * math.pi / 3, abs=1e-12)
    assert e == pytest.approx(0.2457, abs=1e-4)


def test_papangelou_examples():
    cfg = configuration_from([Disc(1, 1, 0.7), Disc(2, 0, 1.1)], W)
    assert papangelou(QuermassParams(0.1), Disc(0, 0, 1), cfg) == pytest.approx(0.1, abs=1e-15)
    empty = MarkedConfiguration.empty(W)
    assert papangelou(QuermassParams(1.0, (0.2, 0, 0)), Disc(0, 0, 1), empty) == pytest.approx(math.exp(-0.2 * math.pi))
    v = papangelou(QuermassParams(2.12, (0, 0.14, 0.22)), Disc(0, 0, 0.3), empty)
    assert v == pytest.approx(2.12 * math.exp(-0.14 * 0.6 * math.pi - 0.22), abs=1e-12)
    assert v == pytest.approx(1.3068, abs=1e-4)


configs = st.integers(0, 5000).map(
    lambda s: random_configuration(np.random.default_rng(s), 12, Window(0, 0, 8, 8), 0.3, 1.5))
thetas = st.tuples(*[st.floats(-2, 2)] * 3)


@settings(max_examples=50, deadline=None)
@given(configs, thetas, st.floats(0, 8), st.floats(0, 8), st.floats(0.3, 1.5))
def test_papangelou_consistency_and_positivity(cfg, theta, x, y, r):
    params = QuermassParams(0.37, theta)
    p = Disc(x, y, r)
    lam = papangelou(params, p, cfg)
    assert lam > 0
    assert abs(lam * math.exp(local_energy(theta, p, cfg)) - 0.37) < 1e-12


@settings(max_examples=50, deadline=None)
@given(configs, thetas, st.floats(0, 8), st.floats(0, 8), st.floats(0.3, 1.5))
def test_finite_range(cfg, theta, x, y, r):
    R0 = 1.5
    p = Disc(x, y, r)
    near = cfg.restricted(x, y, r + 2 * R0)
    assert local_energy(theta, p, cfg) == local_energy(theta, p, near)


def test_theta_zero_reduces_to_poisson():
    cfg = random_configuration(np.random.default_rng(0), 20, Window(0, 0, 8, 8), 0.3, 1.5)
    assert hamiltonian((0, 0, 0), cfg) == 0.0
    assert papangelou(QuermassParams(0.25), Disc(4, 4, 1), cfg) == 0.25


def test_params_validation():
    with pytest.raises(ValueError):
        QuermassParams(0.0)
    with pytest.raises(ValueError):
        QuermassParams(1.0, (0.0, math.inf, 0.0))
    with pytest.raises(ValueError):
        QuermassParams(1.0, (0.0, 1.0))


def test_radius_law_parse_and_print():
    u = RadiusLaw.parse("uniform(0.5, 2)")
    assert (u.kind, u.r_min, u.r_max, u.R0) == ("uniform", 0.5, 2.0, 2.0)
    assert RadiusLaw.parse(str(u)) == u
    d = RadiusLaw.parse("discrete[(0.5, 0.25), (1.0, 0.75)]")
    assert d.R0 == 1.0 and d.mean() == pytest.approx(0.875)
    assert RadiusLaw.parse(str(d)) == d
    with pytest.raises(ValueError):
        RadiusLaw.parse("normal(1, 2)")
    with pytest.raises(ValueError):
        RadiusLaw.uniform(2, 1)
    with pytest.raises(ValueError):
        RadiusLaw.discrete([(1.0, 0.5), (2.0, 0.4)])


def test_uniform_law_moments():
    law = RadiusLaw.uniform(0.5, 2)
    x = law.sample(np.random.default_rng(1), 200_000)
    assert x.min() >= 0.5 and x.max() <= 2
    assert abs(x.mean() - law.mean()) < 4 * 1.5 / math.sqrt(12 * 200_000)
    assert law.moment2() == pytest.approx(np.mean(x ** 2), rel=5e-3)


def test_discrete_law_alias_frequencies():
    atoms = [(0.1, 0.05), (0.2, 0.15), (0.4, 0.5), (0.8, 0.3)]
    law = RadiusLaw.discrete(atoms)
    n = 400_000
    x = law.sample(np.random.default_rng(2), n)
    for r, p in atoms:
        freq = np.mean(x == r)
        assert abs(freq - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_law_sampling_is_deterministic():
    law = RadiusLaw.discrete([(0.5, 0.5), (1.0, 0.5)])
    a = law.sample(np.random.default_rng(9), 100)
    b = law.sample(np.random.default_rng(9), 100)
    assert np.array_equal(a, b)
