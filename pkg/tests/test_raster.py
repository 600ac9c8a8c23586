from __future__ import annotations

import math

import numpy as np
import pytest

from quermass.estimation import estimator_suite
from quermass.geometry import Disc, MarkedConfiguration, Window, configuration_from, random_configuration
from quermass.model import QuermassParams, RadiusLaw
from quermass.raster import BinaryRaster, approximate, rasterize, read_pgm, symmetric_difference, write_pgm
from quermass.sampler import ChainSettings, derive_seed, simulate


def disc_raster(radius_px=10, size=41):
    c = size // 2
    i, j = np.mgrid[:size, :size]
    return BinaryRaster((i - c) ** 2 + (j - c) ** 2 <= radius_px ** 2, 1.0)


def test_raster_validation():
    with pytest.raises(ValueError):
        BinaryRaster(np.zeros((0, 3)), 1.0)
    with pytest.raises(ValueError):
        BinaryRaster(np.zeros((3, 3)), 0.0)
    with pytest.raises(ValueError):
        rasterize(MarkedConfiguration.empty(Window(0, 0, 1, 1)), -1.0)


def test_rasterize_empty_is_background():
    r = rasterize(MarkedConfiguration.empty(Window(0, 0, 5, 3)), 0.1)
    assert (r.height, r.width) == (30, 50) and not r.bits.any()


def test_rasterize_disc_area():
    r = rasterize(configuration_from([Disc(1.5, 1.5, 1.0)], Window(0, 0, 3, 3)), 0.01)
    assert abs(r.bits.sum() - math.pi / 1e-4) < 0.01 * math.pi / 1e-4


def test_rasterize_orientation():
    # a disc in the lower-left corner lights up low rows and columns
    r = rasterize(configuration_from([Disc(0.5, 0.5, 0.4)], Window(0, 0, 4, 2)), 0.1)
    rows, cols = np.nonzero(r.bits)
    assert rows.max() < 10 and cols.max() < 10
    assert r.window == Window(0, 0, 4, 2)


def test_approximate_single_disc():
    r = disc_raster()
    cfg = approximate(r, 1.0, 50.0, 0.05)
    assert 1 <= len(cfg) <= 3
    assert symmetric_difference(r, cfg) <= 0.05


def test_approximate_empty_raster():
    cfg = approximate(BinaryRaster(np.zeros((20, 30), bool), 0.5), 0.5, 2.0)
    assert len(cfg) == 0 and cfg.window == Window(0, 0, 15, 10)


def test_approximate_validation():
    r = disc_raster()
    for args in [(0.0, 1.0), (2.0, 1.0)]:
        with pytest.raises(ValueError):
            approximate(r, *args)
    for tol in (0.0, 1.0):
        with pytest.raises(ValueError):
            approximate(r, 1.0, 5.0, tol)


def test_approximate_reports_unreachable_tolerance():
    # a one-pixel-wide stripe pattern with r_min of two pixels cannot be matched
    bits = np.zeros((40, 40), bool)
    bits[:, ::4] = True
    with pytest.warns(UserWarning, match="not reached"):
        approximate(BinaryRaster(bits, 1.0), 2.0, 3.0, 0.05)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_round_trip_agreement(seed):
    w = Window(0, 0, 20, 20)
    cfg = random_configuration(np.random.default_rng(seed), 30, w, 0.5, 2.0)
    r = rasterize(cfg, 0.05)
    approx = approximate(r, 0.05, 2.0, 0.05)
    assert symmetric_difference(r, approx) <= 0.05
    back = rasterize(approx, 0.05, w)
    assert np.mean(back.bits == r.bits) >= 0.95


def test_approximate_is_deterministic():
    cfg = random_configuration(np.random.default_rng(5), 30, Window(0, 0, 20, 20), 0.5, 2.0)
    r = rasterize(cfg, 0.1)
    assert approximate(r, 0.1, 2.0) == approximate(r, 0.1, 2.0)


def test_pgm_round_trip(tmp_path):
    cfg = random_configuration(np.random.default_rng(1), 10, Window(2, 3, 12, 8), 0.5, 1.5)
    r = rasterize(cfg, 0.1)
    path = tmp_path / "img.pgm"
    write_pgm(path, r)
    back = read_pgm(path)
    assert np.array_equal(back.bits, r.bits)
    assert back.pixel_size == 0.1 and back.origin == (2.0, 3.0)
    assert path.read_bytes().startswith(b"P5\n100 50\n255\n")


def test_pgm_threshold_and_ascii(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_text("P2\n# comment\n3 2\n255\n0 127 128\n255 10 200\n")
    r = read_pgm(path, pixel_size=0.5)
    # first file row is the top of the image
    assert r.bits.tolist() == [[True, False, True], [False, False, True]]
    with pytest.raises(ValueError, match="pixel size"):
        read_pgm(path)
    bad = tmp_path / "b.pgm"
    bad.write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
    with pytest.raises(ValueError):
        read_pgm(bad, pixel_size=1.0)


@pytest.mark.slow
def test_estimate_does_not_depend_on_representation():
    law = RadiusLaw.uniform(0.5, 2)
    params = QuermassParams(0.1, (0.2, 0, 0))
    w = Window(0, 0, 50, 50)
    z_true, z_approx = [], []
    for i in range(10):
        obs = simulate(params, law, w, ChainSettings(seed=derive_seed(31, "repr", i)))
        fit_seed = derive_seed(32, "repr", i)
        z_true.append(estimator_suite(obs, law, seed=fit_seed, N=2000)["all"].z)
        if i == 0:
            approx = approximate(rasterize(obs, 0.05), 0.05, 2.0, 0.02)
            z_approx = estimator_suite(approx, law, seed=fit_seed, N=2000)["all"].z
    q75, q25 = np.percentile(z_true, [75, 25])
    assert abs(z_approx - z_true[0]) <= q75 - q25
