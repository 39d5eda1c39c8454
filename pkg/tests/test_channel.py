import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catnsim.channel import (ArrayGeometry, ChannelModel, complex_normal,
                             evolve_nlos, fsp_path_loss, steering_vector,
                             uma_los_probability, uma_path_loss)
from catnsim.scenario import Scenario

import oracles

C = 299792458.0


# ----------------------------------------------------------------------
# steering vector
def test_steering_single_antenna():
    geom = ArrayGeometry(1, 1, 0.075, 0.15)
    a = steering_vector(0.7, -1.2, geom)
    assert a.shape == (1,)
    assert a[0] == pytest.approx(1.0)


def test_steering_two_element_vertical_broadside():
    lam = 0.15
    geom = ArrayGeometry(1, 2, lam / 2, lam)
    a = steering_vector(math.pi / 2, 0.0, geom)
    np.testing.assert_allclose(a, np.array([1.0, 1.0]) / math.sqrt(2), atol=1e-12)


def test_steering_matches_elementwise_formula(rng):
    lam = C / 2e9
    geom = ArrayGeometry(4, 4, lam / 2, lam)
    for _ in range(10):
        theta = rng.uniform(0, math.pi)
        phi = rng.uniform(-math.pi, math.pi)
        a = steering_vector(theta, phi, geom)
        for i in range(16):
            mh, mv = i // 4 + 1, i % 4 + 1
            expect = oracles.steering_element(theta, phi, mh, mv, lam / 2, lam, 16)
            assert a[i] == pytest.approx(expect, abs=1e-12)
        assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(theta=st.floats(0, math.pi), phi=st.floats(-math.pi, math.pi),
       mh=st.integers(1, 5), mv=st.integers(1, 5))
def test_steering_unit_norm(theta, phi, mh, mv):
    geom = ArrayGeometry(mh, mv, 0.075, 0.15)
    assert abs(np.linalg.norm(steering_vector(theta, phi, geom)) - 1.0) <= 1e-12


# ----------------------------------------------------------------------
# path loss
def test_fsp_zero_db_distance():
    fc = 2e9
    d = C / (4 * math.pi * fc)
    assert fsp_path_loss(d, fc) == pytest.approx(1.0, rel=1e-12)


def test_fsp_reference_value():
    loss_db = 10 * math.log10(fsp_path_loss(10e3, 2e9))
    assert loss_db == pytest.approx(118.47, abs=5e-3)


def test_fsp_doubling_distance():
    d1 = 10 * math.log10(fsp_path_loss(1000.0, 2e9))
    d2 = 10 * math.log10(fsp_path_loss(2000.0, 2e9))
    assert d2 - d1 == pytest.approx(20 * math.log10(2), abs=1e-9)


def test_fsp_rejects_nonpositive():
    with pytest.raises(ValueError):
        fsp_path_loss(0.0, 2e9)
    with pytest.raises(ValueError):
        fsp_path_loss(-5.0, 2e9)


def test_uma_nlos_not_below_los():
    for d in (40.0, 150.0, 900.0, 4000.0):
        los = uma_path_loss(d, 30.0, 1.5, 2e9, los_blocked=False)
        nlos = uma_path_loss(d, 30.0, 1.5, 2e9, los_blocked=True)
        assert nlos >= los


def test_uma_los_reference_value():
    # independent evaluation of the urban-macro LoS closed form
    d2d, h_bs, h_ut, fc = 100.0, 30.0, 1.5, 2e9
    d3d = math.sqrt(d2d ** 2 + (h_bs - h_ut) ** 2)
    d_bp = 4 * (h_bs - 1.0) * (h_ut - 1.0) * fc / C
    assert d2d <= d_bp
    expect_db = 28.0 + 22.0 * math.log10(d3d) + 20.0 * math.log10(fc / 1e9)
    got_db = 10 * math.log10(uma_path_loss(d2d, h_bs, h_ut, fc, False))
    assert got_db == pytest.approx(expect_db, abs=1e-9)


def test_uma_monotone_in_distance():
    ds = np.linspace(35.0, 5000.0, 300)
    for blocked in (False, True):
        losses = [uma_path_loss(d, 30.0, 1.5, 2e9, blocked) for d in ds]
        assert np.all(np.diff(losses) >= 0)


def test_uma_clamps_with_warning(caplog):
    with caplog.at_level(logging.WARNING, logger="catnsim.channel"):
        near = uma_path_loss(2.0, 30.0, 1.5, 2e9, False)
    assert "clamped" in caplog.text
    assert near == pytest.approx(uma_path_loss(10.0, 30.0, 1.5, 2e9, False))


def test_uma_los_probability_shape():
    assert uma_los_probability(10.0) == 1.0
    assert 0 < uma_los_probability(500.0) < uma_los_probability(50.0) <= 1.0


# ----------------------------------------------------------------------
# fading recursions
def test_evolve_degenerate_cases(rng):
    prev = complex_normal(rng, (8,))
    same = evolve_nlos(prev, 1.0, np.random.default_rng(0))
    np.testing.assert_array_equal(same, prev)
    fresh_rng = np.random.default_rng(0)
    fresh = evolve_nlos(prev, 0.0, fresh_rng)
    expect = complex_normal(np.random.default_rng(0), (8,))
    np.testing.assert_allclose(fresh, expect)


def test_evolve_lag1_correlation_and_variance(rng):
    alpha, steps, width = 0.64, 100_000, 8
    x = complex_normal(rng, (width,))
    sum_xy = np.zeros(width)
    sum_abs2 = np.zeros(width)
    for _ in range(steps):
        y = evolve_nlos(x, alpha, rng)
        sum_xy += (x.conj() * y).real
        sum_abs2 += np.abs(x) ** 2
        x = y
    var = sum_abs2 / steps
    corr = (sum_xy / steps) / var
    assert np.all(np.abs(corr - alpha) < 0.03)
    assert np.all(np.abs(var - 1.0) < 0.05)


# ----------------------------------------------------------------------
# assembled channels
def _static_tiny(alpha=0.0, **kw):
    scn = Scenario.tiny(n_bs=1, n_tu=1, n_au=1, mh=2, mv=2, alpha=alpha,
                        tu_speed_mps=0.0, au_speed_mps=0.0, **kw)
    scn.au_routes = {0: (3000.0, 0.0, 0.0)}
    return scn


def test_tu_channel_mean_power_matches_path_gain():
    scn = _static_tiny()  # alpha=0: fresh fading every slot
    model = ChannelModel(scn, seed=9)
    first = model.advance(0)
    d2d = math.hypot(*(first.tu_pos[0][:2] - model.geom.bs_pos[0][:2]))
    loss = uma_path_loss(d2d, scn.bs_height_m, scn.tu_height_m, scn.carrier_hz,
                         bool(model.los_blocked[0, 0]))
    acc = np.vdot(first.h[0, 0], first.h[0, 0]).real
    n = 20000
    for t in range(1, n):
        chan = model.advance(t)
        acc += np.vdot(chan.h[0, 0], chan.h[0, 0]).real
    assert acc / n == pytest.approx(scn.m / loss, rel=0.02)


def test_au_channel_pure_los_when_kappa_large():
    scn = _static_tiny(kappa_db=200.0)
    chan = ChannelModel(scn, seed=2).advance(0)
    lfsp_inv = chan.au_lfsp_inv[0, 0]
    assert np.vdot(chan.g[0, 0], chan.g[0, 0]).real == pytest.approx(lfsp_inv, rel=1e-6)
    np.testing.assert_allclose(np.abs(chan.g[0, 0]), np.abs(chan.g_los[0, 0]), rtol=1e-6)


def test_au_channel_rayleigh_when_kappa_zero():
    scn = _static_tiny(kappa_db=-300.0)
    model = ChannelModel(scn, seed=2)
    chan = model.advance(0)
    lfsp_inv = chan.au_lfsp_inv[0, 0]
    expect = math.sqrt(lfsp_inv) * model.g_nlos[0, 0]
    np.testing.assert_allclose(chan.g[0, 0], expect, rtol=1e-6)


def test_au_channel_mean_power():
    scn = _static_tiny()  # alpha=0: fresh fading every slot
    model = ChannelModel(scn, seed=5)
    kappa = scn.kappa
    acc = 0.0
    n = 20000
    for t in range(n):
        chan = model.advance(t)
        acc += np.vdot(chan.g[0, 0], chan.g[0, 0]).real
    lfsp_inv = chan.au_lfsp_inv[0, 0]
    expect = lfsp_inv * (kappa + scn.m) / (kappa + 1.0)
    assert acc / n == pytest.approx(expect, rel=0.02)


def test_channels_bit_identical_across_runs():
    scn = Scenario.tiny()
    a = ChannelModel(scn, seed=7)
    b = ChannelModel(scn, seed=7)
    for t in range(4):
        ca, cb = a.advance(t), b.advance(t)
        np.testing.assert_array_equal(ca.h, cb.h)
        np.testing.assert_array_equal(ca.g, cb.g)
    np.testing.assert_array_equal(a.los_blocked, b.los_blocked)


def test_frozen_channels_when_alpha_one():
    scn = _static_tiny(alpha=1.0)
    model = ChannelModel(scn, seed=3)
    c0 = model.advance(0)
    c1 = model.advance(1)
    np.testing.assert_array_equal(c0.h, c1.h)


def test_advance_requires_order():
    model = ChannelModel(Scenario.tiny(), seed=1)
    model.advance(0)
    with pytest.raises(RuntimeError):
        model.advance(2)
