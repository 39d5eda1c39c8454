import math

import numpy as np
import pytest

from catnsim.encoding import (Codebook, ObsContext, action_schema,
                              bs_action_dim, bs_cost, bs_observation_dim,
                              bs_reward, build_bs_observation,
                              build_tu_observation, compress_channel,
                              decode_bs_action, log_power, observation_schema,
                              penalty_reward, select_interferer_sets,
                              tu_observation_dim, tu_reward)
from catnsim.channel import ChannelModel
from catnsim.phy import AssociationMap, BeamformerSet, transmit
from catnsim.scenario import Scenario

import oracles


# ----------------------------------------------------------------------
# codebook
def test_codebook_columns_unit_norm():
    cb = Codebook.build(16, 128)
    np.testing.assert_allclose(np.linalg.norm(cb.f, axis=0), 1.0, atol=1e-12)


def test_compress_codeword_is_top_hit():
    cb = Codebook.build(8, 64)
    idx, coef = compress_channel(cb.f[:, 17].copy(), cb, 4)
    assert idx[0] == 17
    assert coef[0] == pytest.approx(1.0, abs=1e-12)


def test_compress_zero_channel_tie_rule():
    cb = Codebook.build(8, 64)
    idx, coef = compress_channel(np.zeros(8, dtype=complex), cb, 4)
    assert idx.tolist() == [0, 1, 2, 3]
    np.testing.assert_array_equal(coef, 0.0)


def test_compress_matches_full_sort(rng):
    cb = Codebook.build(16, 128)
    for _ in range(20):
        h = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        idx, coef = compress_channel(h, cb, 4)
        d = cb.f.conj().T @ h
        order = sorted(range(128), key=lambda c: (-abs(d[c]), c))[:4]
        assert idx.tolist() == order
        np.testing.assert_allclose(coef, d[order], rtol=1e-12)
        assert np.all(np.diff(np.abs(coef)) <= 1e-12)


# ----------------------------------------------------------------------
# helpers to build consistent snapshots
def _snapshot(rng, scn, varrho=None, p=None, t=1, prev_varrho=None):
    model = ChannelModel(scn, int(rng.integers(1 << 30)))
    chan = model.advance(0)
    if varrho is None:
        varrho = rng.integers(scn.n_bs, size=scn.n_tu)
    assoc = AssociationMap(varrho, scn.n_bs)
    if p is None:
        p = rng.uniform(0.1, scn.p_max_w / scn.n_tu, scn.n_tu)
    w_bar = rng.standard_normal((scn.n_tu, scn.m)) + 1j * rng.standard_normal((scn.n_tu, scn.m))
    w_bar /= np.linalg.norm(w_bar, axis=1, keepdims=True)
    snap = transmit(t, assoc, prev_varrho, BeamformerSet(np.asarray(p, float), w_bar),
                    chan.h, chan.g, chan.g_los, chan.strengths, scn.sigma2_w)
    return snap, chan, assoc


# ----------------------------------------------------------------------
# set selection
def test_sets_cover_all_bs_when_b_in_equals_n(rng):
    scn = Scenario.tiny(b_in=3)
    snap, chan, assoc = _snapshot(rng, scn)
    sets = select_interferer_sets(snap, scn)
    for k in range(scn.n_tu):
        assert sorted(sets.b_in[k].tolist()) == [0, 1, 2]


def test_sets_sizes_and_sort_oracle(rng):
    scn = Scenario.tiny()
    snap, chan, assoc = _snapshot(rng, scn)
    sets = select_interferer_sets(snap, scn)
    assert sets.b_in.shape == (scn.n_tu, scn.eff_b_in)
    assert sets.b_in_pri.shape == (scn.n_au, scn.eff_b_in_pri)
    assert sets.u_out.shape == (scn.n_bs, scn.eff_u_out)
    for k in range(scn.n_tu):
        order = sorted(range(scn.n_bs), key=lambda j: (-snap.beta_mat[j, k], j))
        assert sets.b_in[k].tolist() == order[:scn.eff_b_in]
    for n in range(scn.n_bs):
        order = sorted(range(scn.n_tu), key=lambda i: (-snap.beta_mat[n, i], i))
        assert sets.u_out[n].tolist() == order[:scn.eff_u_out]
        own = snap.served(n)
        assert len(sets.u_in[n]) == min(scn.eff_k_in, own.size)
        assert set(sets.u_in[n]).issubset(set(own))


def test_sets_strength_fallback_with_zero_power(rng):
    scn = Scenario.tiny()
    snap, chan, assoc = _snapshot(rng, scn, p=np.zeros(scn.n_tu))
    sets = select_interferer_sets(snap, scn)
    for n in range(scn.n_bs):
        order = sorted(range(scn.n_tu), key=lambda i: (-snap.strengths[n, i], i))
        assert sets.u_out[n].tolist() == order[:scn.eff_u_out]
    for k in range(scn.n_tu):
        order = sorted(range(scn.n_bs), key=lambda j: (-snap.strengths[j, k], j))
        assert sets.b_in[k].tolist() == order[:scn.eff_b_in]


# ----------------------------------------------------------------------
# observations
def _contexts(rng, scn):
    seed = int(rng.integers(1 << 30))
    model = ChannelModel(scn, seed)
    chan0 = model.advance(0)
    varrho0 = rng.integers(scn.n_bs, size=scn.n_tu)
    assoc0 = AssociationMap(varrho0, scn.n_bs)
    p0 = rng.uniform(0.1, 1.0, scn.n_tu)
    w0 = rng.standard_normal((scn.n_tu, scn.m)) + 1j * rng.standard_normal((scn.n_tu, scn.m))
    w0 /= np.linalg.norm(w0, axis=1, keepdims=True)
    snap0 = transmit(0, assoc0, None, BeamformerSet(p0, w0), chan0.h, chan0.g,
                     chan0.g_los, chan0.strengths, scn.sigma2_w)
    chan1 = model.advance(1)
    assoc1 = AssociationMap(rng.integers(scn.n_bs, size=scn.n_tu), scn.n_bs)
    cb = Codebook.build(scn.m, scn.codebook_size)
    return ObsContext(scn, cb, chan1, assoc1, snap0, chan0), snap0, chan1


def test_bs_observation_dimension_and_determinism(rng):
    scn = Scenario.tiny()
    ctx, snap0, chan1 = _contexts(rng, scn)
    for n in range(scn.n_bs):
        v1 = build_bs_observation(ctx, n)
        v2 = build_bs_observation(ctx, n)
        assert v1.shape == (bs_observation_dim(scn),)
        assert v1.tobytes() == v2.tobytes()
        assert np.all(np.isfinite(v1))


def test_bs_observation_empty_cell_masked(rng):
    scn = Scenario.tiny()
    seed = int(rng.integers(1 << 30))
    model = ChannelModel(scn, seed)
    chan = model.advance(0)
    # everyone on BS 0; BS 2 serves nobody
    assoc = AssociationMap(np.zeros(scn.n_tu, dtype=int), scn.n_bs)
    cb = Codebook.build(scn.m, scn.codebook_size)
    ctx = ObsContext(scn, cb, chan, assoc, None, None)
    obs = build_bs_observation(ctx, 2)
    k = scn.n_tu
    loc_len = k + 3 * scn.compression * k + 4 * k
    assert not obs[:loc_len].any()


def test_bs_observation_bootstrap_zeros(rng):
    scn = Scenario.tiny()
    model = ChannelModel(scn, int(rng.integers(1 << 30)))
    chan = model.advance(0)
    assoc = AssociationMap(rng.integers(scn.n_bs, size=scn.n_tu), scn.n_bs)
    cb = Codebook.build(scn.m, scn.codebook_size)
    ctx = ObsContext(scn, cb, chan, assoc, None, None)
    obs = build_bs_observation(ctx, 0)
    # everything after the local terrestrial+aerial blocks is exchanged
    # history, which must be zero-padded in the first slot
    loc_len = scn.n_tu + 3 * scn.compression * scn.n_tu + 4 * scn.n_tu + 5 * scn.n_au
    assert not obs[loc_len:].any()


def test_bs_observation_uses_only_previous_slot_exchange(rng):
    scn = Scenario.tiny()
    ctx, snap0, chan1 = _contexts(rng, scn)
    healthy = build_bs_observation(ctx, 0)
    assert np.all(np.isfinite(healthy))
    # poison every numeric field of the previous snapshot: the exchanged
    # blocks must be built from it, so the poison must show up
    snap0.rate[:] = np.nan
    snap0.p[:] = np.nan
    snap0.beta_mat[:] = np.nan
    snap0.beta[:] = np.nan
    snap0.p_r[:] = np.nan
    snap0.rho[:] = np.nan
    snap0.rho_inferred[:] = np.nan
    cb = ctx.cb
    poisoned_ctx = ObsContext(scn, cb, chan1, ctx.cur_assoc, snap0, ctx.prev_chan)
    poisoned = build_bs_observation(poisoned_ctx, 0)
    assert np.isnan(poisoned).any()
    # the current-slot local blocks stay finite (they never read the snapshot)
    loc_front = scn.n_tu + 3 * scn.compression * scn.n_tu
    assert np.all(np.isfinite(poisoned[:loc_front]))


def test_tu_observation_shape_and_bootstrap(rng):
    scn = Scenario.tiny()
    ctx, snap0, chan1 = _contexts(rng, scn)
    obs = build_tu_observation(scn, chan1, snap0, 3)
    assert obs.shape == (tu_observation_dim(scn),)
    assert obs.shape == (3 * scn.n_bs + 4,)
    # load counts partition the user set
    assert obs[:scn.n_bs].sum() == scn.n_tu
    boot = build_tu_observation(scn, chan1, None, 3)
    assert boot.shape == obs.shape
    assert not boot[:2 * scn.n_bs].any()


def test_tu_observation_determinism(rng):
    scn = Scenario.tiny()
    ctx, snap0, chan1 = _contexts(rng, scn)
    a = build_tu_observation(scn, chan1, snap0, 1)
    b = build_tu_observation(scn, chan1, snap0, 1)
    assert a.tobytes() == b.tobytes()


def test_observation_schema_consistency():
    scn = Scenario.tiny()
    schema = observation_schema(scn)
    for key, dim in (("bs_observation", bs_observation_dim(scn)),
                     ("tu_observation", tu_observation_dim(scn)),
                     ("bs_action", bs_action_dim(scn))):
        entries = schema[key]
        off = 0
        for ent in entries:
            assert ent["offset"] == off
            off += ent["length"]
        assert off == dim


# ----------------------------------------------------------------------
# action decoding
def test_decode_identity_regulariser_is_mrt(rng):
    scn = Scenario.tiny()
    _, _, chan = _contexts(rng, scn)
    assoc = AssociationMap(np.zeros(scn.n_tu, dtype=int), scn.n_bs)
    k, l = scn.n_tu, scn.n_au
    raw = np.full(bs_action_dim(scn), 1e-9)
    raw[0] = 1.0
    raw[1:1 + k] = 1.0 / k
    raw[1 + 2 * k] = 1.0  # eta at full scale, alpha/mu effectively zero
    p, w_bar = decode_bs_action(raw, 0, assoc, chan.h[0], chan.g[0],
                                scn.p_max_w, scn)
    for i in range(k):
        mrt = chan.h[0, i] / np.linalg.norm(chan.h[0, i])
        assert abs(abs(np.vdot(mrt, w_bar[i])) - 1.0) < 1e-6


def test_decode_single_user_full_power(rng):
    scn = Scenario.tiny()
    _, _, chan = _contexts(rng, scn)
    varrho = np.ones(scn.n_tu, dtype=int)
    varrho[0] = 0  # BS 0 serves only user 0
    assoc = AssociationMap(varrho, scn.n_bs)
    raw = np.full(bs_action_dim(scn), 0.5)
    raw[0] = 1.0
    p, w_bar = decode_bs_action(raw, 0, assoc, chan.h[0], chan.g[0],
                                scn.p_max_w, scn)
    assert p[0] == pytest.approx(scn.p_max_w, rel=1e-12)
    assert p[1:].sum() == 0.0


def test_decode_random_action_properties(rng):
    scn = Scenario.tiny()
    _, _, chan = _contexts(rng, scn)
    assoc = AssociationMap(rng.integers(scn.n_bs, size=scn.n_tu), scn.n_bs)
    k, l = scn.n_tu, scn.n_au
    for n in range(scn.n_bs):
        raw = rng.uniform(1e-6, 1.0, bs_action_dim(scn))
        p, w_bar = decode_bs_action(raw, n, assoc, chan.h[n], chan.g[n],
                                    scn.p_max_w, scn)
        own = assoc.served(n)
        if own.size == 0:
            assert p.sum() == 0
            continue
        np.testing.assert_allclose(np.linalg.norm(w_bar[own], axis=1), 1.0,
                                   atol=1e-10)
        assert p[own].sum() == pytest.approx(scn.p_max_w * raw[0], rel=1e-10)
        # independent reconstruction of the regularised-inverse direction
        alpha = raw[1 + k:1 + 2 * k] * scn.alpha_max
        mu = raw[2 + 2 * k:] * scn.mu_max
        eta = raw[1 + 2 * k] * scn.eta_max + scn.eta_floor
        d = eta * np.eye(scn.m, dtype=complex)
        for i in range(k):
            d += alpha[i] * np.outer(chan.h[n, i], chan.h[n, i].conj())
        for li in range(l):
            d += mu[li] * np.outer(chan.g[n, li], chan.g[n, li].conj())
        for i in own:
            direct = np.linalg.solve(d, chan.h[n, i])
            direct /= np.linalg.norm(direct)
            assert abs(abs(np.vdot(direct, w_bar[i])) - 1.0) < 1e-8


def test_decode_rejects_bad_dimension():
    scn = Scenario.tiny()
    with pytest.raises(ValueError):
        decode_bs_action(np.zeros(3), 0, AssociationMap(np.zeros(scn.n_tu, int),
                                                        scn.n_bs),
                         np.zeros((scn.n_tu, scn.m), complex),
                         np.zeros((scn.n_au, scn.m), complex), scn.p_max_w, scn)


# ----------------------------------------------------------------------
# rewards and costs
def test_bs_reward_no_leakage_cases(rng):
    scn = Scenario.tiny()
    # single served user, everyone else on BS 0 too -> BS 2 idle
    snap, chan, assoc = _snapshot(rng, scn, varrho=np.zeros(scn.n_tu, dtype=int))
    sets = select_interferer_sets(snap, scn)
    # idle BS: no served rate, no leakage
    assert snap.beta_mat[2].sum() == 0.0
    assert bs_reward(snap, 2, sets.u_out[2]) == pytest.approx(0.0, abs=1e-12)


def test_bs_reward_single_user_equals_rate(rng):
    scn = Scenario.tiny(n_tu=1, k_in=1, k_out=1)
    snap, chan, assoc = _snapshot(rng, scn, varrho=np.array([0]))
    sets = select_interferer_sets(snap, scn)
    assert bs_reward(snap, 0, sets.u_out[0]) == pytest.approx(float(snap.rate[0]))


def test_bs_reward_matches_oracle(rng):
    scn = Scenario.tiny()
    for _ in range(10):
        snap, chan, assoc = _snapshot(rng, scn)
        sets = select_interferer_sets(snap, scn)
        for n in range(scn.n_bs):
            got = bs_reward(snap, n, sets.u_out[n])
            ref = oracles.bs_reward(snap.varrho, snap.rate, snap.p_r,
                                    snap.beta_mat, snap.beta, snap.sigma2, n,
                                    sets.u_out[n])
            assert got == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_bs_cost_values(rng):
    scn = Scenario.tiny()
    snap, chan, assoc = _snapshot(rng, scn)
    i_max = scn.i_max_w
    snap.rho[:] = i_max
    np.testing.assert_allclose(bs_cost(snap, i_max), 0.0, atol=1e-12)
    snap.rho[:] = 0.0
    np.testing.assert_allclose(bs_cost(snap, i_max), -1.0)
    snap.rho[:] = 2 * i_max
    np.testing.assert_allclose(bs_cost(snap, i_max), 1.0)
    with pytest.raises(ValueError):
        bs_cost(snap, 0.0)


def test_penalty_reward_values():
    assert penalty_reward(2.0, np.array([-0.5, -1.0]), 3.0) == 2.0
    assert penalty_reward(2.0, np.array([0.5, -1.0]), 0.0) == 2.0
    assert penalty_reward(2.0, np.array([0.5, -1.0]), 2.0) == pytest.approx(1.0)


def test_tu_reward_handover_discount(rng):
    scn = Scenario.tiny()
    prev = np.full(scn.n_tu, 2, dtype=int)
    snap, chan, assoc = _snapshot(rng, scn, varrho=np.zeros(scn.n_tu, dtype=int),
                                  prev_varrho=prev)
    assert snap.handover.all()
    got = tu_reward(snap, chan.h, 0, np.array([], dtype=int), zeta_r=0.4)
    assert got == pytest.approx(0.4 * float(snap.rate[0]))
    # no handover case
    snap2, chan2, _ = _snapshot(rng, scn, varrho=np.zeros(scn.n_tu, dtype=int),
                                prev_varrho=np.zeros(scn.n_tu, dtype=int))
    got2 = tu_reward(snap2, chan2.h, 0, np.array([], dtype=int), zeta_r=0.4)
    assert got2 == pytest.approx(float(snap2.rate[0]))


def test_tu_reward_matches_oracle(rng):
    scn = Scenario.tiny()
    for _ in range(10):
        prev = rng.integers(scn.n_bs, size=scn.n_tu)
        snap, chan, assoc = _snapshot(rng, scn, prev_varrho=prev)
        sets = select_interferer_sets(snap, scn)
        for k in range(scn.n_tu):
            u_out = sets.u_out[int(snap.varrho[k])]
            got = tu_reward(snap, chan.h, k, u_out, scn.zeta_r)
            ref = oracles.tu_reward(snap.varrho, snap.p, snap.w_bar, chan.h,
                                    snap.rate, snap.p_r, snap.beta, snap.sigma2,
                                    k, u_out, bool(snap.handover[k]), scn.zeta_r)
            assert got == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_action_dimension_formula():
    for scn in (Scenario.tiny(), Scenario()):
        assert bs_action_dim(scn) == 2 * scn.n_tu + scn.n_au + 2
        schema = action_schema(scn)
        assert sum(e["length"] for e in schema) == bs_action_dim(scn)


def test_discounted_cost_identity(rng):
    # sum_t gamma^t (rho_t / I - 1) <= 0  iff  (1-gamma) sum_t gamma^t rho_t <= I
    gamma, i_max = 0.5, 2.0
    for _ in range(50):
        rho = rng.uniform(0.0, 4.0, size=30)
        w = gamma ** np.arange(30)
        lhs = float((w * (rho / i_max - 1.0)).sum())
        disc_avg = (1 - gamma) * float((w * rho).sum()) / (1 - gamma ** 30)
        # identity holds exactly in the infinite-horizon limit; on a finite
        # trace compare against the matching truncated form
        rhs = float((w * rho).sum()) - i_max * (1 - gamma ** 30) / (1 - gamma)
        assert (lhs <= 0) == (rhs <= 0)
        assert lhs * i_max == pytest.approx(rhs, rel=1e-12)


def test_log_power_floor():
    assert log_power(0.0, -40.0) == -40.0
    assert log_power(1e-50, -40.0) == -40.0
    assert log_power(100.0, -40.0) == pytest.approx(2.0)
