"""Mappings between simulator state and agent interfaces.

Observations mix current local information (own channels, association,
aerial-user geometry) with quantities exchanged by the other stations, which
are always one slot old. Power-like features enter in log10 scale with a
configurable floor because raw watts span many orders of magnitude; complex
entries are flattened to (re, im); indices are normalised by their range so
zero padding stays distinguishable.
"""

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelState
from .phy import AssociationMap, PhySnapshot
from .scenario import Scenario


# ----------------------------------------------------------------------
# codebook compression
@dataclass(frozen=True)
class Codebook:
    f: np.ndarray  # (M, C), unit-norm columns

    @classmethod
    def build(cls, m: int, size: int) -> "Codebook":
        c = np.arange(size)
        rows = np.arange(m)[:, None]
        return cls(np.exp(2j * np.pi * rows * c / size) / math.sqrt(m))

    @property
    def size(self) -> int:
        return self.f.shape[1]


def compress_channel(h: np.ndarray, cb: Codebook, nc: int):
    """Project onto the codebook and keep the top-nc coefficients by
    magnitude (ties to the lower index). Returns (indices, coefficients)
    sorted by descending magnitude."""
    d = cb.f.conj().T @ h
    order = np.argsort(-np.abs(d), kind="stable")[:nc]
    return order.astype(int), d[order]


# ----------------------------------------------------------------------
# interferer / interfered set selection
@dataclass
class InterfererSets:
    b_in: np.ndarray        # (K, B_in) interferer BSs per TU
    u_in: list              # per BS, own worst-interfered TUs (len <= K_in)
    b_in_pri: np.ndarray    # (L, B_in_pri) interferer BSs per AU
    u_out: np.ndarray       # (N, U_out) TUs each BS interferes most


def _top(vals: np.ndarray, count: int) -> np.ndarray:
    return np.argsort(-vals, kind="stable")[:count]


def select_interferer_sets(snap: PhySnapshot, scn: Scenario) -> InterfererSets:
    """Threshold sets realised as fixed-size top-k selections.

    Ranking keys are the interference decompositions of the given snapshot;
    when a ranking column is all zero (nothing was transmitted) the channel
    strengths of the same slot are used instead.
    """
    n, k = snap.beta_mat.shape
    b_in = np.zeros((k, scn.eff_b_in), dtype=int)
    for i in range(k):
        vals = snap.beta_mat[:, i]
        if vals.sum() == 0.0:
            vals = snap.strengths[:, i]
        b_in[i] = _top(vals, scn.eff_b_in)
    u_in = []
    for j in range(n):
        own = snap.served(j)
        u_in.append(own[_top(snap.beta[own], min(scn.eff_k_in, own.size))])
    b_in_pri = np.zeros((snap.rho.size, scn.eff_b_in_pri), dtype=int)
    for l in range(snap.rho.size):
        b_in_pri[l] = _top(snap.rho_inferred[:, l], scn.eff_b_in_pri)
    u_out = np.zeros((n, scn.eff_u_out), dtype=int)
    for j in range(n):
        vals = snap.beta_mat[j]
        if vals.sum() == 0.0:
            vals = snap.strengths[j]
        u_out[j] = _top(vals, scn.eff_u_out)
    return InterfererSets(b_in, u_in, b_in_pri, u_out)


# ----------------------------------------------------------------------
# feature helpers
def log_power(x, floor: float) -> np.ndarray:
    """log10 of a non-negative power-like quantity, floored."""
    x = np.maximum(np.asarray(x, dtype=float), 10.0 ** floor)
    return np.maximum(np.log10(x), floor)


class _Rec:
    """Appends named feature blocks; doubles as the schema generator."""

    def __init__(self):
        self.names, self.chunks = [], []

    def add(self, name: str, values):
        arr = np.atleast_1d(np.asarray(values, dtype=float)).ravel()
        self.names.append((name, arr.size))
        self.chunks.append(arr)

    def vector(self) -> np.ndarray:
        return np.concatenate(self.chunks) if self.chunks else np.zeros(0)

    def schema(self) -> list:
        out, off = [], 0
        for name, size in self.names:
            out.append({"name": name, "offset": off, "length": size})
            off += size
        return out


def _masked_compress(h: np.ndarray, chi: np.ndarray, cb: Codebook, nc: int):
    """Compressed channels for every link, zeroed where chi is 0.

    Returns (idx, coef) of shapes (N, K, nc); masked entries use index -1
    and zero coefficients.
    """
    n, k, _ = h.shape
    idx = np.full((n, k, nc), -1, dtype=int)
    coef = np.zeros((n, k, nc), dtype=complex)
    for j in range(n):
        for i in range(k):
            if chi[j, i]:
                idx[j, i], coef[j, i] = compress_channel(h[j, i], cb, nc)
    return idx, coef


def _hc_features(idx_row, coef_row, csize: int) -> np.ndarray:
    """(index, re, im) triples for one link's compressed channel."""
    out = np.zeros(3 * idx_row.size)
    present = idx_row >= 0
    out[0::3] = np.where(present, (idx_row + 1) / csize, 0.0)
    out[1::3] = np.where(present, coef_row.real, 0.0)
    out[2::3] = np.where(present, coef_row.imag, 0.0)
    return out


# ----------------------------------------------------------------------
# BS observation
class ObsContext:
    """One slot's inputs to the BS observation builders.

    Current-slot entries are local information only; everything exchanged
    between stations comes from the previous slot's snapshot (prev_snap /
    prev_chan), never the current one.
    """

    def __init__(self, scn: Scenario, cb: Codebook, cur_chan: ChannelState,
                 cur_assoc: AssociationMap, prev_snap: PhySnapshot | None,
                 prev_chan: ChannelState | None, prev_hc=None):
        self.scn, self.cb = scn, cb
        self.cur_chan, self.cur_assoc = cur_chan, cur_assoc
        self.prev_snap, self.prev_chan = prev_snap, prev_chan
        self.cur_hc = _masked_compress(cur_chan.h, cur_assoc.chi, cb, scn.compression)
        if prev_snap is None:
            self.prev_hc = None
            self.sets = None
        else:
            self.prev_hc = prev_hc if prev_hc is not None else _masked_compress(
                prev_chan.h, prev_snap.chi, cb, scn.compression)
            self.sets = select_interferer_sets(prev_snap, scn)


def build_bs_observation(ctx: ObsContext, n: int, collect: _Rec | None = None) -> np.ndarray:
    """Flat observation vector of BS n for the current slot."""
    scn = ctx.scn
    k, l, floor = scn.n_tu, scn.n_au, scn.log_floor
    csize = scn.codebook_size
    rec = collect if collect is not None else _Rec()
    prev = ctx.prev_snap

    # local terrestrial block
    chi_now = ctx.cur_assoc.chi[n]
    rec.add("loc.chi", chi_now)
    for i in range(k):
        rec.add(f"loc.hc{i}", _hc_features(ctx.cur_hc[0][n, i], ctx.cur_hc[1][n, i], csize))
    if prev is not None:
        mask = prev.chi[n]
        rec.add("loc.p", mask * log_power(prev.p, floor))
        rec.add("loc.rate", mask * log_power(prev.rate, floor))
        rec.add("loc.p_r", mask * log_power(prev.p_r, floor))
        rec.add("loc.beta", mask * log_power(prev.beta_mat[n], floor))
    else:
        for name in ("loc.p", "loc.rate", "loc.p_r", "loc.beta"):
            rec.add(name, np.zeros(k))

    # local aerial block: current statistical CSI, last slot's inferred leakage
    for li in range(l):
        rec.add(f"locpri.a{li}.stat", [
            ctx.cur_chan.au_theta[n, li], ctx.cur_chan.au_phi[n, li],
            log_power(ctx.cur_chan.au_lfsp_inv[n, li], floor),
            ctx.cur_chan.au_dist[n, li] / 1e3,
        ])
        rho_inf = 0.0 if prev is None else prev.rho_inferred[n, li]
        rec.add(f"locpri.a{li}.rho_inf", log_power(rho_inf, floor))

    # exchanged: interferer BSs of this BS's worst-interfered own users
    u_in = ctx.sets.u_in[n] if prev is not None else np.zeros(0, dtype=int)
    for si in range(scn.eff_k_in):
        ki = int(u_in[si]) if si < u_in.size else None
        rec.add(f"in.s{si}.tu", 0.0 if ki is None else (ki + 1) / k)
        for pos in range(scn.eff_b_in):
            j = int(ctx.sets.b_in[ki][pos]) if ki is not None else None
            rec.add(f"in.s{si}.b{pos}.id", 0.0 if j is None else (j + 1) / scn.n_bs)
            if j is None:
                rec.add(f"in.s{si}.b{pos}.hc", np.zeros(3 * scn.compression * k))
                rec.add(f"in.s{si}.b{pos}.p", np.zeros(k))
                rec.add(f"in.s{si}.b{pos}.beta", 0.0)
            else:
                hc = np.concatenate([
                    _hc_features(ctx.prev_hc[0][j, i], ctx.prev_hc[1][j, i], csize)
                    for i in range(k)])
                rec.add(f"in.s{si}.b{pos}.hc", hc)
                rec.add(f"in.s{si}.b{pos}.p", prev.chi[j] * log_power(prev.p, floor))
                rec.add(f"in.s{si}.b{pos}.beta", log_power(prev.beta_mat[j, ki], floor))

    # exchanged: interferer BSs of every aerial user
    for li in range(l):
        for pos in range(scn.eff_b_in_pri):
            j = int(ctx.sets.b_in_pri[li][pos]) if prev is not None else None
            rec.add(f"inpri.a{li}.b{pos}.id", 0.0 if j is None else (j + 1) / scn.n_bs)
            if j is None:
                rec.add(f"inpri.a{li}.b{pos}.stat", np.zeros(4))
                rec.add(f"inpri.a{li}.b{pos}.p", np.zeros(k))
                rec.add(f"inpri.a{li}.b{pos}.rho_inf", 0.0)
            else:
                rec.add(f"inpri.a{li}.b{pos}.stat", [
                    ctx.prev_chan.au_theta[j, li], ctx.prev_chan.au_phi[j, li],
                    log_power(ctx.prev_chan.au_lfsp_inv[j, li], floor),
                    ctx.prev_chan.au_dist[j, li] / 1e3,
                ])
                rec.add(f"inpri.a{li}.b{pos}.p", prev.chi[j] * log_power(prev.p, floor))
                rec.add(f"inpri.a{li}.b{pos}.rho_inf",
                        log_power(prev.rho_inferred[j, li], floor))

    # exchanged: users this BS interferes most
    for pos in range(scn.eff_u_out):
        if prev is None:
            rec.add(f"out.e{pos}", np.zeros(4))
        else:
            i = int(ctx.sets.u_out[n][pos])
            rec.add(f"out.e{pos}", [
                (i + 1) / k,
                float(log_power(prev.rate[i], floor)),
                float(log_power(prev.beta_mat[n, i], floor)),
                prev.beta_mat[n, i] / prev.beta[i],
            ])

    # exchanged: aerial interference summary
    for li in range(l):
        if prev is not None:
            rho_l = prev.rho[li]
            rec.add(f"outpri.a{li}", [
                (li + 1) / max(l, 1),
                rho_l / scn.i_max_w,
                float(log_power(prev.rho_inferred[n, li], floor)),
                prev.rho_inferred[n, li] / rho_l if rho_l > 0 else 0.0,
            ])
        else:
            rec.add(f"outpri.a{li}", np.zeros(4))

    vec = rec.vector()
    assert vec.size == bs_observation_dim(scn), \
        f"observation dimension {vec.size} != {bs_observation_dim(scn)}"
    return vec


def bs_observation_dim(scn: Scenario) -> int:
    k, l, nc = scn.n_tu, scn.n_au, scn.compression
    loc = k + 3 * nc * k + 4 * k
    loc_pri = 5 * l
    o_in = scn.eff_k_in * (1 + scn.eff_b_in * (3 * nc * k + k + 2))
    in_pri = l * scn.eff_b_in_pri * (k + 6)
    out = 4 * scn.eff_u_out
    out_pri = 4 * l
    return loc + loc_pri + o_in + in_pri + out + out_pri


# ----------------------------------------------------------------------
# TU observation
def build_tu_observation(scn: Scenario, cur_chan: ChannelState,
                         prev_snap: PhySnapshot | None, k: int,
                         collect: _Rec | None = None) -> np.ndarray:
    """Association-agent observation: last slot's loads, own previous
    association and link quality, and this slot's measured channel strengths.
    """
    rec = collect if collect is not None else _Rec()
    floor = scn.log_floor
    if prev_snap is not None:
        rec.add("loads", prev_snap.chi.sum(axis=1))
        rec.add("chi", prev_snap.chi[:, k])
        rec.add("strengths", log_power(cur_chan.strengths[:, k], floor))
        rec.add("p", log_power(prev_snap.p[k], floor))
        rec.add("rate", log_power(prev_snap.rate[k], floor))
        rec.add("p_r", log_power(prev_snap.p_r[k], floor))
        rec.add("beta", log_power(prev_snap.beta[k], floor))
    else:
        rec.add("loads", np.zeros(scn.n_bs))
        rec.add("chi", np.zeros(scn.n_bs))
        rec.add("strengths", log_power(cur_chan.strengths[:, k], floor))
        rec.add("p", 0.0)
        rec.add("rate", 0.0)
        rec.add("p_r", 0.0)
        rec.add("beta", 0.0)
    return rec.vector()


def tu_observation_dim(scn: Scenario) -> int:
    return 3 * scn.n_bs + 4


# ----------------------------------------------------------------------
# BS action decoding
def bs_action_dim(scn: Scenario) -> int:
    return 2 * scn.n_tu + scn.n_au + 2


def action_schema(scn: Scenario) -> list:
    k, l = scn.n_tu, scn.n_au
    return [
        {"name": "q_total", "offset": 0, "length": 1},
        {"name": "q", "offset": 1, "length": k},
        {"name": "alpha", "offset": 1 + k, "length": k},
        {"name": "eta", "offset": 1 + 2 * k, "length": 1},
        {"name": "mu", "offset": 2 + 2 * k, "length": l},
    ]


def decode_bs_action(raw: np.ndarray, n: int, assoc: AssociationMap,
                     h_n: np.ndarray, g_n: np.ndarray, p_max: float,
                     scn: Scenario):
    """Turn one BS's raw action in [0, 1]^(2K+L+2) into beams for its users.

    Power fractions are renormalised over the associated users; beam
    directions follow the regularised-inverse structure of the WMMSE solution
    with the leakage weights scaled from [0, 1] by the configured maxima.
    Per-BS transmit power satisfies the budget by construction.

    Returns (p, w_bar) as full (K,) / (K, M) arrays, zero outside this BS's
    users.
    """
    k, l = scn.n_tu, scn.n_au
    raw = np.clip(np.asarray(raw, dtype=float), 1e-9, 1.0)
    if raw.shape != (2 * k + l + 2,):
        raise ValueError("action vector has wrong dimension")
    q_total = raw[0]
    q = raw[1:1 + k]
    alpha = raw[1 + k:1 + 2 * k] * scn.alpha_max
    eta = raw[1 + 2 * k] * scn.eta_max + scn.eta_floor
    mu = raw[2 + 2 * k:] * scn.mu_max

    p = np.zeros(k)
    w_bar = np.zeros((k, h_n.shape[1]), dtype=complex)
    own = assoc.served(n)
    if own.size == 0:
        return p, w_bar
    qk = q[own]
    p[own] = p_max * q_total * qk / qk.sum()

    d_mat = np.einsum("i,im,in->mn", alpha, h_n, h_n.conj())
    if l:
        d_mat = d_mat + np.einsum("l,lm,ln->mn", mu, g_n, g_n.conj())
    d_mat = d_mat + eta * np.eye(h_n.shape[1])
    sol = np.linalg.solve(d_mat, h_n[own].T).T
    norms = np.linalg.norm(sol, axis=1)
    w_bar[own] = sol / np.maximum(norms, 1e-300)[:, None]
    return p, w_bar


# ----------------------------------------------------------------------
# rewards and costs
def bs_reward(snap: PhySnapshot, n: int, u_out: np.ndarray) -> float:
    """Sum rate of own users minus the rate loss inflicted on the users this
    BS interferes most (rate they would get without this BS's beams, minus
    what they actually got)."""
    own = snap.served(n)
    r = float(snap.rate[own].sum())
    for i in u_out:
        denom = max(snap.beta[i] - snap.beta_mat[n, i], snap.sigma2)
        r_without = math.log2(1.0 + snap.p_r[i] / denom)
        r -= r_without - snap.rate[i]
    return r


def bs_cost(snap: PhySnapshot, i_max: float) -> np.ndarray:
    """Shared cost vector: relative overshoot of each AU's interference."""
    if i_max <= 0:
        raise ValueError("interference limit must be positive")
    return snap.rho / i_max - 1.0


def penalty_reward(r: float, c: np.ndarray, zeta: float) -> float:
    return r - zeta * float(np.maximum(np.asarray(c), 0.0).sum())


def tu_reward(snap: PhySnapshot, h: np.ndarray, k: int, u_out: np.ndarray,
              zeta_r: float) -> float:
    """Handover-discounted own rate minus the rate loss this user's beam
    causes to the serving BS's most-interfered users."""
    n = int(snap.varrho[k])
    r_own = snap.rate[k] * (zeta_r if snap.handover[k] else 1.0)
    penalty = 0.0
    for i in u_out:
        if i == k:
            continue
        leak = snap.p[k] * abs(np.vdot(h[n, i], snap.w_bar[k])) ** 2
        denom = max(snap.beta[i] - leak, snap.sigma2)
        r_without = math.log2(1.0 + snap.p_r[i] / denom)
        penalty += r_without - snap.rate[i]
    return float(r_own - penalty)


# ----------------------------------------------------------------------
# schema generation
def observation_schema(scn: Scenario) -> dict:
    """Field name / offset / length tables for the logged vectors."""
    n, k, l, m = scn.n_bs, scn.n_tu, scn.n_au, scn.m
    zero_chan = ChannelState(
        t=0, h=np.zeros((n, k, m), dtype=complex), g=np.zeros((n, l, m), dtype=complex),
        g_los=np.zeros((n, l, m), dtype=complex), strengths=np.zeros((n, k)),
        au_theta=np.zeros((n, l)), au_phi=np.zeros((n, l)),
        au_lfsp_inv=np.zeros((n, l)), au_dist=np.zeros((n, l)),
        tu_pos=np.zeros((k, 3)), au_pos=np.zeros((l, 3)))
    assoc = AssociationMap(np.zeros(k, dtype=int), n)
    cb = Codebook.build(m, scn.codebook_size)
    ctx = ObsContext(scn, cb, zero_chan, assoc, None, None)
    bs_rec, tu_rec = _Rec(), _Rec()
    build_bs_observation(ctx, 0, collect=bs_rec)
    build_tu_observation(scn, zero_chan, None, 0, collect=tu_rec)
    return {
        "bs_observation": bs_rec.schema(),
        "tu_observation": tu_rec.schema(),
        "bs_action": action_schema(scn),
    }
