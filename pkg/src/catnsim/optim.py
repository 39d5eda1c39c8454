"""Classical two-stage baseline: price-based user association and
WMMSE-based coordinated beamforming under per-BS power and per-AU
interference temperature constraints.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .phy import AssociationMap, BeamformerSet, compute_sinr

log = logging.getLogger(__name__)


# ----------------------------------------------------------------------
# user association
def sc_associate(strengths: np.ndarray) -> AssociationMap:
    """Associate every user with its strongest channel; ties go to the
    lowest BS index. strengths has shape (N, K)."""
    if np.any(strengths < 0):
        raise ValueError("channel strengths must be non-negative")
    return AssociationMap(np.argmax(strengths, axis=0), strengths.shape[0])


@dataclass
class DcdState:
    mu_bar: np.ndarray
    nu_bar: float
    utilities: np.ndarray        # (N, K)
    dual_objective: float
    iterations: int
    converged: bool


def _dcd_utilities(q: np.ndarray, strengths: np.ndarray, sigma2: float,
                   m: int) -> np.ndarray:
    n_bs, k = strengths.shape
    received = strengths * q[:, None]                   # (N, K)
    total = received.sum(axis=0)
    sinr = received / np.maximum(total - received + sigma2, 1e-300)
    rate = np.log2(1.0 + sinr)
    bad = np.argwhere(rate <= 0.0)
    if bad.size:
        j, i = bad[0]
        raise ValueError(
            f"utility undefined: SINR is zero on link BS {j} -> TU {i}")
    return np.log(m * rate)


def _price_sup(b: np.ndarray, nu: float, hi: float, tol: float = 1e-8) -> float:
    """Largest price x in [0, hi] with exp(x - nu - 1) <= #{k: b_k >= x}."""

    def excess(x):
        return math.exp(x - nu - 1.0) - int(np.sum(b >= x))

    if excess(0.0) > 0:
        return 0.0
    if excess(hi) <= 0:
        return hi
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if excess(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return lo


def _assign_with_ties(scores: np.ndarray) -> np.ndarray:
    """Row argmax of scores (N, K) over n, breaking ties toward the BS with
    the smaller load so symmetric instances balance, then the lower index."""
    n_bs, k = scores.shape
    load = np.zeros(n_bs, dtype=int)
    varrho = np.zeros(k, dtype=int)
    for i in range(k):
        col = scores[:, i]
        best = col.max()
        cands = np.flatnonzero(col >= best - 1e-12 * (1.0 + abs(best)))
        pick = cands[np.argmin(load[cands])]
        varrho[i] = pick
        load[pick] += 1
    return varrho


def dcd_solve(q: np.ndarray, strengths: np.ndarray, sigma2: float, m: int = 1,
              tol: float = 1e-6, max_iter: int = 200):
    """Dual coordinate descent on BS prices; returns (association, state).

    Each user picks the BS maximising utility minus price; prices rise at
    overloaded BSs until the dual objective stalls.
    """
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0):
        raise ValueError("BS powers must be positive")
    u = _dcd_utilities(q, strengths, sigma2, m)
    n_bs, k = u.shape
    mu = np.zeros(n_bs)
    nu = math.log(np.exp(mu - 1.0).sum() / k)
    hi_base = float(u.max())
    g_prev = None
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        for n in range(n_bs):
            others = np.delete(u - mu[:, None], n, axis=0)
            best_others = others.max(axis=0) if n_bs > 1 else np.full(k, -np.inf)
            b = u[n] - best_others
            mu[n] = _price_sup(b, nu, hi_base + abs(nu) + 10.0)
        nu = math.log(np.exp(mu - 1.0).sum() / k)
        g = float((u - mu[:, None]).max(axis=0).sum()
                  + np.exp(mu - nu - 1.0).sum() + nu * k)
        if g_prev is not None and abs(g - g_prev) < tol * max(1.0, abs(g_prev)):
            converged = True
            g_prev = g
            break
        g_prev = g
    varrho = _assign_with_ties(u - mu[:, None])
    state = DcdState(mu.copy(), nu, u, g_prev, it, converged)
    return AssociationMap(varrho, n_bs), state


def dcd_associate(q: np.ndarray, strengths: np.ndarray, sigma2: float,
                  m: int = 1, tol: float = 1e-6,
                  max_iter: int = 200) -> AssociationMap:
    assoc, _ = dcd_solve(q, strengths, sigma2, m, tol, max_iter)
    return assoc


def _total_utility(varrho: np.ndarray, q: np.ndarray, strengths: np.ndarray,
                   sigma2: float, m: int) -> float:
    u = _dcd_utilities(q, strengths, sigma2, m)
    return float(u[varrho, np.arange(varrho.size)].sum())


def _power_pass(varrho, q, strengths, sigma2, p_max, m, delta=1e-4):
    """One damped-Newton coordinate pass on log-powers, projected into
    (0, p_max]. Accepts a coordinate step only if the utility improves."""
    x = np.log(q.copy())
    x_hi = math.log(p_max)
    x_lo = x_hi - 20.0

    def util(xv):
        return _total_utility(varrho, np.exp(xv), strengths, sigma2, m)

    u0 = util(x)
    for n in range(q.size):
        xp = x.copy(); xp[n] += delta
        xm = x.copy(); xm[n] -= delta
        up, um = util(xp), util(xm)
        grad = (up - um) / (2.0 * delta)
        curv = (up - 2.0 * u0 + um) / (delta * delta)
        if not (np.isfinite(grad) and np.isfinite(curv)):
            raise FloatingPointError("non-finite derivative in power update")
        if curv < -1e-12:
            step = -grad / curv
        else:
            step = math.copysign(0.5, grad) if grad != 0 else 0.0
        step = float(np.clip(step, -1.0, 1.0))
        damp = 1.0
        for _ in range(6):
            cand = x.copy()
            cand[n] = float(np.clip(x[n] + damp * step, x_lo, x_hi))
            u_cand = util(cand)
            if u_cand >= u0:
                x, u0 = cand, u_cand
                break
            damp *= 0.5
    return np.exp(x)


def stage1_ua_power(strengths: np.ndarray, sigma2: float, p_max: float,
                    m: int = 1, rounds: int = 8, fixed_power: bool = False,
                    tol: float = 1e-6, max_iter: int = 200):
    """Alternate price-based association and a per-BS power refinement.

    Returns (association, q) for the best total utility seen. With
    fixed_power the alternation is skipped and this reduces to a single
    full-power association pass.
    """
    n_bs = strengths.shape[0]
    q = np.full(n_bs, p_max)
    assoc, _ = dcd_solve(q, strengths, sigma2, m, tol, max_iter)
    best_u = _total_utility(assoc.varrho, q, strengths, sigma2, m)
    best = (assoc, q.copy())
    if fixed_power or n_bs == 1:
        return best
    for _ in range(rounds):
        try:
            q_new = _power_pass(assoc.varrho, q, strengths, sigma2, p_max, m)
        except FloatingPointError:
            log.warning("power refinement diverged; falling back to full power")
            q_new = np.full(n_bs, p_max)
        assoc_new, _ = dcd_solve(q_new, strengths, sigma2, m, tol, max_iter)
        u_new = _total_utility(assoc_new.varrho, q_new, strengths, sigma2, m)
        if u_new > best_u:
            best_u, best = u_new, (assoc_new, q_new.copy())
        if np.array_equal(assoc_new.varrho, assoc.varrho):
            break
        assoc, q = assoc_new, q_new
    return best


# ----------------------------------------------------------------------
# beamforming
@dataclass
class WmmseState:
    u: np.ndarray
    v: np.ndarray
    alpha: np.ndarray
    mu: np.ndarray
    eta: np.ndarray
    objective_trace: list = field(default_factory=list)
    power_trace: list = field(default_factory=list)  # max per-BS power per iteration
    iterations: int = 0
    converged: bool = False


def _init_full_power(assoc: AssociationMap, h: np.ndarray, p_max: float) -> np.ndarray:
    """Matched-filter directions, full power split evenly per BS."""
    k, m = h.shape[1], h.shape[2]
    w = np.zeros((k, m), dtype=complex)
    for n in range(assoc.n_bs):
        own = assoc.served(n)
        if own.size == 0:
            continue
        p_each = p_max / own.size
        for i in own:
            hv = h[n, i]
            nrm = np.linalg.norm(hv)
            w[i] = math.sqrt(p_each) * (hv / nrm if nrm > 0 else 0.0)
    return w


def scale_into_power(w: np.ndarray, assoc: AssociationMap, p_max: float) -> np.ndarray:
    """Scale each BS's beams down (never up) so its power fits p_max."""
    w = w.copy()
    for n in range(assoc.n_bs):
        own = assoc.served(n)
        if own.size == 0:
            continue
        pw = float(np.sum(np.abs(w[own]) ** 2))
        if pw > p_max:
            w[own] *= math.sqrt(p_max / pw)
    return w


def _solve_bs_beams(evals, evecs, b, p_max, eta_floor, tol_frac=1e-8):
    """Beams w = (A + eta I)^{-1} b with the smallest eta >= eta_floor that
    keeps the BS power at min(unconstrained, p_max); returns (w, eta)."""
    proj = evecs.conj().T @ b.T            # (M, K_n)
    pow_proj = np.abs(proj) ** 2

    def power(eta):
        return float(np.sum(pow_proj / (evals + eta)[:, None] ** 2))

    def beams(eta):
        return (evecs @ (proj / (evals + eta)[:, None])).T

    if power(eta_floor) <= p_max:
        return beams(eta_floor), eta_floor
    hi = max(2.0 * eta_floor, math.sqrt(float(pow_proj.sum()) / p_max))
    while power(hi) > p_max:
        hi *= 2.0
    lo = eta_floor
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if power(mid) > p_max:
            lo = mid
        else:
            hi = mid
        if abs(power(hi) - p_max) <= tol_frac * p_max:
            break
    return beams(hi), hi


def wmmse_cbf(assoc: AssociationMap, h: np.ndarray, g: np.ndarray, p_max: float,
              i_max: float, sigma2: float, init_w: np.ndarray | None = None,
              tol: float = 1e-5, max_iter: int = 200, eta_floor: float = 1e-12):
    """Weighted-MMSE coordinated beamforming with interference duals.

    Block updates of the MMSE quantities and the beams (per-BS power met by
    bisection on the noise regulariser) interleaved with projected-subgradient
    updates of the per-AU interference prices. Returns (BeamformerSet, state).
    """
    n_bs, k, m = h.shape
    l = g.shape[1]
    if init_w is None:
        w = _init_full_power(assoc, h, p_max)
    else:
        w = scale_into_power(np.asarray(init_w, dtype=complex), assoc, p_max)
    mu = np.zeros(l)
    eta = np.full(n_bs, eta_floor)
    use_duals = l > 0 and np.isfinite(i_max)
    s0 = 1.0 / i_max if use_duals else 0.0

    h_serv = h[assoc.varrho, np.arange(k)]          # (K, M) serving channels

    def rates_and_power(wc):
        cross = np.einsum("ikm,im->ik", h[assoc.varrho].conj(), wc).T
        pw = np.abs(cross) ** 2
        desired = pw[np.arange(k), np.arange(k)]
        total = pw.sum(axis=1) + sigma2
        sinr = desired / np.maximum(total - desired, 1e-300)
        return sinr, cross, total

    def au_rho(wc):
        if l == 0:
            return np.zeros(0)
        lk = np.abs(np.einsum("klm,km->kl", g[assoc.varrho].conj(), wc)) ** 2
        return lk.sum(axis=0)

    state = WmmseState(np.zeros(k), np.zeros(k, dtype=complex), np.zeros(k),
                       mu, eta)
    obj_prev = None
    frozen = False
    feas_streak = 0
    for it in range(1, max_iter + 1):
        if use_duals:
            # Dual ascent on the interference prices. An additive subgradient
            # step activates a price; afterwards the price moves
            # multiplicatively by the violation ratio with a diminishing
            # exponent, because the required price scale (set by the
            # channel-gain ratio between user and aerial links) can sit many
            # orders of magnitude above the additive step size. Once the
            # limits have held for a few iterations the prices freeze so the
            # remaining block updates converge monotonically.
            rho = au_rho(w)
            viol = rho / i_max
            if frozen and viol.max(initial=0.0) > 1.001:
                frozen = False
                feas_streak = 0
            if not frozen:
                boot = (mu == 0.0) & (viol > 1.0)
                mu[boot] = (s0 / math.sqrt(it)) * (rho[boot] - i_max)
                grow = (mu > 0.0) & ~boot & ((viol > 1.001) | (viol < 0.95))
                mu[grow] *= np.clip(viol[grow], 0.1, 10.0) ** (1.0 / math.sqrt(it))
                in_band = bool(np.all(viol <= 1.001)
                               and np.all((viol >= 0.95) | (mu == 0.0)))
                feas_streak = feas_streak + 1 if in_band else 0
                frozen = feas_streak >= 5
        sinr, cross, total = rates_and_power(w)
        u = sinr
        v = np.sqrt(1.0 + u) * cross[np.arange(k), np.arange(k)] / total
        alpha = np.abs(v) ** 2
        scaled = np.sqrt(1.0 + u) * v                # weight on each serving channel
        for n in range(n_bs):
            own = assoc.served(n)
            if own.size == 0:
                continue
            a_mat = np.einsum("i,im,in->mn", alpha, h[n], h[n].conj())
            if l:
                a_mat = a_mat + np.einsum("l,lm,ln->mn", mu, g[n], g[n].conj())
            evals, evecs = np.linalg.eigh(a_mat)
            evals = np.maximum(evals, 0.0)
            b = scaled[own, None] * h_serv[own]
            w[own], eta[n] = _solve_bs_beams(evals, evecs, b, p_max, eta_floor)
        sinr_now, _, _ = rates_and_power(w)
        obj = float(np.log2(1.0 + sinr_now).sum())
        state.objective_trace.append(obj)
        per_bs = np.zeros(n_bs)
        np.add.at(per_bs, assoc.varrho, np.einsum("km,km->k", w.conj(), w).real)
        state.power_trace.append(float(per_bs.max(initial=0.0)))
        stalled = (obj_prev is not None
                   and abs(obj - obj_prev) < tol * max(1.0, abs(obj_prev)))
        # do not declare convergence while an interference dual is still
        # chasing a violated limit
        feasible = (not use_duals
                    or float(au_rho(w).max(initial=0.0)) <= 1.001 * i_max)
        if stalled and feasible:
            state.converged = True
            obj_prev = obj
            break
        obj_prev = obj
    else:
        log.debug("beamforming did not converge within %d iterations", max_iter)
    state.iterations = len(state.objective_trace)
    state.u, state.v, state.alpha = u, v, alpha
    state.mu, state.eta = mu, eta
    return BeamformerSet.from_full(w), state
