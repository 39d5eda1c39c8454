"""Independent brute-force reference implementations used by the tests.

Everything here is written as plain per-term loops over the defining
formulas, deliberately sharing no code with the package under test.
"""

import math

import numpy as np


def rand_instance(rng, n, k, m, l, sigma2=None):
    """Random deployment: channels, association, powers, unit beams."""
    h = (rng.standard_normal((n, k, m)) + 1j * rng.standard_normal((n, k, m))) / np.sqrt(2)
    g = (rng.standard_normal((n, l, m)) + 1j * rng.standard_normal((n, l, m))) / np.sqrt(2)
    g_los = (rng.standard_normal((n, l, m)) + 1j * rng.standard_normal((n, l, m))) / np.sqrt(2)
    varrho = rng.integers(n, size=k)
    p = rng.uniform(0.1, 2.0, size=k)
    w_bar = rng.standard_normal((k, m)) + 1j * rng.standard_normal((k, m))
    w_bar /= np.linalg.norm(w_bar, axis=1, keepdims=True)
    if sigma2 is None:
        sigma2 = rng.uniform(0.01, 1.0)
    return varrho, p, w_bar, h, g, g_los, float(sigma2)


def sinr(varrho, p, w_bar, h, sigma2):
    k = len(varrho)
    out = np.zeros(k)
    for kk in range(k):
        wk = math.sqrt(p[kk]) * w_bar[kk]
        desired = abs(np.vdot(h[varrho[kk], kk], wk)) ** 2
        interf = 0.0
        for i in range(k):
            if i == kk:
                continue
            wi = math.sqrt(p[i]) * w_bar[i]
            interf += abs(np.vdot(h[varrho[i], kk], wi)) ** 2
        out[kk] = desired / (interf + sigma2)
    return out


def decompose(varrho, p, w_bar, h, sigma2):
    n = h.shape[0]
    k = len(varrho)
    beta_mat = np.zeros((n, k))
    for j in range(n):
        for kk in range(k):
            acc = 0.0
            for i in range(k):
                if varrho[i] == j and i != kk:
                    acc += p[i] * abs(np.vdot(h[j, kk], w_bar[i])) ** 2
            beta_mat[j, kk] = acc
    beta = beta_mat.sum(axis=0) + sigma2
    p_r = np.array([p[kk] * abs(np.vdot(h[varrho[kk], kk], w_bar[kk])) ** 2
                    for kk in range(k)])
    return beta_mat, beta, p_r


def au_rho(varrho, p, w_bar, g):
    l = g.shape[1]
    out = np.zeros(l)
    for ll in range(l):
        acc = 0.0
        for kk in range(len(varrho)):
            acc += p[kk] * abs(np.vdot(g[varrho[kk], ll], w_bar[kk])) ** 2
        out[ll] = acc
    return out


def rho_inferred(varrho, p, w_bar, g_los):
    n, l = g_los.shape[0], g_los.shape[1]
    out = np.zeros((n, l))
    for j in range(n):
        for ll in range(l):
            acc = 0.0
            for kk in range(len(varrho)):
                if varrho[kk] == j:
                    acc += p[kk] * abs(np.vdot(g_los[j, ll], w_bar[kk])) ** 2
            out[j, ll] = acc
    return out


def bs_reward(varrho, rate, p_r, beta_mat, beta, sigma2, n, u_out):
    r = 0.0
    for kk in range(len(varrho)):
        if varrho[kk] == n:
            r += rate[kk]
    for i in u_out:
        denom = max(beta[i] - beta_mat[n, i], sigma2)
        r -= math.log2(1.0 + p_r[i] / denom) - rate[i]
    return r


def tu_reward(varrho, p, w_bar, h, rate, p_r, beta, sigma2, k, u_out,
              handover, zeta_r):
    n = varrho[k]
    r = rate[k] * (zeta_r if handover else 1.0)
    for i in u_out:
        if i == k:
            continue
        leak = p[k] * abs(np.vdot(h[n, i], w_bar[k])) ** 2
        denom = max(beta[i] - leak, sigma2)
        r -= math.log2(1.0 + p_r[i] / denom) - rate[i]
    return r


def gae_direct(deltas, gamma, lam):
    deltas = np.asarray(deltas, dtype=float)
    b = deltas.shape[0]
    out = np.zeros_like(deltas)
    for i in range(b):
        acc = np.zeros(deltas.shape[1:])
        for j in range(i, b):
            acc = acc + (gamma * lam) ** (j - i) * deltas[j]
        out[i] = acc
    return out


def steering_element(theta, phi, mh_idx, mv_idx, spacing, wavelength, m):
    phase = (2.0 * math.pi / wavelength) * spacing * (
        (mh_idx - 1) * math.sin(theta) * math.sin(phi)
        + (mv_idx - 1) * math.cos(theta))
    return complex(math.cos(phase), math.sin(phase)) / math.sqrt(m)
