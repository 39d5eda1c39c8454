"""Physical-layer quantities: SINR, rates, interference decompositions.

All powers are in watts. Division denominators are floored at 1e-30 W so
degenerate all-zero-power states stay finite.
"""

from dataclasses import dataclass

import numpy as np

DENOM_FLOOR = 1e-30


@dataclass
class AssociationMap:
    """Serving-BS index per terrestrial user."""

    varrho: np.ndarray  # (K,) int, values in [0, N)
    n_bs: int

    def __post_init__(self):
        self.varrho = np.asarray(self.varrho, dtype=int)
        if self.varrho.size and not (0 <= self.varrho.min() and self.varrho.max() < self.n_bs):
            raise ValueError("serving-BS index out of range")

    @property
    def chi(self) -> np.ndarray:
        """(N, K) 0/1 indicator matrix; each column sums to one."""
        k = self.varrho.size
        chi = np.zeros((self.n_bs, k))
        chi[self.varrho, np.arange(k)] = 1.0
        return chi

    def served(self, n: int) -> np.ndarray:
        return np.flatnonzero(self.varrho == n)


@dataclass
class BeamformerSet:
    """Per-user beams split into transmit power and unit-norm direction."""

    p: np.ndarray      # (K,) watts
    w_bar: np.ndarray  # (K, M) unit rows (zero rows allowed when p == 0)

    @classmethod
    def from_full(cls, w: np.ndarray) -> "BeamformerSet":
        p = np.einsum("km,km->k", w.conj(), w).real
        norms = np.sqrt(np.maximum(p, DENOM_FLOOR))
        w_bar = np.where(p[:, None] > 0, w / norms[:, None], 0.0)
        return cls(p, w_bar)

    @property
    def w(self) -> np.ndarray:
        return np.sqrt(self.p)[:, None] * self.w_bar

    def bs_power(self, assoc: AssociationMap) -> np.ndarray:
        """Transmit power per BS."""
        out = np.zeros(assoc.n_bs)
        np.add.at(out, assoc.varrho, self.p)
        return out


def compute_sinr(assoc: AssociationMap, bf: BeamformerSet, h: np.ndarray,
                 sigma2: float) -> np.ndarray:
    """Per-user SINR: own-beam power over all other beams plus noise.

    h has shape (N, K, M); beam i radiates from BS varrho[i] and is heard by
    user k through h[varrho[i], k].
    """
    if sigma2 <= 0:
        raise ValueError("noise power must be positive")
    k = assoc.varrho.size
    w = bf.w
    # cross[k, i] = h_{varrho_i,k}^H w_i
    cross = np.einsum("ikm,im->ik", h[assoc.varrho].conj(), w).T
    pow_cross = np.abs(cross) ** 2
    desired = pow_cross[np.arange(k), np.arange(k)]
    interference = pow_cross.sum(axis=1) - desired
    return desired / np.maximum(interference + sigma2, DENOM_FLOOR)


def compute_rate(gamma: np.ndarray) -> np.ndarray:
    return np.log2(1.0 + np.asarray(gamma))


def decompose_interference(assoc: AssociationMap, bf: BeamformerSet, h: np.ndarray,
                           sigma2: float):
    """Split each user's received power by origin BS.

    Returns (beta_mat, beta, p_r): beta_mat[j, k] is the interference user k
    receives from BS j's beams (excluding k's own beam), beta[k] the total
    interference plus noise, p_r[k] the desired-signal power. Reconstructs
    the SINR exactly as p_r / beta.
    """
    if sigma2 <= 0:
        raise ValueError("noise power must be positive")
    n = assoc.n_bs
    k = assoc.varrho.size
    w = bf.w
    # inner[j, k, i] = h_{j,k}^H w_i
    inner = np.einsum("jkm,im->jki", h.conj(), w)
    p_all = np.abs(inner) ** 2
    beta_mat = np.zeros((n, k))
    for j in range(n):
        own = assoc.served(j)
        if own.size:
            beta_mat[j] = p_all[j][:, own].sum(axis=1)
            # remove each user's own beam from its serving BS's column
            mine = own  # users served by j
            beta_mat[j, mine] -= p_all[j, mine, mine]
    beta = beta_mat.sum(axis=0) + sigma2
    p_r = p_all[assoc.varrho, np.arange(k), np.arange(k)]
    return beta_mat, beta, p_r


def au_interference(assoc: AssociationMap, bf: BeamformerSet, g: np.ndarray,
                    g_los: np.ndarray):
    """Interference at the aerial users.

    rho[l] is the true received interference through the full channels g;
    rho_inferred[n, l] is what BS n can infer locally from its own beams and
    the path-scaled LoS direction only.
    """
    k = assoc.varrho.size
    l = g.shape[1]
    rho = np.zeros(l)
    n = assoc.n_bs
    rho_inf = np.zeros((n, l))
    if k == 0 or l == 0:
        return rho, rho_inf
    w = bf.w
    for li in range(l):
        cross = np.einsum("km,km->k", g[assoc.varrho, li].conj(), w)
        rho[li] = float(np.sum(np.abs(cross) ** 2))
        cross_los = np.einsum("jm,km->jk", g_los[:, li].conj(), w)
        leak = np.abs(cross_los) ** 2  # (N, K)
        for j in range(n):
            rho_inf[j, li] = float(leak[j, assoc.served(j)].sum())
    return rho, rho_inf


def check_constraints(bf: BeamformerSet, assoc: AssociationMap, rho: np.ndarray,
                      i_max: float, p_max: float) -> dict:
    """Signed margins against the per-BS power and per-AU interference limits."""
    bs_power = bf.bs_power(assoc)
    power_margin = p_max - bs_power
    interference_margin = i_max - np.asarray(rho)
    return {
        "bs_power": bs_power,
        "power_ok": power_margin >= 0,
        "power_margin": power_margin,
        "interference_ok": interference_margin >= 0,
        "interference_margin": interference_margin,
    }


@dataclass
class PhySnapshot:
    """Everything measurable after one slot's transmission."""

    t: int
    varrho: np.ndarray        # (K,)
    chi: np.ndarray           # (N, K)
    p: np.ndarray             # (K,) transmit power
    w_bar: np.ndarray         # (K, M)
    gamma: np.ndarray         # (K,)
    rate: np.ndarray          # (K,) bits/s/Hz
    p_r: np.ndarray           # (K,) received desired power
    beta_mat: np.ndarray      # (N, K) interference split by origin BS
    beta: np.ndarray          # (K,) interference + noise
    rho: np.ndarray           # (L,) received interference at AUs
    rho_inferred: np.ndarray  # (N, L) locally inferred AU interference
    strengths: np.ndarray     # (N, K) channel strengths this slot
    handover: np.ndarray      # (K,) bool
    sigma2: float

    @property
    def sum_rate(self) -> float:
        return float(self.rate.sum())

    def served(self, n: int) -> np.ndarray:
        return np.flatnonzero(self.varrho == n)


def transmit(t: int, assoc: AssociationMap, prev_varrho, bf: BeamformerSet,
             h: np.ndarray, g: np.ndarray, g_los: np.ndarray,
             strengths: np.ndarray, sigma2: float) -> PhySnapshot:
    """Evaluate one slot's transmission into a snapshot."""
    beta_mat, beta, p_r = decompose_interference(assoc, bf, h, sigma2)
    gamma = p_r / np.maximum(beta, DENOM_FLOOR)
    rho, rho_inf = au_interference(assoc, bf, g, g_los)
    if prev_varrho is None:
        handover = np.zeros(assoc.varrho.size, dtype=bool)
    else:
        handover = assoc.varrho != np.asarray(prev_varrho)
    return PhySnapshot(t, assoc.varrho.copy(), assoc.chi, bf.p.copy(),
                       bf.w_bar.copy(), gamma, compute_rate(gamma), p_r,
                       beta_mat, beta, rho, rho_inf, strengths.copy(),
                       handover, sigma2)
