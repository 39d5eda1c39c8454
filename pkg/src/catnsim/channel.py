"""Device geometry and time-correlated channel generation.

Links from base stations to terrestrial users are Rayleigh with urban-macro
path loss (line-of-sight state drawn once per link and frozen for the run);
links to aerial users are Rician about the array steering vector with free
space path loss. Small-scale fading follows a first-order Gauss-Markov
recursion so consecutive slots stay correlated.

Everything here is a pure function of (scenario, master seed, slot index):
innovations for slot t come from a dedicated substream, so channel sequences
are identical across schemes run with the same seed.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .rng import substream
from .scenario import Scenario

log = logging.getLogger(__name__)

C_LIGHT = 299792458.0


# ----------------------------------------------------------------------
# array response
@dataclass(frozen=True)
class ArrayGeometry:
    mh: int
    mv: int
    spacing_m: float
    wavelength: float

    @property
    def m(self) -> int:
        return self.mh * self.mv

    def __post_init__(self):
        if self.mh < 1 or self.mv < 1 or self.spacing_m <= 0 or self.wavelength <= 0:
            raise ValueError("invalid array geometry")


def steering_vector(theta: float, phi: float, geom: ArrayGeometry) -> np.ndarray:
    """Unit-norm rectangular-array response for zenith angle theta / azimuth phi.

    Element order is vertical-fastest: entry i belongs to horizontal index
    i // mv and vertical index i % mv.
    """
    i = np.arange(geom.m)
    mh = i // geom.mv
    mv = i % geom.mv
    phase = (2.0 * np.pi / geom.wavelength) * geom.spacing_m * (
        mh * math.sin(theta) * math.sin(phi) + mv * math.cos(theta)
    )
    return np.exp(1j * phase) / math.sqrt(geom.m)


# ----------------------------------------------------------------------
# path loss (all losses returned as linear power ratios, >= 1 in practice)
def fsp_path_loss(d_m: float, fc_hz: float) -> float:
    """Free-space propagation loss."""
    if d_m <= 0:
        raise ValueError("distance must be positive")
    if fc_hz <= 0:
        raise ValueError("carrier frequency must be positive")
    loss_db = 20.0 * math.log10(4.0 * math.pi * d_m * fc_hz / C_LIGHT)
    return 10.0 ** (loss_db / 10.0)


UMA_D2D_MIN = 10.0
UMA_D2D_MAX = 5000.0


def uma_path_loss(d2d_m: float, h_bs: float, h_ut: float, fc_hz: float,
                  los_blocked: bool) -> float:
    """Urban-macro path loss, LoS or NLoS depending on the frozen link state.

    Distances outside the model's validity range are clamped (warned, not
    rejected) because user routes may pass arbitrarily close to a site.
    """
    if d2d_m <= 0:
        raise ValueError("ground distance must be positive")
    d2d = d2d_m
    if d2d < UMA_D2D_MIN or d2d > UMA_D2D_MAX:
        d2d = min(max(d2d, UMA_D2D_MIN), UMA_D2D_MAX)
        log.warning("ground distance %.2f m outside [%g, %g]; clamped to %.2f m",
                    d2d_m, UMA_D2D_MIN, UMA_D2D_MAX, d2d)
    fc_ghz = fc_hz / 1e9
    d3d = math.hypot(d2d, h_bs - h_ut)
    # breakpoint distance with 1 m effective environment height
    d_bp = 4.0 * (h_bs - 1.0) * (h_ut - 1.0) * fc_hz / C_LIGHT
    if d2d <= d_bp:
        pl_los = 28.0 + 22.0 * math.log10(d3d) + 20.0 * math.log10(fc_ghz)
    else:
        pl_los = (28.0 + 40.0 * math.log10(d3d) + 20.0 * math.log10(fc_ghz)
                  - 9.0 * math.log10(d_bp ** 2 + (h_bs - h_ut) ** 2))
    if los_blocked:
        pl_nlos = (13.54 + 39.08 * math.log10(d3d) + 20.0 * math.log10(fc_ghz)
                   - 0.6 * (h_ut - 1.5))
        pl_db = max(pl_los, pl_nlos)
    else:
        pl_db = pl_los
    return 10.0 ** (pl_db / 10.0)


def uma_los_probability(d2d_m: float) -> float:
    """Urban-macro line-of-sight probability for user heights up to 13 m."""
    if d2d_m <= 18.0:
        return 1.0
    return 18.0 / d2d_m + math.exp(-d2d_m / 63.0) * (1.0 - 18.0 / d2d_m)


# ----------------------------------------------------------------------
# small-scale fading
def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly-symmetric standard complex normal, unit variance per entry."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def evolve_nlos(prev: np.ndarray, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """One Gauss-Markov step; stationary distribution is CN(0, I)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("correlation coefficient must lie in [0, 1]")
    return alpha * prev + math.sqrt(1.0 - alpha * alpha) * complex_normal(rng, prev.shape)


# ----------------------------------------------------------------------
# trajectories
class CircularArc:
    """Constant-speed circular motion at fixed height."""

    def __init__(self, cx, cy, radius, omega, phase, z):
        self.cx, self.cy, self.radius = cx, cy, radius
        self.omega, self.phase, self.z = omega, phase, z

    def position(self, t_s: float) -> np.ndarray:
        a = self.phase + self.omega * t_s
        return np.array([self.cx + self.radius * math.cos(a),
                         self.cy + self.radius * math.sin(a), self.z])


class WaypointPath:
    """Piecewise-linear route traversed at constant speed, halting at the end."""

    def __init__(self, points, speed, z):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] != 2:
            raise ValueError("waypoints must be a list of (x, y) pairs")
        self.pts = pts
        self.z = z
        seg = np.diff(pts, axis=0)
        self.seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self.cum = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.speed = speed

    def position(self, t_s: float) -> np.ndarray:
        s = min(self.speed * t_s, self.cum[-1])
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        i = min(max(i, 0), len(self.pts) - 2) if len(self.pts) > 1 else 0
        if len(self.pts) == 1 or self.seg_len[i] == 0:
            xy = self.pts[min(i, len(self.pts) - 1)]
        else:
            frac = (s - self.cum[i]) / self.seg_len[i]
            xy = self.pts[i] + frac * (self.pts[i + 1] - self.pts[i])
        return np.array([xy[0], xy[1], self.z])


class LinearFlight:
    """Straight constant-velocity flight at fixed altitude."""

    def __init__(self, x0, y0, heading_rad, speed, z):
        self.x0, self.y0, self.z = x0, y0, z
        self.vx = speed * math.cos(heading_rad)
        self.vy = speed * math.sin(heading_rad)

    def position(self, t_s: float) -> np.ndarray:
        return np.array([self.x0 + self.vx * t_s, self.y0 + self.vy * t_s, self.z])


@dataclass
class Geometry:
    bs_pos: np.ndarray            # (N, 3)
    tu_paths: list
    au_paths: list
    array: ArrayGeometry


def build_geometry(scn: Scenario) -> Geometry:
    """Site layout plus per-device trajectories.

    Base stations sit on a centre-plus-ring layout. Users without explicit
    waypoints get a circular arc around a randomly offset centre near their
    home site (drawn from the layout seed, independent of the run seed).
    """
    n = scn.n_bs
    bs = np.zeros((n, 3))
    bs[:, 2] = scn.bs_height_m
    for i in range(1, n):
        ang = 2.0 * math.pi * (i - 1) / max(n - 1, 1)
        bs[i, 0] = scn.isd_m * math.cos(ang)
        bs[i, 1] = scn.isd_m * math.sin(ang)

    lay = substream(scn.layout_seed, "layout")
    tu_paths = []
    for k in range(scn.n_tu):
        if k in scn.tu_waypoints:
            tu_paths.append(WaypointPath(scn.tu_waypoints[k], scn.tu_speed_mps,
                                         scn.tu_height_m))
            continue
        home = bs[k % n]
        r_c = lay.uniform(0.1, 0.45) * scn.isd_m
        ang = lay.uniform(0.0, 2.0 * math.pi)
        radius = lay.uniform(40.0, 0.35 * scn.isd_m)
        omega = (scn.tu_speed_mps / radius) * (1 if lay.uniform() < 0.5 else -1)
        phase = lay.uniform(0.0, 2.0 * math.pi)
        tu_paths.append(CircularArc(home[0] + r_c * math.cos(ang),
                                    home[1] + r_c * math.sin(ang),
                                    radius, omega, phase, scn.tu_height_m))

    au_paths = []
    span = scn.slots * scn.slot_s
    for l in range(scn.n_au):
        if l in scn.au_routes:
            x, y, hdg = scn.au_routes[l]
            au_paths.append(LinearFlight(x, y, math.radians(hdg),
                                         scn.au_speed_mps, scn.au_height_m))
        else:
            # cross overhead at mid-run, laterally spread
            y = (l - (scn.n_au - 1) / 2.0) * 2000.0
            au_paths.append(LinearFlight(-scn.au_speed_mps * span / 2.0, y, 0.0,
                                         scn.au_speed_mps, scn.au_height_m))

    arr = ArrayGeometry(scn.mh, scn.mv, scn.spacing_wl * scn.wavelength,
                        scn.wavelength)
    return Geometry(bs, tu_paths, au_paths, arr)


# ----------------------------------------------------------------------
@dataclass
class ChannelState:
    """Per-slot channel realisation and the geometry behind it."""

    t: int
    h: np.ndarray            # (N, K, M) BS->TU channels
    g: np.ndarray            # (N, L, M) BS->AU channels
    g_los: np.ndarray        # (N, L, M) path-scaled LoS-only part of g
    strengths: np.ndarray    # (N, K) squared channel norms
    au_theta: np.ndarray     # (N, L) zenith angles
    au_phi: np.ndarray       # (N, L) azimuth angles
    au_lfsp_inv: np.ndarray  # (N, L) linear free-space path gain
    au_dist: np.ndarray      # (N, L) meters
    tu_pos: np.ndarray       # (K, 3)
    au_pos: np.ndarray       # (L, 3)


class ChannelModel:
    """Owns the fading state; advances it exactly once per slot in order."""

    def __init__(self, scn: Scenario, seed: int):
        self.scn = scn
        self.seed = seed
        self.geom = build_geometry(scn)
        n, k, l, m = scn.n_bs, scn.n_tu, scn.n_au, scn.m
        init = substream(seed, "chan", "init")
        self.h_nlos = complex_normal(init, (n, k, m))
        self.g_nlos = complex_normal(init, (n, l, m))
        # LoS/NLoS state per BS-TU link, drawn once from slot-0 geometry
        los_rng = substream(seed, "chan", "los")
        tu0 = np.stack([p.position(0.0) for p in self.geom.tu_paths]) \
            if k else np.zeros((0, 3))
        self.los_blocked = np.zeros((n, k), dtype=bool)
        for j in range(n):
            for i in range(k):
                d2d = math.hypot(tu0[i, 0] - self.geom.bs_pos[j, 0],
                                 tu0[i, 1] - self.geom.bs_pos[j, 1])
                self.los_blocked[j, i] = los_rng.uniform() >= uma_los_probability(d2d)
        self._warned_links = set()
        self._next_t = 0

    def advance(self, t: int) -> ChannelState:
        if t != self._next_t:
            raise RuntimeError(f"slots must advance in order (expected {self._next_t}, got {t})")
        self._next_t += 1
        scn, geom = self.scn, self.geom
        n, k, l = scn.n_bs, scn.n_tu, scn.n_au
        if t > 0:
            rng = substream(self.seed, "chan", t)
            self.h_nlos = evolve_nlos(self.h_nlos, scn.alpha, rng)
            self.g_nlos = evolve_nlos(self.g_nlos, scn.alpha, rng)

        t_s = t * scn.slot_s
        tu_pos = np.stack([p.position(t_s) for p in geom.tu_paths]) if k else np.zeros((0, 3))
        au_pos = np.stack([p.position(t_s) for p in geom.au_paths]) if l else np.zeros((0, 3))

        h = np.zeros_like(self.h_nlos)
        strengths = np.zeros((n, k))
        for j in range(n):
            for i in range(k):
                d2d = math.hypot(tu_pos[i, 0] - geom.bs_pos[j, 0],
                                 tu_pos[i, 1] - geom.bs_pos[j, 1])
                if not UMA_D2D_MIN <= d2d <= UMA_D2D_MAX:
                    # warn once per link, then clamp quietly
                    if (j, i) not in self._warned_links:
                        self._warned_links.add((j, i))
                        log.warning("BS %d - TU %d ground distance %.2f m leaves "
                                    "the path-loss validity range; clamping", j, i, d2d)
                    d2d = min(max(d2d, UMA_D2D_MIN), UMA_D2D_MAX)
                loss = uma_path_loss(d2d, scn.bs_height_m, scn.tu_height_m,
                                     scn.carrier_hz, bool(self.los_blocked[j, i]))
                h[j, i] = math.sqrt(1.0 / loss) * self.h_nlos[j, i]
                strengths[j, i] = np.vdot(h[j, i], h[j, i]).real

        g = np.zeros_like(self.g_nlos)
        g_los = np.zeros_like(self.g_nlos)
        au_theta = np.zeros((n, l))
        au_phi = np.zeros((n, l))
        au_lfsp_inv = np.zeros((n, l))
        au_dist = np.zeros((n, l))
        kap = scn.kappa
        for j in range(n):
            for i in range(l):
                delta = au_pos[i] - geom.bs_pos[j]
                d = float(np.linalg.norm(delta))
                theta = math.acos(min(max(delta[2] / d, -1.0), 1.0))
                phi = math.atan2(delta[1], delta[0])
                lfsp_inv = 1.0 / fsp_path_loss(d, scn.carrier_hz)
                a = steering_vector(theta, phi, geom.array)
                los = np.exp(-2j * math.pi * d / scn.wavelength) * a
                g_los[j, i] = math.sqrt(lfsp_inv) * los
                g[j, i] = math.sqrt(lfsp_inv) * (
                    math.sqrt(kap / (kap + 1.0)) * los
                    + math.sqrt(1.0 / (kap + 1.0)) * self.g_nlos[j, i])
                au_theta[j, i], au_phi[j, i] = theta, phi
                au_lfsp_inv[j, i], au_dist[j, i] = lfsp_inv, d

        return ChannelState(t, h, g, g_los, strengths, au_theta, au_phi,
                            au_lfsp_inv, au_dist, tu_pos, au_pos)
