"""Static scenario configuration.

All defaults reproduce the reference deployment: 7 base stations with 4x4
rectangular arrays at 2 GHz serving 21 terrestrial users over a 10 MHz band,
sharing spectrum with 2 airplanes at 10 km altitude, 6000 slots of 20 ms.
An empty config file therefore reproduces that deployment; any key present
overrides one field.

Config format: flat sectioned ``key = value`` (INI). Section names are
organisational only; keys must match Scenario field names. The
``[trajectories]`` section is special: ``tu<k> = x,y; x,y; ...`` gives a
piecewise-linear waypoint route for terrestrial user k, and
``au<l> = x, y, heading_deg`` the straight-line route of aerial user l.
"""

import configparser
import dataclasses
import io
from dataclasses import dataclass, field


@dataclass
class Scenario:
    # network dimensions
    n_bs: int = 7
    n_tu: int = 21
    n_au: int = 2
    mh: int = 4
    mv: int = 4

    # radio
    carrier_hz: float = 2e9
    bandwidth_hz: float = 10e6
    sigma2_mw: float = 3.98e-11          # total noise power over the band
    p_max_w: float = 20.0
    i_max_mw: float = 1.6e-10            # interference temperature limit per AU
    alpha: float = 0.64                  # slot-to-slot fading correlation
    kappa_db: float = 15.0               # Rician factor of BS-AU links
    spacing_wl: float = 0.5              # antenna spacing in wavelengths
    bs_height_m: float = 30.0
    tu_height_m: float = 1.5
    au_height_m: float = 10000.0

    # run
    slots: int = 6000
    slot_s: float = 0.02
    zeta_r: float = 0.4                  # usable slot fraction on handover

    # observation encoding
    codebook_size: int = 128
    compression: int = 4                 # codebook entries kept per channel
    b_in: int = 4                        # interferer BSs tracked per TU
    b_in_pri: int = 5                    # interferer BSs tracked per AU
    k_in: int = 3                        # worst-interfered own TUs shared
    k_out: int = 3                       # interfered-TU multiplier (|set| = k_out*b_in)
    alpha_max: float = 10.0              # action scaling: TU leakage weights
    mu_max: float = 1e12                 # action scaling: AU leakage weights
    eta_max: float = 1.0                 # action scaling: noise regulariser
    eta_floor: float = 1e-9
    log_floor: float = -40.0             # floor for log10-scaled power features

    # BS agent (CUP / PPO)
    gamma: float = 0.5
    gae_lambda: float = 0.1
    lr_nu: float = 0.06
    lr_value: float = 3e-4
    lr_policy: float = 3e-4
    nu_init: float = 1.0
    nu_max: float = 10.0
    cost_limit: float = 0.0
    kl_eps: float = 0.02
    clip_eps: float = 0.02
    bs_buffer: int = 50
    bs_minibatch: int = 10
    bs_epochs: int = 20
    logstd_init: float = -1.0
    grad_clip: float = 10.0
    penalty_zeta: float = 1.0            # penalty weight of the PPO baseline

    # TU agent (D3QN)
    lr_q: float = 3e-4
    tu_target_sync: int = 50
    tu_replay: int = 2000
    tu_batch: int = 200
    eps_init: float = 0.3
    eps_min: float = 0.005
    eps_decay: float = 0.995

    # classical optimizers
    dcd_tol: float = 1e-6
    dcd_max_iter: int = 200
    wmmse_tol: float = 1e-5
    wmmse_max_iter: int = 200
    ua_power_rounds: int = 8

    # geometry defaults (used when no explicit trajectories are given)
    isd_m: float = 500.0
    layout_seed: int = 0
    tu_speed_mps: float = 15.0
    au_speed_mps: float = 250.0

    # explicit routes, indexed by device number
    tu_waypoints: dict = field(default_factory=dict)   # k -> [(x, y), ...]
    au_routes: dict = field(default_factory=dict)      # l -> (x, y, heading_deg)

    # ------------------------------------------------------------------
    @property
    def m(self) -> int:
        return self.mh * self.mv

    @property
    def sigma2_w(self) -> float:
        return self.sigma2_mw * 1e-3

    @property
    def i_max_w(self) -> float:
        return self.i_max_mw * 1e-3

    @property
    def wavelength(self) -> float:
        return 299792458.0 / self.carrier_hz

    @property
    def kappa(self) -> float:
        return 10.0 ** (self.kappa_db / 10.0)

    # set sizes clamped to what the deployment can supply
    @property
    def eff_b_in(self) -> int:
        return min(self.b_in, self.n_bs)

    @property
    def eff_b_in_pri(self) -> int:
        return min(self.b_in_pri, self.n_bs)

    @property
    def eff_k_in(self) -> int:
        return min(self.k_in, self.n_tu)

    @property
    def eff_u_out(self) -> int:
        return min(self.k_out * self.eff_b_in, self.n_tu)

    def validate(self) -> None:
        if min(self.n_bs, self.n_tu, self.mh, self.mv) < 1 or self.n_au < 0:
            raise ValueError("device and antenna counts must be positive")
        if self.sigma2_mw <= 0:
            raise ValueError("noise power must be positive")
        if self.p_max_w <= 0 or self.i_max_mw <= 0:
            raise ValueError("power and interference limits must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("fading correlation must lie in [0, 1]")
        if self.compression > self.codebook_size:
            raise ValueError("compression exceeds codebook size")

    # ------------------------------------------------------------------
    @classmethod
    def tiny(cls, **overrides) -> "Scenario":
        """Desk-scale deployment: 3 BSs (2x2 arrays), 6 TUs, 1 AU, 3000 slots.

        Learning knobs are recalibrated for the short run: stronger aerial
        leakage-weight scaling (4 antennas leave the aerial direction cheap
        to suppress but the raw price scale is set by the user/aerial gain
        ratio), a tighter interference limit so protecting the aerial user
        genuinely costs rate, and faster policy / multiplier steps so 60
        on-policy updates are enough to converge.
        """
        base = dict(
            n_bs=3, n_tu=6, n_au=1, mh=2, mv=2, slots=3000,
            isd_m=400.0, tu_speed_mps=20.0,
            i_max_mw=8e-11, mu_max=1e13,
            lr_policy=1e-3, lr_value=1e-3, lr_nu=0.1,
            clip_eps=0.2, logstd_init=-1.5, grad_clip=100.0,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_config(cls, path: str) -> "Scenario":
        parser = configparser.ConfigParser()
        with open(path) as fh:
            parser.read_file(fh)
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        tu_waypoints, au_routes = {}, {}
        for section in parser.sections():
            for key, raw in parser.items(section):
                if section == "trajectories":
                    if key.startswith("tu"):
                        pts = [tuple(float(v) for v in p.split(","))
                               for p in raw.split(";") if p.strip()]
                        tu_waypoints[int(key[2:])] = pts
                    elif key.startswith("au"):
                        x, y, hdg = (float(v) for v in raw.split(","))
                        au_routes[int(key[2:])] = (x, y, hdg)
                    else:
                        raise ValueError(f"unknown trajectory key {key!r}")
                    continue
                if key not in fields:
                    raise ValueError(f"unknown config key {key!r} in [{section}]")
                typ = fields[key].type
                if typ in (int, "int"):
                    kwargs[key] = int(raw)
                elif typ in (float, "float"):
                    kwargs[key] = float(raw)
                else:
                    raise ValueError(f"key {key!r} cannot be set from config")
        if tu_waypoints:
            kwargs["tu_waypoints"] = tu_waypoints
        if au_routes:
            kwargs["au_routes"] = au_routes
        scn = cls(**kwargs)
        scn.validate()
        return scn

    def to_ini(self) -> str:
        """Render the resolved configuration as config-file text."""
        out = io.StringIO()
        out.write("[scenario]\n")
        for f in dataclasses.fields(self):
            if f.name in ("tu_waypoints", "au_routes"):
                continue
            out.write(f"{f.name} = {getattr(self, f.name)!r}\n")
        if self.tu_waypoints or self.au_routes:
            out.write("\n[trajectories]\n")
            for k, pts in sorted(self.tu_waypoints.items()):
                out.write(f"tu{k} = " + "; ".join(f"{x!r},{y!r}" for x, y in pts) + "\n")
            for l, (x, y, h) in sorted(self.au_routes.items()):
                out.write(f"au{l} = {x!r},{y!r},{h!r}\n")
        return out.getvalue()
