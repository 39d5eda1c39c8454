"""Neural agents and their update rules.

Base-station agents are Gaussian-policy actor-critics trained either with the
two-step constrained update (clipped improvement, then a KL projection
weighted by the cost multiplier nu) or with plain clipped policy optimization
on a penalty-shaped reward. Terrestrial-user agents are dueling double
Q-networks over the discrete set of base stations.

All randomness (weight init, exploration, minibatch order) is drawn from
numpy generators owned by each agent, so runs are bit-reproducible and agent
state round-trips exactly through the checkpoint container.
"""

import copy
import json
import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .scenario import Scenario

log = logging.getLogger(__name__)

ACTION_MIN = 1e-6  # sampled actions are clipped into (0, 1]


# ----------------------------------------------------------------------
# init and plain networks
def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diagonal(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_linear(layer: nn.Linear, rng: np.random.Generator, gain: float) -> None:
    w = _orthogonal(rng, layer.out_features, layer.in_features, gain)
    with torch.no_grad():
        layer.weight.copy_(torch.as_tensor(w, dtype=layer.weight.dtype))
        layer.bias.zero_()


class Mlp(nn.Module):
    """ReLU multilayer perceptron with orthogonal init, zero biases."""

    def __init__(self, sizes, rng, out_gain=1.0, dtype=torch.float32):
        super().__init__()
        layers = []
        for i in range(len(sizes) - 1):
            lin = nn.Linear(sizes[i], sizes[i + 1], dtype=dtype)
            gain = math.sqrt(2.0) if i < len(sizes) - 2 else out_gain
            init_linear(lin, rng, gain)
            layers.append(lin)
        self.layers = nn.ModuleList(layers)

    def forward(self, x):
        for lin in self.layers[:-1]:
            x = torch.relu(lin(x))
        return self.layers[-1](x)


class GaussianPolicy(nn.Module):
    """Diagonal Gaussian over [0, 1]^A: sigmoid-bounded mean network plus a
    learned state-independent log-std per dimension. Sampled actions are
    clipped into (0, 1]; log-densities stay finite for any in-range action."""

    def __init__(self, obs_dim, act_dim, hidden, rng, logstd_init=-1.0,
                 dtype=torch.float32):
        super().__init__()
        self.net = Mlp([obs_dim, *hidden, act_dim], rng, out_gain=0.01, dtype=dtype)
        self.log_std = nn.Parameter(torch.full((act_dim,), float(logstd_init),
                                               dtype=dtype))

    def dist_params(self, obs):
        mean = torch.sigmoid(self.net(obs))
        std = torch.exp(self.log_std).expand_as(mean)
        return mean, std

    def log_prob(self, obs, act):
        mean, std = self.dist_params(obs)
        z = (act - mean) / std
        return (-0.5 * z * z - torch.log(std)
                - 0.5 * math.log(2.0 * math.pi)).sum(dim=-1)

    def kl_to(self, obs, ref_mean, ref_std):
        """KL(current || reference) per observation."""
        mean, std = self.dist_params(obs)
        var, ref_var = std * std, ref_std * ref_std
        kl = (torch.log(ref_std / std)
              + (var + (mean - ref_mean) ** 2) / (2.0 * ref_var) - 0.5)
        return kl.sum(dim=-1)

    @torch.no_grad()
    def sample_np(self, obs_np: np.ndarray, rng: np.random.Generator,
                  deterministic=False) -> np.ndarray:
        obs = torch.as_tensor(obs_np, dtype=self.log_std.dtype).unsqueeze(0)
        mean, std = self.dist_params(obs)
        mean = mean.squeeze(0).numpy()
        if deterministic:
            return np.clip(mean, ACTION_MIN, 1.0)
        std = std.squeeze(0).numpy()
        a = mean + std * rng.standard_normal(mean.shape)
        return np.clip(a, ACTION_MIN, 1.0)


class DuelingQNet(nn.Module):
    """Q(o, a) = V(o) + A(o, a) - mean_a A(o, a)."""

    def __init__(self, obs_dim, n_actions, hidden, rng, dtype=torch.float32):
        super().__init__()
        self.trunk = Mlp([obs_dim, *hidden], rng, out_gain=math.sqrt(2.0), dtype=dtype)
        self.v_head = nn.Linear(hidden[-1], 1, dtype=dtype)
        self.a_head = nn.Linear(hidden[-1], n_actions, dtype=dtype)
        init_linear(self.v_head, rng, 1.0)
        init_linear(self.a_head, rng, 1.0)

    def forward(self, obs):
        z = torch.relu(self.trunk(obs))
        v = self.v_head(z)
        a = self.a_head(z)
        return v + a - a.mean(dim=-1, keepdim=True)


# ----------------------------------------------------------------------
# advantage estimation and losses
def gae(deltas: np.ndarray, gamma: float, lam: float) -> np.ndarray:
    """Backward recursion A_i = delta_i + gamma*lam*A_{i+1}, A_{B+1} = 0.

    Works on (B,) or (B, L) arrays (one recursion per column).
    """
    deltas = np.asarray(deltas, dtype=float)
    out = np.zeros_like(deltas)
    acc = np.zeros(deltas.shape[1:])
    for i in range(deltas.shape[0] - 1, -1, -1):
        acc = deltas[i] + gamma * lam * acc
        out[i] = acc
    return out


def value_loss(vnet: nn.Module, obs, target):
    """Mean squared error to the advantage-corrected value targets; vector
    targets (one per cost) contribute their squared-norm error."""
    pred = vnet(obs)
    if target.ndim == 1:
        return ((pred.squeeze(-1) - target) ** 2).mean()
    return ((pred - target) ** 2).sum(dim=-1).mean()


def cup_improve_loss(policy: GaussianPolicy, obs, act, adv, old_logp, clip_eps):
    """Negative clipped surrogate: maximise the reward advantage without
    moving far from the sampling policy."""
    ratio = torch.exp(policy.log_prob(obs, act) - old_logp)
    clipped = torch.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    return -torch.minimum(ratio * adv, clipped * adv).mean()


def cup_project_loss(policy: GaussianPolicy, obs, act, cost_adv, old_logp,
                     ref_mean, ref_std, nu, coeff):
    """KL distance to the pre-projection policy plus the nu-weighted cost
    advantage surrogate (ratios taken against the pre-improvement policy)."""
    kl = policy.kl_to(obs, ref_mean, ref_std)
    ratio = torch.exp(policy.log_prob(obs, act) - old_logp)
    weighted = (cost_adv * nu).sum(dim=-1)
    return (kl + coeff * ratio * weighted).mean()


def d3qn_loss(online: nn.Module, target: nn.Module, obs, act, rew, obs2, gamma):
    """Half mean squared error against the double-DQN target: the online net
    picks the next action, the target net evaluates it."""
    with torch.no_grad():
        next_online = online(obs2)
        next_act = next_online.argmax(dim=-1)
        next_q = target(obs2).gather(1, next_act.unsqueeze(1)).squeeze(1)
        y = rew + gamma * next_q
    q = online(obs).gather(1, act.unsqueeze(1)).squeeze(1)
    return 0.5 * ((q - y) ** 2).mean()


def update_nu(nu: np.ndarray, alpha_nu: float, jhat_c: np.ndarray, b: float,
              nu_max: float) -> np.ndarray:
    return np.clip(nu + alpha_nu * (np.asarray(jhat_c) - b), 0.0, nu_max)


def epsilon_greedy(qvals: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    if rng.uniform() < eps:
        return int(rng.integers(qvals.size))
    return int(np.argmax(qvals))


def decay_eps(eps: float, minimum: float = 0.005, factor: float = 0.995) -> float:
    return max(minimum, factor * eps)


# ----------------------------------------------------------------------
# buffers
class TrajectoryBuffer:
    """Ordered on-policy experience, cleared after each update."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.items = []

    def push(self, obs, act, rew, obs2, cost):
        if len(self.items) >= self.capacity:
            raise RuntimeError("trajectory buffer overfull; update was skipped")
        self.items.append((obs, act, rew, obs2, cost))

    def full(self) -> bool:
        return len(self.items) >= self.capacity

    def __len__(self):
        return len(self.items)

    def clear(self):
        self.items = []

    def arrays(self):
        obs, act, rew, obs2, cost = zip(*self.items)
        return (np.stack(obs), np.stack(act), np.asarray(rew, dtype=float),
                np.stack(obs2), np.stack(cost))


class ReplayMemory:
    """FIFO replay; oldest experience is evicted first. Batches are drawn
    uniformly without replacement."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.items = []

    def push(self, obs, act, rew, obs2):
        self.items.append((obs, act, rew, obs2))
        if len(self.items) > self.capacity:
            del self.items[0]

    def __len__(self):
        return len(self.items)

    def sample(self, batch: int, rng: np.random.Generator):
        idx = rng.choice(len(self.items), size=batch, replace=False)
        obs, act, rew, obs2 = zip(*(self.items[i] for i in idx))
        return (np.stack(obs), np.asarray(act, dtype=int),
                np.asarray(rew, dtype=float), np.stack(obs2))


# ----------------------------------------------------------------------
@dataclass
class CupHyper:
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
    buffer: int = 50
    minibatch: int = 10
    epochs: int = 20
    logstd_init: float = -1.0
    grad_clip: float = 10.0
    penalty_zeta: float = 1.0

    @classmethod
    def from_scenario(cls, scn: Scenario) -> "CupHyper":
        return cls(gamma=scn.gamma, gae_lambda=scn.gae_lambda, lr_nu=scn.lr_nu,
                   lr_value=scn.lr_value, lr_policy=scn.lr_policy,
                   nu_init=scn.nu_init, nu_max=scn.nu_max,
                   cost_limit=scn.cost_limit, kl_eps=scn.kl_eps,
                   clip_eps=scn.clip_eps, buffer=scn.bs_buffer,
                   minibatch=scn.bs_minibatch, epochs=scn.bs_epochs,
                   logstd_init=scn.logstd_init, grad_clip=scn.grad_clip,
                   penalty_zeta=scn.penalty_zeta)


BS_HIDDEN = (512, 128, 64)
TU_HIDDEN = (64, 32)


class CupAgent:
    """One base station's actor-critic bundle.

    kind="cup": reward critic, cost critic, two-step constrained update.
    kind="ppo": reward critic only, trained on the penalty-shaped reward.
    """

    def __init__(self, obs_dim: int, act_dim: int, n_costs: int, hyper: CupHyper,
                 rng: np.random.Generator, kind: str = "cup",
                 hidden=BS_HIDDEN, dtype=torch.float32):
        if kind not in ("cup", "ppo"):
            raise ValueError(f"unknown agent kind {kind!r}")
        self.kind = kind
        self.hyper = hyper
        self.rng = rng
        self.dtype = dtype
        self.policy = GaussianPolicy(obs_dim, act_dim, hidden, rng,
                                     hyper.logstd_init, dtype)
        self.vnet = Mlp([obs_dim, *hidden, 1], rng, dtype=dtype)
        self.opt_pi = torch.optim.Adam(self.policy.parameters(), lr=hyper.lr_policy)
        self.opt_v = torch.optim.Adam(self.vnet.parameters(), lr=hyper.lr_value)
        if kind == "cup":
            self.cnet = Mlp([obs_dim, *hidden, n_costs], rng, dtype=dtype)
            self.opt_c = torch.optim.Adam(self.cnet.parameters(), lr=hyper.lr_value)
            self.nu = np.full(n_costs, hyper.nu_init)
        else:
            self.cnet = None
            self.opt_c = None
            self.nu = np.zeros(n_costs)
        self.buffer = TrajectoryBuffer(hyper.buffer)
        self.updates = 0

    # ------------------------------------------------------------------
    def act(self, obs: np.ndarray, deterministic=False) -> np.ndarray:
        return self.policy.sample_np(obs, self.rng, deterministic)

    def random_action(self, act_dim: int) -> np.ndarray:
        return np.clip(self.rng.uniform(0.0, 1.0, act_dim), ACTION_MIN, 1.0)

    # ------------------------------------------------------------------
    def _snapshot(self):
        mods = [self.policy, self.vnet, self.opt_pi, self.opt_v]
        if self.cnet is not None:
            mods += [self.cnet, self.opt_c]
        return [copy.deepcopy(m.state_dict()) for m in mods]

    def _restore(self, snap):
        mods = [self.policy, self.vnet, self.opt_pi, self.opt_v]
        if self.cnet is not None:
            mods += [self.cnet, self.opt_c]
        for m, s in zip(mods, snap):
            m.load_state_dict(s)

    def _mean_kl(self, obs_t, ref_mean, ref_std) -> float:
        with torch.no_grad():
            return float(self.policy.kl_to(obs_t, ref_mean, ref_std).mean())

    def update(self) -> dict:
        """Run one full update on the collected trajectory, then clear it."""
        hp = self.hyper
        obs, act, rew, obs2, cost = self.buffer.arrays()
        if self.kind == "ppo":
            rew = rew - hp.penalty_zeta * np.maximum(cost, 0.0).sum(axis=1)
        b = obs.shape[0]
        snap = self._snapshot()
        nu_before = self.nu.copy()
        t = lambda x: torch.as_tensor(x, dtype=self.dtype)
        obs_t, act_t, obs2_t = t(obs), t(act), t(obs2)

        with torch.no_grad():
            v = self.vnet(obs_t).squeeze(-1).numpy()
            v2 = self.vnet(obs2_t).squeeze(-1).numpy()
        delta = rew + hp.gamma * v2 - v
        adv = gae(delta, hp.gamma, hp.gae_lambda)
        v_target = adv + v

        if self.kind == "cup":
            with torch.no_grad():
                vc = self.cnet(obs_t).numpy()
                vc2 = self.cnet(obs2_t).numpy()
            delta_c = cost + hp.gamma * vc2 - vc
            cadv = gae(delta_c, hp.gamma, hp.gae_lambda)
            c_target = cadv + vc
            self.nu = update_nu(self.nu, hp.lr_nu, cost.mean(axis=0),
                                hp.cost_limit, hp.nu_max)

        with torch.no_grad():
            old_mean, old_std = self.policy.dist_params(obs_t)
            old_logp = self.policy.log_prob(obs_t, act_t)
        adv_t, vt_t = t(adv), t(v_target)
        if self.kind == "cup":
            cadv_t, ct_t, nu_t = t(cadv), t(c_target), t(self.nu)

        stats = {"aborted": False, "step1_epochs": 0, "step2_epochs": 0,
                 "kl1": 0.0, "kl2": 0.0, "nu": self.nu.copy()}

        def step(optim, net_params, loss):
            if not torch.isfinite(loss):
                return False
            optim.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(net_params, hp.grad_clip)
            optim.step()
            return True

        # Step 1: improvement (policy + both critics)
        for epoch in range(hp.epochs):
            perm = self.rng.permutation(b)
            for lo in range(0, b, hp.minibatch):
                mb = perm[lo:lo + hp.minibatch]
                ok = step(self.opt_v, self.vnet.parameters(),
                          value_loss(self.vnet, obs_t[mb], vt_t[mb]))
                if ok and self.kind == "cup":
                    ok = step(self.opt_c, self.cnet.parameters(),
                              value_loss(self.cnet, obs_t[mb], ct_t[mb]))
                if ok:
                    ok = step(self.opt_pi, self.policy.parameters(),
                              cup_improve_loss(self.policy, obs_t[mb], act_t[mb],
                                               adv_t[mb], old_logp[mb], hp.clip_eps))
                if not ok:
                    log.warning("non-finite loss; restoring pre-update parameters")
                    self._restore(snap)
                    self.nu = nu_before
                    stats["aborted"] = True
                    self.buffer.clear()
                    return stats
            stats["step1_epochs"] = epoch + 1
            stats["kl1"] = self._mean_kl(obs_t, old_mean, old_std)
            if stats["kl1"] > hp.kl_eps:
                break

        # Step 2: projection back toward the constraint set
        if self.kind == "cup":
            with torch.no_grad():
                mid_mean, mid_std = self.policy.dist_params(obs_t)
            coeff = (1.0 - hp.gamma * hp.gae_lambda) / (1.0 - hp.gamma)
            for epoch in range(hp.epochs):
                perm = self.rng.permutation(b)
                for lo in range(0, b, hp.minibatch):
                    mb = perm[lo:lo + hp.minibatch]
                    loss = cup_project_loss(self.policy, obs_t[mb], act_t[mb],
                                            cadv_t[mb], old_logp[mb],
                                            mid_mean[mb], mid_std[mb], nu_t, coeff)
                    if not step(self.opt_pi, self.policy.parameters(), loss):
                        log.warning("non-finite loss; restoring pre-update parameters")
                        self._restore(snap)
                        self.nu = nu_before
                        stats["aborted"] = True
                        self.buffer.clear()
                        return stats
                stats["step2_epochs"] = epoch + 1
                stats["kl2"] = self._mean_kl(obs_t, old_mean, old_std)
                if stats["kl2"] > hp.kl_eps:
                    break

        self.updates += 1
        self.buffer.clear()
        return stats

    # ------------------------------------------------------------------
    def to_arrays(self, prefix: str) -> tuple[dict, dict]:
        arrays = {}
        meta = {"kind": self.kind, "updates": self.updates,
                "nu": self.nu.tolist(), "rng": self.rng.bit_generator.state}
        _module_to_arrays(self.policy, f"{prefix}.policy", arrays)
        _module_to_arrays(self.vnet, f"{prefix}.vnet", arrays)
        _opt_to_arrays(self.opt_pi, f"{prefix}.opt_pi", arrays)
        _opt_to_arrays(self.opt_v, f"{prefix}.opt_v", arrays)
        if self.cnet is not None:
            _module_to_arrays(self.cnet, f"{prefix}.cnet", arrays)
            _opt_to_arrays(self.opt_c, f"{prefix}.opt_c", arrays)
        return meta, arrays

    def from_arrays(self, prefix: str, meta: dict, arrays: dict) -> None:
        if meta["kind"] != self.kind:
            raise ValueError("checkpoint agent kind mismatch")
        self.updates = meta["updates"]
        self.nu = np.asarray(meta["nu"], dtype=float)
        self.rng.bit_generator.state = meta["rng"]
        _module_from_arrays(self.policy, f"{prefix}.policy", arrays)
        _module_from_arrays(self.vnet, f"{prefix}.vnet", arrays)
        _opt_from_arrays(self.opt_pi, f"{prefix}.opt_pi", arrays)
        _opt_from_arrays(self.opt_v, f"{prefix}.opt_v", arrays)
        if self.cnet is not None:
            _module_from_arrays(self.cnet, f"{prefix}.cnet", arrays)
            _opt_from_arrays(self.opt_c, f"{prefix}.opt_c", arrays)


class D3qnAgent:
    """One terrestrial user's dueling double-Q bundle."""

    def __init__(self, obs_dim: int, n_actions: int, rng: np.random.Generator,
                 lr: float = 3e-4, gamma: float = 0.5, eps_init: float = 0.3,
                 eps_min: float = 0.005, eps_decay: float = 0.995,
                 grad_clip: float = 10.0, replay: int = 2000,
                 hidden=TU_HIDDEN, dtype=torch.float32):
        self.n_actions = n_actions
        self.gamma = gamma
        self.eps = eps_init
        self.eps_min = eps_min
        self.eps_decay = eps_decay
        self.grad_clip = grad_clip
        self.rng = rng
        self.dtype = dtype
        self.online = DuelingQNet(obs_dim, n_actions, hidden, rng, dtype)
        self.target = DuelingQNet(obs_dim, n_actions, hidden, rng, dtype)
        self.sync()
        self.opt = torch.optim.Adam(self.online.parameters(), lr=lr)
        self.memory = ReplayMemory(replay)

    @torch.no_grad()
    def qvalues(self, obs: np.ndarray) -> np.ndarray:
        return self.online(torch.as_tensor(obs, dtype=self.dtype).unsqueeze(0)) \
            .squeeze(0).numpy()

    def act(self, obs: np.ndarray, greedy=False) -> int:
        if greedy:
            return int(np.argmax(self.qvalues(obs)))
        a = epsilon_greedy(self.qvalues(obs), self.eps, self.rng)
        self.eps = decay_eps(self.eps, self.eps_min, self.eps_decay)
        return a

    def random_action(self) -> int:
        return int(self.rng.integers(self.n_actions))

    def update(self, batch: int) -> float:
        obs, act, rew, obs2 = self.memory.sample(batch, self.rng)
        t = lambda x, dt=self.dtype: torch.as_tensor(x, dtype=dt)
        loss = d3qn_loss(self.online, self.target, t(obs), torch.as_tensor(act),
                         t(rew), t(obs2), self.gamma)
        self.opt.zero_grad()
        loss.backward()
        nn.utils.clip_grad_norm_(self.online.parameters(), self.grad_clip)
        self.opt.step()
        return float(loss.detach())

    def sync(self) -> None:
        self.target.load_state_dict(self.online.state_dict())

    def to_arrays(self, prefix: str) -> tuple[dict, dict]:
        arrays = {}
        meta = {"eps": self.eps, "rng": self.rng.bit_generator.state}
        _module_to_arrays(self.online, f"{prefix}.online", arrays)
        _module_to_arrays(self.target, f"{prefix}.target", arrays)
        _opt_to_arrays(self.opt, f"{prefix}.opt", arrays)
        return meta, arrays

    def from_arrays(self, prefix: str, meta: dict, arrays: dict) -> None:
        self.eps = meta["eps"]
        self.rng.bit_generator.state = meta["rng"]
        _module_from_arrays(self.online, f"{prefix}.online", arrays)
        _module_from_arrays(self.target, f"{prefix}.target", arrays)
        _opt_from_arrays(self.opt, f"{prefix}.opt", arrays)


# ----------------------------------------------------------------------
# checkpoint container: self-describing header + raw little-endian arrays
MAGIC = b"CATNCKPT1\n"


def _module_to_arrays(mod: nn.Module, prefix: str, out: dict) -> None:
    for name, tensor in mod.state_dict().items():
        out[f"{prefix}.{name}"] = tensor.detach().cpu().numpy()


def _module_from_arrays(mod: nn.Module, prefix: str, arrays: dict) -> None:
    sd = {name: torch.as_tensor(arrays[f"{prefix}.{name}"])
          for name in mod.state_dict()}
    mod.load_state_dict(sd)


def _opt_to_arrays(opt: torch.optim.Optimizer, prefix: str, out: dict) -> None:
    sd = opt.state_dict()
    for idx, state in sd["state"].items():
        for key, val in state.items():
            out[f"{prefix}.{idx}.{key}"] = (
                val.detach().cpu().numpy() if torch.is_tensor(val)
                else np.asarray(val))


def _opt_from_arrays(opt: torch.optim.Optimizer, prefix: str, arrays: dict) -> None:
    sd = opt.state_dict()
    state = {}
    params = [p for group in sd["param_groups"] for p in group["params"]]
    for idx in params:
        entries = {}
        for key in ("step", "exp_avg", "exp_avg_sq"):
            name = f"{prefix}.{idx}.{key}"
            if name in arrays:
                entries[key] = torch.as_tensor(arrays[name])
        if entries:
            state[idx] = entries
    sd["state"] = state
    opt.load_state_dict(sd)


def save_blob(path, meta: dict, arrays: dict) -> None:
    """Write a checkpoint: canonical JSON header plus raw array bytes.

    Byte-for-byte deterministic for equal contents (no timestamps, sorted
    keys, fixed array order).
    """
    index = []
    offset = 0
    names = sorted(arrays)
    for name in names:
        arr = np.ascontiguousarray(arrays[name])
        index.append({"name": name, "dtype": arr.dtype.str,
                      "shape": list(arr.shape), "offset": offset,
                      "nbytes": arr.nbytes})
        offset += arr.nbytes
    header = json.dumps({"meta": meta, "arrays": index},
                        sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for name in names:
            fh.write(np.ascontiguousarray(arrays[name]).tobytes())


def load_blob(path) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError("not a checkpoint file")
        hlen = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(hlen).decode())
        blob = fh.read()
    arrays = {}
    for ent in header["arrays"]:
        raw = blob[ent["offset"]:ent["offset"] + ent["nbytes"]]
        arrays[ent["name"]] = np.frombuffer(raw, dtype=np.dtype(ent["dtype"])) \
            .reshape(ent["shape"]).copy()
    return header["meta"], arrays
