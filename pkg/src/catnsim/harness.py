"""Slot-loop orchestration.

Each slot runs the same phase order: channel measurement, TU experience
store / update / action, BS CSI and information exchange, BS experience
store / update, BS action, transmission, rewards and costs. Association and
beamforming can each be served by a learner or by a classical optimizer;
the six scheme combinations plus a random-action baseline share this loop.
"""

import json
import logging
import os
import time
from dataclasses import dataclass

import numpy as np
import torch

from .channel import ChannelModel
from .encoding import (Codebook, ObsContext, bs_action_dim, bs_cost,
                       bs_observation_dim, bs_reward, build_bs_observation,
                       build_tu_observation, decode_bs_action,
                       observation_schema, select_interferer_sets, tu_reward,
                       tu_observation_dim)
from .learners import CupAgent, CupHyper, D3qnAgent, load_blob, save_blob
from .metrics import SlotRecord, exchange_counts, export, summarize
from .optim import sc_associate, stage1_ua_power, wmmse_cbf
from .phy import AssociationMap, BeamformerSet, transmit
from .rng import substream
from .scenario import Scenario

log = logging.getLogger(__name__)

UA_CHOICES = ("d3qn", "dcd", "sc", "rand")
BF_CHOICES = ("cup", "ppo", "wmmse", "rand")

PHASES = ("measure", "tu_store", "tu_update", "tu_act", "bs_csi",
          "bs_exchange", "bs_store", "bs_update", "bs_act", "transmit",
          "rewards")


class SimulationError(RuntimeError):
    pass


@dataclass
class SchemeSpec:
    ua: str
    bf: str
    mode: str = "train"

    def __post_init__(self):
        if self.ua not in UA_CHOICES:
            raise ValueError(f"unknown association scheme {self.ua!r}")
        if self.bf not in BF_CHOICES:
            raise ValueError(f"unknown beamforming scheme {self.bf!r}")
        if self.mode not in ("train", "eval"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def parse(cls, text: str, mode: str = "train") -> "SchemeSpec":
        parts = text.split("-")
        if len(parts) != 2:
            raise ValueError(f"scheme must look like 'd3qn-cup', got {text!r}")
        return cls(parts[0], parts[1], mode)

    def __str__(self):
        return f"{self.ua}-{self.bf}"


def should_sync(slot: int, period: int) -> bool:
    """Hard-copy schedule for the target network: every `period` slots."""
    return slot > 0 and slot % period == 0


class _Timer:
    def __init__(self):
        self.acc = {}
        self._t0 = None
        self._phase = None

    def phase(self, name):
        now = time.perf_counter()
        if self._phase is not None:
            self.acc[self._phase] = self.acc.get(self._phase, 0.0) + now - self._t0
        self._phase, self._t0 = name, now

    def stop(self):
        self.phase(None)
        self._phase = None
        out, self.acc = self.acc, {}
        out.pop(None, None)
        return out


def run(scn: Scenario, scheme: SchemeSpec, seed: int, out_dir: str | None = None,
        slots: int | None = None, checkpoint_in: str | None = None,
        force: bool = False, event_log: list | None = None) -> dict:
    """Simulate one run and (optionally) persist metrics plus checkpoints.

    Fully deterministic: every random draw derives from (seed, purpose) so a
    repeated call produces byte-identical outputs.
    """
    scn.validate()
    torch.set_num_threads(1)
    slots = scn.slots if slots is None else slots
    train = scheme.mode == "train"
    learn_ua = scheme.ua == "d3qn"
    learn_bf = scheme.bf in ("cup", "ppo")

    chan_model = ChannelModel(scn, seed)
    cb = Codebook.build(scn.m, scn.codebook_size)
    n, k, l = scn.n_bs, scn.n_tu, scn.n_au
    sigma2, p_max, i_max = scn.sigma2_w, scn.p_max_w, scn.i_max_w

    tu_agents = []
    if learn_ua:
        for ki in range(k):
            tu_agents.append(D3qnAgent(
                tu_observation_dim(scn), n, substream(seed, "agent", "tu", ki),
                lr=scn.lr_q, gamma=scn.gamma, eps_init=scn.eps_init,
                eps_min=scn.eps_min, eps_decay=scn.eps_decay,
                grad_clip=scn.grad_clip, replay=scn.tu_replay))
    bs_agents = []
    if learn_bf:
        hyper = CupHyper.from_scenario(scn)
        for ni in range(n):
            bs_agents.append(CupAgent(
                bs_observation_dim(scn), bs_action_dim(scn), l, hyper,
                substream(seed, "agent", "bs", ni), kind=scheme.bf))
    rand_rng = substream(seed, "agent", "rand")

    if checkpoint_in:
        _load_agents(checkpoint_in, scheme, tu_agents, bs_agents)

    records = []
    timing_rows = []
    timer = _Timer()

    prev_snap = prev_chan = None
    prev_hc = None
    varrho_prev = None
    w_prev = None
    tu_obs_prev = tu_rew_prev = None
    tu_act_prev = None
    bs_obs_prev = bs_act_prev = None
    bs_rew_prev = bs_cost_prev = None

    def mark(phase):
        timer.phase(phase)
        if event_log is not None:
            event_log.append((t, phase))

    for t in range(slots):
        mark("measure")
        chan = chan_model.advance(t)
        tu_obs_now = None
        if learn_ua and t >= 1:
            tu_obs_now = [build_tu_observation(scn, chan, prev_snap, ki)
                          for ki in range(k)]

        mark("tu_store")
        if train and learn_ua and tu_obs_prev is not None:
            for ki in range(k):
                tu_agents[ki].memory.push(tu_obs_prev[ki], tu_act_prev[ki],
                                          tu_rew_prev[ki], tu_obs_now[ki])

        mark("tu_update")
        warmed = learn_ua and len(tu_agents[0].memory) >= scn.tu_batch
        if train and learn_ua and warmed:
            for agent in tu_agents:
                agent.update(scn.tu_batch)
                if should_sync(t, scn.tu_target_sync):
                    agent.sync()

        mark("tu_act")
        if scheme.ua == "d3qn":
            if t == 0 or (train and not warmed):
                varrho = np.array([a.random_action() for a in tu_agents])
            else:
                varrho = np.array([a.act(tu_obs_now[ki], greedy=not train)
                                   for ki, a in enumerate(tu_agents)])
        elif scheme.ua == "sc":
            varrho = sc_associate(chan.strengths).varrho
        elif scheme.ua == "dcd":
            assoc_dcd, _ = stage1_ua_power(chan.strengths, sigma2, p_max,
                                           m=scn.m, rounds=scn.ua_power_rounds)
            varrho = assoc_dcd.varrho
        else:  # rand
            varrho = rand_rng.integers(n, size=k)
        assoc = AssociationMap(varrho, n)

        mark("bs_csi")
        # local CSI for slot t is chan itself

        mark("bs_exchange")
        ctx = None
        if learn_bf:
            ctx = ObsContext(scn, cb, chan, assoc, prev_snap, prev_chan, prev_hc)

        mark("bs_store")
        bs_obs_now = None
        if learn_bf and t >= 1:
            bs_obs_now = [build_bs_observation(ctx, ni) for ni in range(n)]
            if train and bs_obs_prev is not None:
                for ni in range(n):
                    bs_agents[ni].buffer.push(bs_obs_prev[ni], bs_act_prev[ni],
                                              bs_rew_prev[ni], bs_obs_now[ni],
                                              bs_cost_prev)

        mark("bs_update")
        if train and learn_bf and bs_agents and all(a.buffer.full() for a in bs_agents):
            for agent in bs_agents:
                agent.update()

        mark("bs_act")
        adim = bs_action_dim(scn)
        if learn_bf:
            if t == 0:
                raw_actions = [a.random_action(adim) for a in bs_agents]
            else:
                raw_actions = [a.act(bs_obs_now[ni], deterministic=not train)
                               for ni, a in enumerate(bs_agents)]
            bf = _decode_all(raw_actions, assoc, chan, p_max, scn)
        elif scheme.bf == "wmmse":
            init = w_prev if w_prev is not None else None
            bf, _ = wmmse_cbf(assoc, chan.h, chan.g, p_max, i_max, sigma2,
                              init_w=init, tol=scn.wmmse_tol,
                              max_iter=scn.wmmse_max_iter)
            raw_actions = None
        else:  # rand
            raw_actions = [np.clip(rand_rng.uniform(size=adim), 1e-6, 1.0)
                           for _ in range(n)]
            bf = _decode_all(raw_actions, assoc, chan, p_max, scn)

        mark("transmit")
        snap = transmit(t, assoc, varrho_prev, bf, chan.h, chan.g, chan.g_los,
                        chan.strengths, sigma2)
        bs_power = bf.bs_power(assoc)
        if np.any(bs_power > p_max * (1.0 + 1e-9)):
            _dump_abort(out_dir, t, scheme, bs_power, p_max)
            raise SimulationError(
                f"slot {t}: BS power {bs_power.max():.6g} W exceeds "
                f"{p_max:.6g} W; diagnostic dumped")

        mark("rewards")
        sets_now = select_interferer_sets(snap, scn)
        r_bs = np.array([bs_reward(snap, ni, sets_now.u_out[ni]) for ni in range(n)])
        cost = bs_cost(snap, i_max)
        r_tu = np.array([tu_reward(snap, chan.h, ki,
                                   sets_now.u_out[int(snap.varrho[ki])],
                                   scn.zeta_r) for ki in range(k)])
        records.append(SlotRecord(t, snap.rate.copy(), snap.rho.copy(), r_bs,
                                  cost.copy(), r_tu, snap.handover.copy()))
        timing_rows.append(timer.stop())

        prev_snap, prev_chan = snap, chan
        prev_hc = ctx.cur_hc if ctx is not None else None
        varrho_prev = varrho
        w_prev = bf.w
        if learn_ua:
            tu_obs_prev, tu_act_prev, tu_rew_prev = tu_obs_now, varrho.copy(), r_tu
        if learn_bf and bs_obs_now is not None:
            bs_obs_prev, bs_act_prev = bs_obs_now, raw_actions
            bs_rew_prev, bs_cost_prev = r_bs, cost

    metrics = summarize(records, scn.bandwidth_hz, scn.slot_s, scn.zeta_r)
    mean_slot = (sum(sum(row.values()) for row in timing_rows) / len(timing_rows)
                 if timing_rows else 0.0)
    counts = exchange_counts(scn)
    summary = {
        "scheme": str(scheme),
        "mode": scheme.mode,
        "seed": seed,
        "slots": slots,
        "i_max_w": i_max,
        "metrics": metrics,
        "exchange_count": counts["learning"] if learn_bf else counts["optimizer"],
        "exchange_counts": counts,
        "timing": {"mean_slot_s": mean_slot},
    }

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        export(records, out_dir, scn, force=force)
        with open(os.path.join(out_dir, "timing.log"), "w") as fh:
            for i, row in enumerate(timing_rows):
                for phase, secs in row.items():
                    fh.write(f"{i} {phase} {secs:.9f}\n")
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=1, sort_keys=True)
        with open(os.path.join(out_dir, "config.ini"), "w") as fh:
            fh.write(scn.to_ini())
        with open(os.path.join(out_dir, "obs_schema.json"), "w") as fh:
            json.dump(observation_schema(scn), fh, indent=1, sort_keys=True)
        if train and (tu_agents or bs_agents):
            _save_agents(os.path.join(out_dir, "checkpoint.ckpt"), scheme, scn,
                         slots, tu_agents, bs_agents)
    summary["records"] = records
    return summary


def _decode_all(raw_actions, assoc: AssociationMap, chan, p_max, scn) -> BeamformerSet:
    k, m = scn.n_tu, scn.m
    p = np.zeros(k)
    w_bar = np.zeros((k, m), dtype=complex)
    for ni, raw in enumerate(raw_actions):
        p_n, w_n = decode_bs_action(raw, ni, assoc, chan.h[ni], chan.g[ni],
                                    p_max, scn)
        own = assoc.served(ni)
        p[own] = p_n[own]
        w_bar[own] = w_n[own]
    return BeamformerSet(p, w_bar)


def _save_agents(path, scheme, scn, slot, tu_agents, bs_agents):
    arrays = {}
    agents_meta = {}
    for ki, agent in enumerate(tu_agents):
        meta, arrs = agent.to_arrays(f"tu{ki}")
        agents_meta[f"tu{ki}"] = meta
        arrays.update(arrs)
    for ni, agent in enumerate(bs_agents):
        meta, arrs = agent.to_arrays(f"bs{ni}")
        agents_meta[f"bs{ni}"] = meta
        arrays.update(arrs)
    meta = {"format": 1, "scheme": str(scheme), "slot": slot,
            "scenario": scn.to_ini(), "agents": agents_meta}
    save_blob(path, meta, arrays)


def _load_agents(path, scheme, tu_agents, bs_agents):
    meta, arrays = load_blob(path)
    if meta["scheme"] != str(scheme):
        raise ValueError(f"checkpoint was trained with scheme {meta['scheme']!r}, "
                         f"requested {scheme!s}")
    for ki, agent in enumerate(tu_agents):
        agent.from_arrays(f"tu{ki}", meta["agents"][f"tu{ki}"], arrays)
    for ni, agent in enumerate(bs_agents):
        agent.from_arrays(f"bs{ni}", meta["agents"][f"bs{ni}"], arrays)


def _dump_abort(out_dir, t, scheme, bs_power, p_max):
    if out_dir is None:
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "abort_slot.json"), "w") as fh:
        json.dump({"slot": t, "scheme": str(scheme),
                   "bs_power_w": list(map(float, bs_power)),
                   "p_max_w": p_max}, fh, indent=1)
