"""Per-slot records, smoothing, summaries, CSV persistence, run comparison."""

import json
import os
from dataclasses import dataclass

import numpy as np

from .scenario import Scenario


@dataclass
class SlotRecord:
    slot: int
    rate: np.ndarray       # (K,) bits/s/Hz
    rho: np.ndarray        # (L,) watts
    reward_bs: np.ndarray  # (N,)
    cost: np.ndarray       # (L,) shared cost vector
    reward_tu: np.ndarray  # (K,)
    handover: np.ndarray   # (K,) bool

    @property
    def sum_rate(self) -> float:
        return float(self.rate.sum())


def moving_average(series, span: int = 41) -> np.ndarray:
    """Centred moving average; the window shrinks symmetrically at the edges
    so a constant series passes through unchanged."""
    x = np.asarray(series, dtype=float)
    n = x.size
    half = span // 2
    csum = np.concatenate([[0.0], np.cumsum(x)])
    out = np.empty(n)
    for i in range(n):
        r = min(half, i, n - 1 - i)
        out[i] = (csum[i + r + 1] - csum[i - r]) / (2 * r + 1)
    return out


def summarize(records: list, bandwidth_hz: float, slot_s: float,
              zeta_r: float) -> dict:
    """Throughput (handover slots carry only the usable fraction), mean
    interference per AU, and the handover percentage."""
    if not records:
        return {"throughput_bps": 0.0, "mean_rho_w": [], "handover_pct": 0.0,
                "mean_sum_rate": 0.0}
    k = records[0].rate.size
    bits = 0.0
    handovers = 0
    rho_acc = np.zeros_like(records[0].rho)
    sum_rate = 0.0
    for rec in records:
        eff = np.where(rec.handover, zeta_r, 1.0)
        bits += float((rec.rate * eff).sum()) * bandwidth_hz * slot_s
        handovers += int(rec.handover.sum())
        rho_acc += rec.rho
        sum_rate += rec.sum_rate
    n_slots = len(records)
    return {
        "throughput_bps": bits / (n_slots * slot_s),
        "mean_rho_w": (rho_acc / n_slots).tolist(),
        "handover_pct": 100.0 * handovers / (k * n_slots),
        "mean_sum_rate": sum_rate / n_slots,
    }


# ----------------------------------------------------------------------
def _fmt(x: float) -> str:
    return repr(float(x))


def csv_header(scn: Scenario) -> list:
    cols = ["slot", "sum_rate"]
    cols += [f"rate_tu{k}" for k in range(scn.n_tu)]
    cols += [f"rho_au{l}" for l in range(scn.n_au)]
    cols += [f"reward_bs{n}" for n in range(scn.n_bs)]
    cols += [f"cost_au{l}" for l in range(scn.n_au)]
    cols += [f"reward_tu{k}" for k in range(scn.n_tu)]
    cols += [f"handover_tu{k}" for k in range(scn.n_tu)]
    return cols


def export(records: list, out_dir: str, scn: Scenario, force: bool = False) -> str:
    """Write metrics.csv plus smoothed plot-data files; refuses to overwrite
    an existing metrics.csv unless forced."""
    path = os.path.join(out_dir, "metrics.csv")
    if os.path.exists(path) and not force:
        raise FileExistsError(f"{path} exists; pass force to overwrite")
    os.makedirs(out_dir, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(csv_header(scn)) + "\n")
        for rec in records:
            row = [str(rec.slot), _fmt(rec.sum_rate)]
            row += [_fmt(v) for v in rec.rate]
            row += [_fmt(v) for v in rec.rho]
            row += [_fmt(v) for v in rec.reward_bs]
            row += [_fmt(v) for v in rec.cost]
            row += [_fmt(v) for v in rec.reward_tu]
            row += [str(int(v)) for v in rec.handover]
            fh.write(",".join(row) + "\n")

    plot_dir = os.path.join(out_dir, "plotdata")
    os.makedirs(plot_dir, exist_ok=True)
    slots = [rec.slot for rec in records]
    series = {"sum_rate": [rec.sum_rate for rec in records]}
    for l in range(scn.n_au):
        series[f"rho_au{l}"] = [rec.rho[l] for rec in records]
    for name, vals in series.items():
        ma = moving_average(vals) if vals else np.zeros(0)
        with open(os.path.join(plot_dir, f"{name}.csv"), "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write("slot,value\n")
            for s, v in zip(slots, ma):
                fh.write(f"{s},{_fmt(v)}\n")
    return path


def parse_metrics(path: str) -> dict:
    """Read a metrics.csv back into column arrays."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cols = {name: np.array([float(r[i]) for r in rows])
            for i, name in enumerate(header)}
    return cols


# ----------------------------------------------------------------------
def exchange_counts(scn: Scenario) -> dict:
    """Analytic inter-BS exchange volume (real scalars per slot).

    Learning schemes exchange compressed channels, powers and interference
    summaries; optimizer schemes exchange full complex CSI.
    """
    k, l, nc = scn.n_tu, scn.n_au, scn.compression
    learning = ((3 * nc * k + k + 2) * scn.eff_b_in * scn.eff_k_in
                + (k + 6) * scn.eff_b_in_pri * l
                + 3 * scn.eff_u_out + 2 * l)
    optimizer = 2 * scn.m * (scn.n_bs - 1) * k + 2 * scn.m * (scn.n_bs - 1) * l
    return {"learning": int(learning), "optimizer": int(optimizer)}


def compare(run_dirs: list) -> list:
    """Aggregate summary.json files from finished runs into table rows."""
    rows = []
    for d in run_dirs:
        with open(os.path.join(d, "summary.json")) as fh:
            s = json.load(fh)
        rho_rel = [r / s["i_max_w"] for r in s["metrics"]["mean_rho_w"]]
        rows.append({
            "run": os.path.basename(os.path.normpath(d)),
            "scheme": s["scheme"],
            "mean_sum_rate": s["metrics"]["mean_sum_rate"],
            "mean_rho_rel": float(np.mean(rho_rel)) if rho_rel else 0.0,
            "handover_pct": s["metrics"]["handover_pct"],
            "mean_slot_time_s": s["timing"]["mean_slot_s"],
            "exchange_count": s["exchange_count"],
        })
    return rows


def format_compare(rows: list) -> str:
    cols = ["run", "scheme", "mean_sum_rate", "mean_rho_rel", "handover_pct",
            "mean_slot_time_s", "exchange_count"]
    widths = {c: max(len(c), *(len(_cell(r[c])) for r in rows)) if rows else len(c)
              for c in cols}
    lines = ["  ".join(c.ljust(widths[c]) for c in cols)]
    for r in rows:
        lines.append("  ".join(_cell(r[c]).ljust(widths[c]) for c in cols))
    return "\n".join(lines)


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)
