"""Cognitive aerial-terrestrial network simulator.

A secondary terrestrial cellular network (multi-antenna base stations serving
single-antenna terrestrial users) shares spectrum with a primary aerial
network. The package provides the channel/PHY simulation, the classical
two-stage optimizers (dual-coordinate-descent user association and WMMSE-based
coordinated beamforming under interference temperature constraints), and the
multi-agent learners (per-user D3QN association agents, per-base-station
CUP/PPO beamforming agents), plus a CLI harness to run and compare them.
"""

from .scenario import Scenario
from .harness import SchemeSpec, run

__all__ = ["Scenario", "SchemeSpec", "run"]
__version__ = "0.1.0"
