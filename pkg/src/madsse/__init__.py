"""Gradient-based multi-area WLS state estimation for radial distribution feeders."""

from .grid import FeederModel, generate_feeder, load_feeder, partition, sample_feeder_37
from .sensitivity import build, build_multi_phase, build_single_phase, predict_voltage
from .powerflow import solve_linear, solve_nonlinear
from .measurements import MeasurementSet, NoisePolicy, synthesize
from .estimator import solve_gauss_newton, solve_gradient
from .multiarea import build_agents, run_protocol, run_round
from .observability import build_H

__version__ = "0.1.0"
