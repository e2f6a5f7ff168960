"""Monte Carlo experiment layer: config, batched engines, commands, outputs."""

from .config import DEFAULTS, SCENARIOS, ExperimentConfig, load_config
from .engine import RunRecord
from .outputs import read_summary, write_outputs, write_summary, write_trajectories
from .runners import (
    cmd_compare,
    cmd_conjecture_mac,
    cmd_correlations,
    cmd_spectrum,
    cmd_stability,
    run_scenario,
)
