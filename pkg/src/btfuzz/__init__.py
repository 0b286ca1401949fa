"""Behavior-tree scenarios from driving logs, and search for critical variants."""
from .errors import BTFuzzError
from .evaluation import FitnessResult, ScoreWeights, Thresholds, fitness
from .fuzzing import CampaignConfig, CampaignLedger, choose_algorithm, grid_campaign, run_campaign
from .log2bt import PartitionConfig, reconstruct, reconstruction_error
from .scenario import LogicalScenario, Scenario, bind, sample
from .simulator import run

__version__ = "0.1.0"

__all__ = [
    "BTFuzzError", "CampaignConfig", "CampaignLedger", "FitnessResult", "LogicalScenario",
    "PartitionConfig", "Scenario", "ScoreWeights", "Thresholds", "bind", "choose_algorithm",
    "fitness", "grid_campaign", "reconstruct", "reconstruction_error", "run",
    "run_campaign", "sample",
]
