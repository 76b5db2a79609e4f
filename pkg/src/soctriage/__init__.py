"""Flow-window anomaly scoring, PPO containment decisions and SOC triage."""

from .aad import BenignStandardizer, ReconstructionAutoencoder, ScoredWindow, score_windows
from .config import PipelineConfig, load_config
from .env import DEFAULT_MODES, ContainmentEnv, RewardMode, time_series_folds
from .exceptions import TriageError, ValidationError
from .flows import ColumnMapping, FlowDataset, FlowRecord, parse_flows, read_flows
from .ppo import ContainmentAgent, EvalMetrics, TrainConfig
from .synth import ScenarioConfig, compose_scenario
from .triage import PseudonymMap, build_reports, compute_priorities, select_for_analysis
from .windows import WindowFeaturizer, partition_windows

__version__ = "0.1.0"

__all__ = [
    "BenignStandardizer", "ReconstructionAutoencoder", "ScoredWindow", "score_windows",
    "PipelineConfig", "load_config", "DEFAULT_MODES", "ContainmentEnv", "RewardMode",
    "time_series_folds", "TriageError", "ValidationError", "ColumnMapping", "FlowDataset",
    "FlowRecord", "parse_flows", "read_flows", "ContainmentAgent", "EvalMetrics", "TrainConfig",
    "ScenarioConfig", "compose_scenario", "PseudonymMap", "build_reports", "compute_priorities",
    "select_for_analysis", "WindowFeaturizer", "partition_windows",
]
