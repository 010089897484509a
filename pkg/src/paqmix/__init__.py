"""Partial-attention QMIX for cooperative highway merging."""
from .config import RunConfig, TrainConfig, load_config, preset
from .env import HighwayEnv
from .kernels import BACKEND
from .reward import RewardCoeffs
from .sim import ScenarioConfig

__version__ = "0.1.0"

__all__ = ["BACKEND", "HighwayEnv", "RewardCoeffs", "RunConfig", "ScenarioConfig", "TrainConfig",
           "load_config", "preset"]
