"""Discrete-event simulator of APT attacks on layered ICS networks."""

__version__ = "0.1.0"

from .config import NetworkConfig, load_config
from .engine import EpisodeState, reset, step_hour
from .netmodel import build_network, enumerate_compromise_states

__all__ = [
    "NetworkConfig",
    "load_config",
    "EpisodeState",
    "reset",
    "step_hour",
    "build_network",
    "enumerate_compromise_states",
    "__version__",
]
