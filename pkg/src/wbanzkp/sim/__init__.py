"""Discrete-event simulator of a seven-node on-body network."""
from .channel import ConfigError, RadioParams, step_channel
from .mac import Frame, MacParams, QueueOverflow
from .network import Network, RunMetrics, SimScheme, plug_scheme, run_simulation
from .routing import (
    NoRoute,
    StrategyConfig,
    StrategyKind,
    choose_min_attenuation,
    route_downstream,
    route_upstream,
)
from .traces import LinkTrace, MissingTrace, MissingTraceEntry, Posture, load_posture

__all__ = [
    "ConfigError", "RadioParams", "step_channel", "Frame", "MacParams", "QueueOverflow",
    "Network", "RunMetrics", "SimScheme", "plug_scheme", "run_simulation", "NoRoute",
    "StrategyConfig", "StrategyKind", "choose_min_attenuation", "route_downstream",
    "route_upstream", "LinkTrace", "MissingTrace", "MissingTraceEntry", "Posture", "load_posture",
]
