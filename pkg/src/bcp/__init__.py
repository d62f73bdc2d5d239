"""Broadcast consensus protocols: simulation, construction and verification."""
from .core import (
    MIXED,
    Configuration,
    GState,
    Protocol,
    ProtocolError,
    Stop,
    Trace,
    Transition,
    apply_broadcast,
    enabled_nonsilent,
    init_config,
    is_consensus,
    make_rng,
    run_execution,
    sample_step,
    spawn_rngs,
)

__version__ = "0.1.0"

__all__ = [
    "MIXED",
    "Configuration",
    "GState",
    "Protocol",
    "ProtocolError",
    "Stop",
    "Trace",
    "Transition",
    "apply_broadcast",
    "enabled_nonsilent",
    "init_config",
    "is_consensus",
    "make_rng",
    "run_execution",
    "sample_step",
    "spawn_rngs",
]
