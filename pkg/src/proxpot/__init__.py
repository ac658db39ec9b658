"""Proximity-aware power-of-two-choices load balancing on graphs.

Static (balls-into-bins) and dynamic (queueing) simulators for POT,
Unif-POT(k) and InvSq-POT(k), with a compiled kernel and a pure-Python
fallback (``PROXPOT_PURE=1`` forces the fallback).
"""
from __future__ import annotations

__version__ = "0.1.0"

from .kernels import BACKEND
from .graph import (
    ConnectivityFailure,
    Disconnected,
    Graph,
    InvalidSpec,
    TopologySpec,
    average_path_length,
    build_graph,
    diameter,
    distances_up_to_k,
    graph_density,
    is_connected,
    read_edgelist,
    write_edgelist,
)
from .policy import (
    Choice,
    PolicyKind,
    SamplingTable,
    allocate,
    build_sampling_table,
    probability,
    sample_peer,
)
from .static_sim import (
    LoadDistribution,
    StaticState,
    average_request_distance,
    load_distribution,
    max_load,
    run_static,
    simulate_final_loads,
    total_variation,
    tv_evolution,
)
from .dynamic_sim import (
    DynamicConfig,
    joint_distance,
    joint_pdf,
    mean_field_mean_sojourn,
    mean_field_pot_pdf,
    mean_request_distance_dynamic,
    mean_sojourn_time,
    occupancy_pdf,
    run_dynamic,
    server_pdf,
)
from .experiments import resolve_k

__all__ = sorted(
    name for name, obj in list(globals().items())
    if not name.startswith("_") and name != "annotations" and not isinstance(obj, type(__import__("sys")))
)
