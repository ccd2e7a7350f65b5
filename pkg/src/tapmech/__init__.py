"""Strategyproof traffic assignment without money: serial-dictatorship mechanisms,
an exact optimum, audits and a resource-augmentation benchmark."""
from .errors import InfeasibleError, NetworkError, NotCertifiedError, TapError, TooLargeError
from .instance import AgentProfile, Instance, dumps, loads, read_instance, write_instance
from .mechanisms import (
    Allocation,
    Bipartition,
    bipolar_serial_dictatorship,
    opt_lower_bound,
    optimal_allocation,
    random_serial_dictatorship,
    rsd_expected_cost,
    serial_dictatorship,
    social_cost,
)
from .network import Edge, Path, RoadNetwork

__all__ = [
    "AgentProfile", "Allocation", "Bipartition", "Edge", "InfeasibleError", "Instance",
    "NetworkError", "NotCertifiedError", "Path", "RoadNetwork", "TapError", "TooLargeError",
    "bipolar_serial_dictatorship", "dumps", "loads", "opt_lower_bound", "optimal_allocation",
    "random_serial_dictatorship", "read_instance", "rsd_expected_cost", "serial_dictatorship",
    "social_cost", "write_instance",
]
