"""Gate-level information-flow security verification.

Stuck-at-fault detection as an information-flow witness: if a test
distinguishes the asset net stuck at 0 from stuck at 1 at some observe
point, information flows there. See the ``ifs`` module for the
verification pipelines and ``trigger`` for trigger recovery.
"""

from .ifs import (
    Asset,
    FlowReport,
    VerifyParams,
    check_equality_property,
    confidentiality_verify,
    depth_analysis,
    integrity_verify,
    intersect_analysis,
)
from .netlist import CircuitGraph, NetlistError, Point, parse_netlist

__version__ = "0.1.0"

__all__ = [
    "Asset",
    "CircuitGraph",
    "FlowReport",
    "NetlistError",
    "Point",
    "VerifyParams",
    "check_equality_property",
    "confidentiality_verify",
    "depth_analysis",
    "integrity_verify",
    "intersect_analysis",
    "parse_netlist",
    "__version__",
]
