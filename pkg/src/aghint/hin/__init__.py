"""Heterogeneous graph model, directory format and synthetic generation."""

from .graph import (
    CONTINUOUS,
    DISCRETE,
    AttributeDimensionError,
    DanglingEdgeError,
    GraphError,
    HeteroGraph,
    MissingFileError,
    NodeTypeInfo,
    UnknownTypeError,
)
from .io import load_graph, save_graph
from .synth import SynthSpec, synth_hin

__all__ = [
    "CONTINUOUS", "DISCRETE", "AttributeDimensionError", "DanglingEdgeError", "GraphError",
    "HeteroGraph", "MissingFileError", "NodeTypeInfo", "SynthSpec", "UnknownTypeError",
    "load_graph", "save_graph", "synth_hin",
]
