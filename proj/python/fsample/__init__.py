"""Graph sampling engine with fused block construction and a distributed minibatch runtime."""

from ._core import (
    ContractViolation,
    Error,
    FormatError,
    Graph,
    MalformedInputError,
    ParameterError,
    from_edges,
    generate_erdos_renyi,
    generate_rmat,
    load_graph,
    partition,
    run_epoch,
    sample_level,
    sample_minibatch,
    storage_report,
    verify_formats,
    verify_kernels,
    verify_sampling,
)

__all__ = [
    "ContractViolation",
    "Error",
    "FormatError",
    "Graph",
    "MalformedInputError",
    "ParameterError",
    "from_edges",
    "generate_erdos_renyi",
    "generate_rmat",
    "load_graph",
    "partition",
    "run_epoch",
    "sample_level",
    "sample_minibatch",
    "storage_report",
    "verify_formats",
    "verify_kernels",
    "verify_sampling",
]
