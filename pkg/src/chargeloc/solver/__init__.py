"""Solver-agnostic model description, file writers and engine adapters."""
from .backends import BackendError, backend_ids, find_cbc, get_backend, solve
from .model import (
    BackendCapability,
    MilpModel,
    ModelBuilder,
    ModelError,
    SolveReport,
    SolverOptions,
)
from .writers import write_lp, write_model, write_mps

__all__ = [
    "BackendCapability",
    "BackendError",
    "MilpModel",
    "ModelBuilder",
    "ModelError",
    "SolveReport",
    "SolverOptions",
    "backend_ids",
    "find_cbc",
    "get_backend",
    "solve",
    "write_lp",
    "write_model",
    "write_mps",
]
