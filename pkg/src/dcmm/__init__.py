"""Residual-decomposed gaussian matrix mechanism for marginal-answerable linear queries."""
from .assemble import (
    AssembledMechanism,
    NoisyMeasurement,
    answer_workload,
    evaluate,
    measure,
    plan_workload,
    reconstruct,
    rescale,
)
from .data import DatasetHandle, MarginalVector, load_csv, marginal, synth
from .decompose import Subquery, Subworkload, build_subworkloads, decompose_query, project_query
from .privacy import mechanism_cost, to_approx_dp, to_gaussian_dp, total_cost
from .schema import Attribute, Schema
from .solvers import (
    CellCapExceeded,
    MechanismPlan,
    SolverConfig,
    SolverError,
    solve_fixed_basis,
    solve_fourier,
    solve_optimal,
)
from .workload import LinearQuery, Workload, WorkloadSpec, assign_random_weights, build_workload

__version__ = "0.1.0"

__all__ = [
    "AssembledMechanism", "NoisyMeasurement", "answer_workload", "evaluate", "measure", "plan_workload",
    "reconstruct", "rescale", "DatasetHandle", "MarginalVector", "load_csv", "marginal", "synth", "Subquery",
    "Subworkload", "build_subworkloads", "decompose_query", "project_query", "mechanism_cost", "to_approx_dp",
    "to_gaussian_dp", "total_cost", "Attribute", "Schema", "CellCapExceeded", "MechanismPlan", "SolverConfig",
    "SolverError", "solve_fixed_basis", "solve_fourier", "solve_optimal", "LinearQuery", "Workload",
    "WorkloadSpec", "assign_random_weights", "build_workload",
]
