"""Causal direction between two discrete variables via additive noise models."""

from __future__ import annotations

__version__ = "0.1.0"

from .domain import (
    FunctionTable,
    JointPmf,
    NoisePmf,
    PairedSample,
    ValueDomain,
    canonicalize,
    empirical_joint,
    residuals,
)
from .inference import CurvePoint, Outcome, Verdict, decide, infer_direction, pvalue_curve
from .regression import AnmFit, RegressionConfig, candidate_values, fit_anm, init_function
from .stats import (
    ContingencyTable,
    DependenceScore,
    TestConfig,
    TestResult,
    chi_square_test,
    cochran_ok,
    contingency_table,
    dependence_measure,
    fisher_exact_mc,
    independence_test,
)
from .theory import (
    AnmModel,
    BackwardModel,
    Decomposition,
    backward_search,
    divisibility_check,
    theorem1_decomposition,
)

__all__ = [
    "AnmFit",
    "AnmModel",
    "BackwardModel",
    "ContingencyTable",
    "CurvePoint",
    "Decomposition",
    "DependenceScore",
    "FunctionTable",
    "JointPmf",
    "NoisePmf",
    "Outcome",
    "PairedSample",
    "RegressionConfig",
    "TestConfig",
    "TestResult",
    "ValueDomain",
    "Verdict",
    "backward_search",
    "candidate_values",
    "canonicalize",
    "chi_square_test",
    "cochran_ok",
    "contingency_table",
    "decide",
    "dependence_measure",
    "divisibility_check",
    "empirical_joint",
    "fisher_exact_mc",
    "fit_anm",
    "independence_test",
    "infer_direction",
    "init_function",
    "pvalue_curve",
    "residuals",
    "theorem1_decomposition",
]
