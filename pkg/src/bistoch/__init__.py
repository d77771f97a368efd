"""Controlled (bi)stochastic brickwork circuits and their correlation functions."""

from bistoch.gates import (
    ControlledGate,
    LocalGate,
    Observable,
    check_bcs,
    check_conditions,
    check_cs,
    check_generalized,
    flat_state,
    make_gate,
    rewrite_generalized,
    traceless_basis,
)
from bistoch.circuit import CircuitSpec, apply_layer, evolve, lightcone_contract
from bistoch.correlators import (
    autocorrelation,
    correlation_grid,
    multi_point,
    two_point,
    verify_theorems,
)
from bistoch.decay import ExponentialDecayFit, fit_decay
from bistoch.schmidt import cs_factorize, operator_schmidt, verify_bistochastic_refinement

__version__ = "0.1.0"

__all__ = [
    "CircuitSpec",
    "ControlledGate",
    "ExponentialDecayFit",
    "LocalGate",
    "Observable",
    "apply_layer",
    "autocorrelation",
    "check_bcs",
    "check_conditions",
    "check_cs",
    "check_generalized",
    "correlation_grid",
    "cs_factorize",
    "evolve",
    "fit_decay",
    "flat_state",
    "lightcone_contract",
    "make_gate",
    "multi_point",
    "operator_schmidt",
    "rewrite_generalized",
    "traceless_basis",
    "two_point",
    "verify_bistochastic_refinement",
    "verify_theorems",
]
