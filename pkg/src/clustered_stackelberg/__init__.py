"""Distributed Stackelberg-equilibrium seeking for clustered multi-leader games."""

from .consensus import EstimatorBank, consensus_round, extract_blocks, run_consensus
from .estimator import StackelbergSeeker, Trajectory, estimate_pseudo_gradient
from .followers import barrier_inner_solve, best_response_exact, inner_gd, sumt
from .game import (
    Ball,
    Box,
    GameSpec,
    GeneralConstraints,
    InequalityConstraint,
    Rectangle,
    SmoothnessConstants,
    Unconstrained,
    WholeSpace,
    project,
    validate_assumptions,
)
from .leaders import StepSchedule, hypergradient_estimate, hypergradient_exact, pseudo_gradient, step_at
from .network import LeaderGraph, consensus_contraction_factor, metropolis_weights, modified_weight_matrix
from .oracle import solve_se_lq, verify_equilibrium
from .scenarios import build_cellular, build_lq, build_microgrid
from .sensitivity import exact_jhi, jhi_descent, reduced_hessian

__version__ = "0.1.0"
