"""Generalized gradient flows with nonquadratic dissipation and their BV limits."""
from .audit import AuditReport, audit_trajectory, chain_rule_check, ed_residual, velocity_slope_check
from .bvanalysis import (BVCurve, JumpRecord, build_bv_curve, decompose, detect_jumps,
                         energy_balance_check, local_stability_check, total_variation, validate_bv)
from .dissipation import DissipationDomainError, DissipationFunction, fenchel_gap, numerical_conjugate
from .family import (ConvergenceReport, FamilySpec, analyze_family, assumption_spotcheck,
                     dissipation_liminf_check, energy_convergence_check, pointwise_limit,
                     run_family, slope_excess_measure)
from .flow import (SolverOptions, StepError, TimeGrid, Trajectory, direct_ode_step,
                   minimizing_movement_step, run_flow, sample_trajectory)
from .systems import (ConstraintError, EvolutionSystem, MetricError, MetricStructure,
                      coercivity_constants, make_example)
from .transition import bicost, bicost_result, jump_total, optimize_path, tricost

__version__ = "0.1.0"
