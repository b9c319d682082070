"""Generalized Moutard transformation for the axially symmetric Schrödinger equation."""
from .exprlang import parse, to_text
from .quadrature import GridSpec, NoPathFoundError, PathPlan, QuadratureError, plan_path
from .schrodinger import (
    EmptyDomainError, Potential, ResidualReport, SeedSolution, apply_operator, h_from_seed,
    potential_from_h, residual_report, wq_consistency,
)
from .transform import (
    ChainError, DegenerateSeedError, IncoherentSeedsError, OneForm, SeedNotSolutionError,
    TransformedSolutionField, TransformStep, chain, choose_basepoint, field_residual_report,
    gauge_fit, involution_check, make_oneform, transform_potential, transform_potential_from_h,
    transform_solution, trivial_partner,
)

__version__ = "0.1.0"
