"""Numerical homogenization workbench for periodic second-order systems."""

from . import errors
from .lattice import Lattice, build_lattice, unit_lattice, frequencies
from .coefficients import (
    Symbol,
    PeriodicField,
    CoefficientSet,
    symbol_bounds,
    make_symbol,
    gradient_symbol,
    eval_scaled,
    eval_scaled_grid,
    catalog,
    load_field_csv,
)
from .cell import (
    CellSolution,
    solve_lambda,
    solve_lambda_tilde,
    effective_matrix,
    interaction_matrices,
    voigt_reuss,
    solve_cell,
)
from .dirichlet import (
    Mesh,
    make_mesh,
    mesh_for,
    DiscreteDirichletOperator,
    assemble_b_eps,
    assemble_b0,
    choose_lambda,
    ExtensionOperator,
    build_extension,
    extend,
    steklov,
    Corrector,
    corrector_apply,
    resolvent,
    l2_norm,
    h1_norm,
)
from .evolution import (
    EigenBasis,
    EvolutionResult,
    spectral_decompose,
    op_cosine,
    op_sine_scaled,
    solve_ibvp,
    first_order_approx,
    flux,
    flux_approx,
    leapfrog_oracle,
)
from .study import (
    SweepConfig,
    RateReport,
    fit_rate,
    convergence_sweep,
    resolvent_sweep,
    cosine_corrector_sweep,
    run_cli,
    selftest,
)

__all__ = [
    "errors",
    "Lattice", "build_lattice", "unit_lattice", "frequencies",
    "Symbol", "PeriodicField", "CoefficientSet", "symbol_bounds",
    "make_symbol", "gradient_symbol", "eval_scaled", "eval_scaled_grid",
    "catalog", "load_field_csv",
    "CellSolution", "solve_lambda", "solve_lambda_tilde", "effective_matrix",
    "interaction_matrices", "voigt_reuss", "solve_cell",
    "Mesh", "make_mesh", "mesh_for", "DiscreteDirichletOperator",
    "assemble_b_eps", "assemble_b0", "choose_lambda",
    "ExtensionOperator", "build_extension", "extend", "steklov",
    "Corrector", "corrector_apply", "resolvent", "l2_norm", "h1_norm",
    "EigenBasis", "EvolutionResult", "spectral_decompose", "op_cosine",
    "op_sine_scaled", "solve_ibvp", "first_order_approx", "flux",
    "flux_approx", "leapfrog_oracle",
    "SweepConfig", "RateReport", "fit_rate", "convergence_sweep",
    "resolvent_sweep", "cosine_corrector_sweep", "run_cli", "selftest",
]
