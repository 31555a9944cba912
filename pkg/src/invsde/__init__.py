"""Synthesis and simulation of stochastic differential systems with a prescribed first integral."""

from .autodiff import gradient, jacobian, jacvec
from .definition import SystemDefinition, load_definition, parse_definition
from .errors import InvsdeError
from .expr import evaluate, parse, pretty_print
from .geometry import (
    closed_form_determinant,
    general_basis,
    projected_special_basis,
    special_basis,
    supplement_basis,
    time_extended_basis,
)
from .harness import (
    CatalogEntry,
    ConvergenceTable,
    ErrorReport,
    catalog,
    convergence_study,
    export_report,
    get_entry,
    invariant_error,
    parse_report,
)
from .simulate import (
    SimConfig,
    Trajectory,
    WienerPath,
    artemiev_step,
    euler_step,
    milstein_step,
    simulate_trajectory,
    sphere_analytic,
    wiener_increments,
)
from .synthesis import (
    ITO,
    STRATONOVICH,
    CoefficientChoice,
    InvariantSpec,
    SdeSystem,
    convert_interpretation,
    hand_entered,
    invariance_residuals,
    synthesize,
)

__version__ = "0.1.0"
