"""Discrete-time optimal control with Noether symmetries.

Pontryagin extremals, quasi-invariance checks under parametric
transformation families, Noether integrals of motion, and the first-order and
higher-order discrete calculus-of-variations specializations.
"""

from importlib import resources

from .calcvar import (
    CVFamily,
    CVProblem,
    HOFamily,
    HOProblem,
    cv_family_to_ho,
    cv_family_to_oc,
    cv_integral_values,
    cv_noether_integral,
    cv_to_ho,
    cv_to_oc,
    el_residual,
    euler_poisson_residual,
    ho_family_to_oc,
    ho_integral_values,
    ho_noether_integral,
    ho_states,
    ho_to_oc,
    max_el_residual,
    max_euler_poisson_residual,
    solve_cv,
    solve_ho,
)
from .config import Config, dump_config, load_config, parse_config
from .discovery import DiscoveryResult, GeneratorAnsatz, discover
from .errors import (
    ConfigError,
    DomainError,
    ExprSyntaxError,
    ModelError,
    NoetherDTError,
    UnboundVariableError,
    UnknownFunctionError,
)
from .expr import evaluate, parse, to_text
from .model import (
    ControlSet,
    Extremal,
    Horizon,
    ProblemSpec,
    SymmetryFamily,
    Trajectory,
    cost,
    rollout,
)
from .noether import (
    ConservationReport,
    InvarianceReport,
    check_quasi_invariance,
    conservation_report,
    noether_integral,
    sample_trajectories,
)
from .pmp import (
    ResidualReport,
    SolveResult,
    SolverOptions,
    extremal_residuals,
    maximality_check,
    solve_extremal,
)

__version__ = "0.1.0"


def fixture_path(name: str):
    """Path of a bundled example configuration, e.g. ``fixture_path("lq")``."""
    if not name.endswith(".ini"):
        name += ".ini"
    return resources.files(__package__).joinpath("fixtures", name)
