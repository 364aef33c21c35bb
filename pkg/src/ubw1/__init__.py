"""Unbalanced Wasserstein-1 transport on finite metric spaces.

Static solver with mass-change penalties, the growth-flow link to dynamic
penalties, reconstruction of a dynamic profile from a static one, a two-site
closed-form solver and dynamic optimizer assembly.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .hfunc import HFunction, PiecewiseLinear  # noqa: E402
from .measures import Coupling, DiscreteMeasure, MetricSpace, marginals, w1_distance  # noqa: E402
from .discrepancy import LocalDiscrepancy, catalog, cs_eval, custom_pwl, no_dynamic_example, supporting_points  # noqa: E402
from .flow import DynamicPenalty, cd_eval, dynamic_catalog, flow, h_s_from_dynamic, inverse_flow  # noqa: E402
from .reconstruction import check_conditions, decide_dynamic, emit_profile, reconstruct  # noqa: E402
from .transport import (  # noqa: E402
    TransportSolution,
    canonicalize,
    max_transport_distances,
    solve_static,
    verify_structure,
)
from .dirac import DiracInstance, DiracSolution, intercept_for_length, phase_diagram, solve_dirac, tangent_split  # noqa: E402
from .dynamic import (  # noqa: E402
    DualPotentialSurface,
    DynamicOptimizer,
    MassTrajectory,
    assemble_dynamic,
    continuity_residual,
    dual_potential,
    mass_trajectory,
    semicoupling_cost,
)
