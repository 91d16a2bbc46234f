"""Dissatisfaction and cohesion fields of TU games and the flow that drives payoffs into the core."""

__version__ = "0.1.0"

from .audit import AuditReport, ProbeSummary, audit_lyapunov, realm_probe, tail_consistency
from .corelp import (CoreReport, EmptyCore, NonConvergence, contains_balanced, core_membership,
                     core_nonempty, distance_to_core, epsilon_core_membership, eta_zero_check,
                     is_balanced, least_core, project_to_core)
from .estimator import CohesionFlow
from .fields import (CoalitionCollection, RegionAffine, aggrieved, cohesion, dissatisfaction,
                     fd_gradient, lie_derivative, region_affine, region_lipschitz, same_region,
                     weighted_cohesion)
from .fileio import GameFileError, load_game, load_trajectory, save_game, save_trajectory
from .flow import (FlowConfig, FlowError, Status, Trajectory, integrate, integrate_adaptive,
                   integrate_exact, integrate_rk4)
from .game import (Game, GameError, as_preimputation, eta, excess, excesses, gen_random,
                   gen_symmetric, normalize, payment, project_to_X)
from .relations import OutvoteWitness, check_theta_compat, dominates, outvotes
from .simplex import LpResult
