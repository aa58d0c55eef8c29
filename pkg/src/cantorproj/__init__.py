"""Finite-resolution certificates for projections of Cantor sets in R^N."""

from .ball_system import Ball, BallTree, CodedEmbedding, hausdorff_between, reglue_embedding, rho, standard_cantor_in_ball
from .constructions import (
    avoid_isolated_projections,
    avoid_one_point_projections,
    densify_for_L,
    graph_surjection_cantor,
    into_Zk,
    typical_cantor,
    verify_bundle,
)
from .geom_core import finite_general_position_approx, general_position_margin, hausdorff_distance, perturb_to_general_position
from .grassmann import Subspace, gr_distance, gr_net, project, random_subspace
from .projection_cert import (
    components_of_ball_union,
    extract_chain,
    lambda_bruteforce,
    lambda_certified,
    verify_component_bound,
    verify_Zk,
)

__version__ = "0.1.0"
