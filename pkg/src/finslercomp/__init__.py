"""Numerical Finsler geometry for comparison theorems: metrics, geodesics,
conormal frames, transverse Jacobi fields, volumes and bound calculators."""
from . import _jaxcfg  # noqa: F401  (float64, CPU, compilation cache)
from .chart import Chart, Flag, TangentObject, covector, vector
from .errors import *  # noqa: F401,F403
from .metric import (
    MetricSpec,
    cartan_tensor,
    chern_coefficients,
    chern_curvature,
    eval_norm,
    flag_curvature,
    fundamental_tensor,
    reversibility,
    ricci,
    riemann_curvature,
    spray,
    t_curvature,
    uniformity,
)
from .legendre import dual_norm, dual_tensor, legendre, legendre_inverse
from .geodesic import exp_map, integrate_geodesic, parallel_transport
from .submanifold import SubmanifoldSpec, conormal_sphere_point, co_mean_curvature, co_second_fundamental, co_weingarten
from .jacobi import check_theorem_4_8, focal_value, index_form, solve_A
from .volume import bh_density, conormal_sphere_measure, distortion, ht_density, s_curvature, total_volume
from . import bounds, models, randers

__version__ = "0.1.0"
