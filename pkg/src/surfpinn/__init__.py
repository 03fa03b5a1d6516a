"""
surfpinn - physics-informed neural networks for elliptic PDEs on closed surfaces

Solves a Δ_S u - b·∇_S u + c u = f on spheres, tori and other closed surfaces
given as level sets or parametric charts. Surface operators are assembled from
the network's Euclidean value, gradient and Hessian; training uses L-BFGS on
the mean squared collocation residual.
"""

__version__ = "0.1.0"

from .exceptions import SurfPinnError
from .geometry import available_surfaces, get_surface
from .harness import ExperimentConfig, load_config, run_experiment
from .net import MlpParams, forward, forward_jet, xavier_init
from .optim import LbfgsConfig, minimize, multi_seed_train
from .pde import manufactured_problem
from .sampling import PointSet, quasi_uniform_points, random_subset

__all__ = [
    "SurfPinnError",
    "ExperimentConfig",
    "LbfgsConfig",
    "MlpParams",
    "PointSet",
    "available_surfaces",
    "forward",
    "forward_jet",
    "get_surface",
    "load_config",
    "manufactured_problem",
    "minimize",
    "multi_seed_train",
    "quasi_uniform_points",
    "random_subset",
    "run_experiment",
    "xavier_init",
]
