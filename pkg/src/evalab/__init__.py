"""Monte-Carlo testbed for whether cheap scores track generative-model metrics."""

__version__ = "0.1.0"

from .distributions import (  # noqa: E402
    Dataset,
    DiscreteDistribution,
    coverage_profile,
    empirical_distribution,
    hellinger_sq,
    kl,
    make_distribution,
    point_mass,
    renyi,
    restricted_kl,
    sample,
    tv,
    uniform,
)
from .errors import EvalabError, Infeasible, InvalidInput  # noqa: E402
from .families import FunctionFamily, fat_shattering_dim, ipm_exact, vc_dimension  # noqa: E402

__all__ = [
    "__version__",
    "Dataset",
    "DiscreteDistribution",
    "EvalabError",
    "FunctionFamily",
    "Infeasible",
    "InvalidInput",
    "coverage_profile",
    "empirical_distribution",
    "fat_shattering_dim",
    "hellinger_sq",
    "ipm_exact",
    "kl",
    "make_distribution",
    "point_mass",
    "renyi",
    "restricted_kl",
    "sample",
    "tv",
    "uniform",
    "vc_dimension",
]
