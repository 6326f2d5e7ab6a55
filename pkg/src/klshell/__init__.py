"""Multi-patch isogeometric Kirchhoff-Love shell solver."""

from .errors import (
    DegenerateGeometryError,
    DomainError,
    KLShellError,
    MaterialFailureError,
    ModelError,
    NonConvergenceError,
    SolverError,
    ValidationError,
)
from .materials import (
    ElasticParams,
    HardeningLaw,
    J2Plasticity,
    NeoHookean,
    PlasticHistory,
    StVenantKirchhoff,
)
from .model import ArcLengthSettings, Model, NewtonSettings
from .solve import arc_length_run, newton_run
from .splines import KnotVector, NurbsPatch

__version__ = "0.1.0"

__all__ = [
    "ArcLengthSettings", "DegenerateGeometryError", "DomainError",
    "ElasticParams", "HardeningLaw", "J2Plasticity", "KLShellError",
    "KnotVector", "MaterialFailureError", "Model", "ModelError",
    "NeoHookean", "NewtonSettings", "NonConvergenceError", "NurbsPatch",
    "PlasticHistory", "SolverError", "StVenantKirchhoff", "ValidationError",
    "arc_length_run", "newton_run",
]
