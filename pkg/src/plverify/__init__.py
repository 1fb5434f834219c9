"""Complete verifier for piecewise-linear neural networks.

Decides Boolean properties over network outputs on box input domains by
branch-and-bound with LP relaxations, a big-M MIP family, and an exhaustive
activation-pattern oracle for ground truth.
"""

from .canon import AllClause, AnyClause, Geq, VerificationProblem, canonicalize, validate_counterexample
from .model import BoxDomain, Linear, MaxPool, Network, Relu, forward_eval, validate_network

__all__ = [
    "AllClause",
    "AnyClause",
    "BoxDomain",
    "Geq",
    "Linear",
    "MaxPool",
    "Network",
    "Relu",
    "VerificationProblem",
    "canonicalize",
    "forward_eval",
    "validate_counterexample",
    "validate_network",
]

__version__ = "0.1.0"
