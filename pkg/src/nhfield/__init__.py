"""Constrained Lagrangian field theories in the k-symplectic setting.

Models are JSON documents (or builtins) holding a Lagrangian and velocity
constraints as expression strings.  The package evaluates the pointwise
geometry, projects free field equations onto the constraint distribution,
integrates mechanical and 1+1 rod systems, and checks momentum balance laws.
"""

__version__ = "0.1.0"

from .errors import NHFieldError
from .model import BUILTINS, FieldPoint, ModelSpec, builtin, load_model, model_from_dict

__all__ = ["__version__", "NHFieldError", "BUILTINS", "FieldPoint", "ModelSpec", "builtin", "load_model", "model_from_dict"]
