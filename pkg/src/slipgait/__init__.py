"""Bipedal walking under foot slip with virtual holonomic and nonholonomic constraints."""
from ._backend import BACKEND
from .dynamics import BipedModel, ContactForces, ModelParams, State

__version__ = "0.1.0"

__all__ = ["BACKEND", "BipedModel", "ContactForces", "ModelParams", "State", "__version__"]
