"""Exact solvers, explicit bounds and simulation for overloaded queues with abandonment."""
from .model_core import ParamError, QueueParams

__all__ = ["ParamError", "QueueParams"]
__version__ = "0.1.0"
