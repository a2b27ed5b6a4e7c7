"""Safe model-based planning toolkit: constrained cross-entropy planning,
Lagrangian constraint controllers, and twohot/symlog value regression on a
2D point-navigation surrogate with hazards."""

__version__ = "0.1.0"
