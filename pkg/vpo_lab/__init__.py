"""vpo-lab: online video preference optimization on a toy trajectory world."""

__version__ = "0.1.0"
