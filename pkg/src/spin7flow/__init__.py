"""Numerical engine for Spin(7)-structures on flat tori.

Modules: ``tensor`` (dense tensors on ℝ⁸), ``algebra`` (the Cayley form,
metric, diamond operator and form decompositions), ``fields`` (grid fields,
torsion and curvature), ``symbols`` (principal symbols), ``flow`` (gradient
flow, DeTurck modification, variations, solitons), ``io`` and ``cli``.
"""

from .algebra import standard_cayley_form, induced_metric, diamond, decompose_4form
from .fields import Grid, GridField, Geometry, flat_field, perturbed_field
from .flow import FlowConfig, run_flow, energy

__all__ = [
    "standard_cayley_form", "induced_metric", "diamond", "decompose_4form",
    "Grid", "GridField", "Geometry", "flat_field", "perturbed_field",
    "FlowConfig", "run_flow", "energy",
]
