"""Density-shift collapse walks: simulator, causal sequencer, predictors and signaling analyzer."""

__version__ = "0.1.0"

from .engine import (EnsembleResult, InteractionBlock, InteractionStream, ShiftParams, WalkTrace,  # noqa: E402
                     apply_shift, induced_step, run_collapse, run_fixed_steps, simulate_ensemble)
from .state import (BasisRotation, Bifurcation, EntangledState, born_density, correlate,  # noqa: E402
                    rotate_subsystem, tensor_extend)

__all__ = [
    "__version__",
    "BasisRotation",
    "Bifurcation",
    "EntangledState",
    "EnsembleResult",
    "InteractionBlock",
    "InteractionStream",
    "ShiftParams",
    "WalkTrace",
    "apply_shift",
    "born_density",
    "correlate",
    "induced_step",
    "rotate_subsystem",
    "run_collapse",
    "run_fixed_steps",
    "simulate_ensemble",
    "tensor_extend",
]
