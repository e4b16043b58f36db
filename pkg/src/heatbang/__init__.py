"""Spectral null controls and time-optimal controls for the 1-D heat equation
with controls active on a measurable set of times."""

from .timesets import (
    DensitySequence,
    TimeSet,
    build_density_sequence,
    exp_weight_integral,
    measure,
    shift,
    verify_density_sequence,
)
from .spectral import (
    ControlSignal,
    EigenBasis,
    OmegaGramian,
    SpectralState,
    adjoint_solve,
    build_basis,
    evolve_controlled,
    free_evolve,
    omega_gramian,
    project,
)
from .nullcontrol import (
    ConstantsLedger,
    finite_rank_control,
    iterative_null_control,
    practical_schedule,
    schedule_constants,
)

__version__ = "0.1.0"
