"""Digitized adiabatic and counterdiabatic dynamics of small spin systems.

Submodules:

* :mod:`trotterheal.linalg`: dense Hermitian linear algebra.
* :mod:`trotterheal.models`: Hamiltonians, collective spins, schedules.
* :mod:`trotterheal.agp`: exact and variational gauge potentials.
* :mod:`trotterheal.evolve`: digitized and reference propagation.
* :mod:`trotterheal.analysis`: frame diagnostics, error models, fits.
* :mod:`trotterheal.cli`: recipes, sweeps and file outputs.
"""

__version__ = "0.1.0"

from .models import ModelSpec, Schedule, build_annealing  # noqa: E402
from .evolve import EvolutionConfig, run_digitized, run_reference, infidelity_series  # noqa: E402

__all__ = [
    "ModelSpec",
    "Schedule",
    "build_annealing",
    "EvolutionConfig",
    "run_digitized",
    "run_reference",
    "infidelity_series",
]
