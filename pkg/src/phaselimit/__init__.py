"""Dressed-state phase shifts of classical light and their spontaneous-emission bound."""
from .bounds import BoundReport, TheoremViolation, audit, snr_limits
from .dressed import DressedFamily, DressedSystem, build_hamiltonian, diagonalize, jacobi_eigh, match_eigenstates
from .dynamics import PreparedState, average_population, evolve, find_return_times
from .explorer import Limits, SearchResult, SweepConfig, random_scheme, search_counterexample, sweep
from .manifold import ManifoldMap, Rejection, solve_offsets
from .phase import hf_derivative, phase_shift, photon_derivative_chain, photon_derivative_fd
from .scheme import (LaserSpec, LevelScheme, LevelSpec, PhysicalSettings, SchemeError, TransitionSpec,
                     derive_optical_params, load_scheme, parse_scheme, serialize_scheme)

__version__ = "0.1.0"
