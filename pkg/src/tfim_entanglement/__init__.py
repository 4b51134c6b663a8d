"""Exact diagonalization of the transverse-field Ising model and the
finite-size scaling of its ground-state global entanglement."""

from .eigensolver import GroundStateResult, dense_ground_state, energy_gap, lanczos_ground_state
from .fss import collapse_fit, extrapolate_critical_point, peak_divergence_check
from .hamiltonian import HamiltonianOperator, apply
from .lattice import Edge, LatticeSpec, build_lattice, site_index
from .observables import (
    ObservableSet,
    compute_observables,
    ghz_fidelity,
    global_entanglement,
    information_decomposition,
    n_tangle,
)
from .sweep import PeakEstimate, SolverSettings, SweepPlan, derivative, execute_plan, locate_peak, run_sweep

__version__ = "0.1.0"
