"""Structure-preserving model reduction of linear port-Hamiltonian systems
with rigorous a-posteriori error bounds."""

__version__ = "0.1.0"

from .basisgen import (Basis, SnapshotSet, alp_basis_from_errors, collect_error_snapshots,
                       extend_hierarchical, make_basis, pod_state, solve_fom)
from .bounds import (BoundSeries, Prop1Report, ResidualSeries, alp_bound, certify_prop1,
                     effectivity, effectivity_floor, hierarchical_bound, log_norm_constant,
                     primal_residual_norms, standard_bound, true_error_series)
from .integrators import (GeneralizedLTI, TimeGrid, Trajectory, integrate_series, solve,
                          solve_expm_oracle, solve_exponential, solve_implicit_midpoint)
from .phcore import (DescriptorPHSystem, PHSystem, SinusoidInput, TabulatedInput, ZeroInput,
                     check_dissipation_inequality, descriptor_to_standard, energy_norm,
                     energy_norms, energy_operator_norm, hamiltonian, validate_ph_structure)
from .projection import (Projector, ReducedPHSystem, apply_projector, lift, reduce,
                         reduced_error_system)

__all__ = [name for name in dir() if not name.startswith("_")]
