"""Numerical Livsic theory for matrix cocycles over hyperbolic base systems."""
from .base_systems import (ClosingSpec, DenseOrbitNet, RationalPoint, ShadowingTriple,
                           SymbolicPoint, SymbolicSystem, ToralSystem, cat_map, close_pseudo_return,
                           dense_net, enumerate_periodic, find_pseudo_returns, full_shift,
                           golden_mean_shift, sample_orbit, sample_pseudo_returns,
                           system_from_spec, verify_shadowing)
from .cocycle import (FAMILIES, CocycleGenerator, estimate_holder, generator_from_spec,
                      make_coboundary, make_family, product, verify_cocycle_identity)
from .errors import (AuditRefusal, CocycleLabError, ConfigError, CoverageError,
                     DegenerateSpectrumError, EnumerationLimitError, PreconditionError,
                     SingularMatrixError, WindowExhaustedError)
from .kernels import BACKEND
from .lyapunov import (LyapunovMetric, LyapunovSpectrum, oseledets_splitting, periodic_spectrum,
                       regularity_constant, spectrum_qr, spectrum_via_compounds,
                       verify_lyapunov_inequalities)
from .matrix_kit import (ScaledMatrix, check_perturbation_bound, compound, distance_to_identity,
                         eigen_moduli, group_distance, operator_norm)
from .rigidity import (approximate_exponents_by_periodic, audit_periodic_data,
                       boundedness_audit, find_uniform_time, shadowing_residual, shadowing_sweep,
                       verify_growth_bound)
from .transfer import (TransferFunction, build_transfer, evaluate_transfer,
                       holder_estimate_transfer, load_transfer, mesh_sweep, save_transfer,
                       subgroup_check, uniqueness_check, verify_coboundary)

__version__ = "0.1.0"
