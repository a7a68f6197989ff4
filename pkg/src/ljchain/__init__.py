"""Random Lennard-Jones chains: exact discrete minima and their continuum limit."""

from .energy import (BoundaryProgram, DeformationField, DisplacementField, energy_deformation,
                     energy_rescaled, gamma_n, rescale_deformation, unscale_displacement)
from .ensemble import (ChainRealization, Ensemble, beta_infimum, empirical_average, empirical_indicator_cdf,
                       expectation_inverse_stiffness, homogeneous, iid, markov, periodic, sample_realization,
                       window_infimum_beta_n)
from .homogenize import (LimitPrediction, LimitProfile, RecoverySequence, build_recovery_sequence,
                         convergence_study, l1_distance, limit_energy, predict_limit)
from .minimize import (JumpReport, MinimizationResult, detect_jumps, minimize_global, oracle_grid_dp,
                       solve_elastic)
from .potentials import (ClassParams, PotentialDescriptor, PotentialSpec, describe, evaluate, find_minimizer,
                         morse, shifted_quadratic, stiffness, tabulated, third_derivative_bound, twelve_six,
                         validate_class)

__version__ = "0.1.0"
