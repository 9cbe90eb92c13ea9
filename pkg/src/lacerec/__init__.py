"""Solver and numerical certifier for lace-expansion convolution recursions.

The two-point function obeys

    f_{n+1}(k) = sum_{m=1}^{n+1} g_m(k) f_{n+1-m}(k) + e_{n+1}(k),  f_0 = 1,

with coefficients supplied by a model built on a symmetric step kernel.
"""

__version__ = "0.1.0"

from .errors import (BracketError, DegenerateModelError, IncompleteTraceError, InvalidParameterError,
                     LaceRecError, NoConvergenceError, OutOfDomainError, RatioBreakdownError,
                     SymmetryError, TruncationError)
from .kernel import (KernelCertificate, StepKernel, build_uniform_box, certify_assumption_D,
                     default_kgrid, fit_assumption_D, fourier, gap, kernel_from_entries, load_kernel,
                     moment, save_kernel)
from .model import (ModelCoefficients, PureRandomWalk, SyntheticFamilySpec, SyntheticTheta,
                    TabulatedModel, load_xspace_model, pure_random_walk, save_xspace_model,
                    synthetic_theta)
from .engine import (CriticalPoint, LimitConstants, RecursionTrace, constants_Av, critical_point,
                     evolve, evolve_hessian, evolve_values, extract_r, extract_s, intervals,
                     reconstruct_from_s, susceptibility, velocity_sequences, write_trace_csv, zeta,
                     zn_sequence)
from .quadrature import QuadratureSpec, lp_norm_D2f, lp_norms, torus_integrate
from .certifier import (CertificateReport, InductionConfig, Record, check_assumptions_EG,
                        check_conv_lemma, check_fbdsp, check_H1_H4, check_lemma_cA,
                        check_lemma_fder, compute_beta, validate_config)
from .asymptotics import (chi_identity_check, gaussian_profile, hessian_ratio,
                          zc_from_susceptibility)
