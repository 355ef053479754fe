"""Multitype age-dependent branching processes with point-process immigration."""
from .errors import (BadEnvelope, BranchimmError, ConditionViolated, ConfigError, Degenerate,
                     EigenOutOfRange, EmptySample, GridTooCoarse, NonPrimitive,
                     PopulationOverflow, QuadratureFailure, SpecError, TruncationTooLoose, ZeroQ)
from .model import (BranchingSpec, Criticality, DiscreteLaw, build_generator, eigen_convert,
                    generator_matrix, limit_constants, perron_data, single_type)
from .kernels import GinibreGaussian, PoissonIdentity, SpectralExpansion, spectral_cosine
from .point_processes import (DPP, FPP, Cox, HomogeneousPoisson, InhomogeneousPoisson,
                              PointPattern, sample_immigration)
from .laplace import (ClanTransform, TestFunction, empirical_transform, laplace_dpp_fredholm,
                      laplace_dpp_series, laplace_poisson, process_transform)
from .simulation import replicate_rng, simulate_batch, simulate_no_immigration, \
    simulate_with_immigration
from .moments import (conv_asymptote, covariance_with_immigration, mean_with_immigration,
                      moment_report, moments_no_immigration)
from .stats import MCEstimate

__version__ = "0.1.0"
