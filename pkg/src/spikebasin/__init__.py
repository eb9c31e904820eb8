"""Parameter-space spike estimation with certified basins of attraction."""

from .errors import SpikeBasinError, VacuousCertificate
from .kernel import GaussianKernel, RadialKernel, gaussian_kernel, kernel_from_spec, sigma_from_k
from .measurement import FourierOperator, apply, compute_D_A_R, draw_random_operator, estimate_rip
from .objective import Objective, noiseless_objective
from .spike_model import GeneralizedDipole, ModelConfig, SpikeTrain, pack, sample_theta, unpack
from .certificates import RipConstants, beta_max_noiseless, beta_max_noisy, estimate_constants
from .solver import DescentSettings, gradient_descent, probe_basin

__version__ = "0.1.0"

__all__ = [
    "SpikeBasinError", "VacuousCertificate", "GaussianKernel", "RadialKernel", "gaussian_kernel",
    "kernel_from_spec", "sigma_from_k", "FourierOperator", "apply", "compute_D_A_R", "draw_random_operator",
    "estimate_rip", "Objective", "noiseless_objective", "GeneralizedDipole", "ModelConfig", "SpikeTrain",
    "pack", "sample_theta", "unpack", "RipConstants", "beta_max_noiseless", "beta_max_noisy",
    "estimate_constants", "DescentSettings", "gradient_descent", "probe_basin", "__version__",
]
