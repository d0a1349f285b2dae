"""PINN training with QR-DEIM adaptive collocation and baseline samplers."""

from .autodiff import (DerivativeBundle, DerivativeRequest, NetworkConfig, NetworkParams,
                       evaluate, input_derivatives, parameter_gradient)
from .errors import ConfigurationError, NumericalError
from .pinn import AdamState, RunRecord, TrainConfig, adam_step, cosine_lr, init_network, train
from .problems import PROBLEM_NAMES, get_problem, relative_l2, residual, transformed_output
from .reference import GridSpec, cached_reference, reference_solution
from .samplers import SAMPLERS, make_sampler

__version__ = "0.1.0"
