"""Collocation point strategies and a name registry for configuration files."""

import inspect

from ..errors import ConfigurationError
from .base import Sampler, StepContext, uniform_points
from .baselines import (HammersleySampler, R3Sampler, RADSampler, RandomResampleSampler,
                        RARDSampler, RARGSampler, UniformSampler, hammersley_points)
from .qrdeim import QRDeimRSampler, QRDeimSampler

SAMPLERS = {cls.name: cls for cls in (
    UniformSampler, HammersleySampler, RandomResampleSampler, RARGSampler, RARDSampler,
    RADSampler, R3Sampler, QRDeimSampler, QRDeimRSampler)}


def sampler_parameters(name: str):
    if name not in SAMPLERS:
        raise ConfigurationError(f"unknown sampler {name!r}; expected one of {sorted(SAMPLERS)}")
    sig = inspect.signature(SAMPLERS[name].__init__)
    return {p.name: p.default for p in list(sig.parameters.values())[1:]}


def make_sampler(name: str, **params) -> Sampler:
    allowed = sampler_parameters(name)
    unknown = set(params) - set(allowed)
    if unknown:
        raise ConfigurationError(f"sampler {name!r} does not accept {sorted(unknown)}")
    return SAMPLERS[name](**params)


__all__ = ["Sampler", "StepContext", "uniform_points", "hammersley_points", "SAMPLERS",
           "make_sampler", "sampler_parameters"] + [c.__name__ for c in SAMPLERS.values()]
