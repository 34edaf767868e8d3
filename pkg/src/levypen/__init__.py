"""Penalization functionals of recurrent Levy processes, verified by Monte Carlo.

The package computes, from numerical Fourier inversion, the objects that
drive local-time penalization and conditioning to avoid points:
resolvent densities, the renormalized zero resolvent and its directional
tilts, expected local times before hits, exit-order probabilities, and
the martingale factors of the three weight regimes.  A simulation layer
with exact increment laws and occupation local times backs a statistical
harness that checks every closed form against paths.
"""

from .models import (LevyModel, brownian, check_condition_a, jump_diffusion,
                     psi, sample_increment, symmetric_stable)
from .pathsim import (ExponentialClock, HitDetector, HittingClock,
                      InverseLocalTimeClock, MCConfig, Path, SimGrid,
                      TwoPointHittingClock, first_hitting, inverse_local_time,
                      realize_clock, simulate_path)
from .penalization import (PathState, PenalizationParams, estimate_decay_rate,
                           inverse_clock_martingale_value,
                           local_time_until_either_hit, local_time_until_hit,
                           martingale_factor, martingale_value, prob_hit_before,
                           weight_value)
from .resolvent import (QuadratureConfig, ZeroLimitConfig, resolvent_density,
                        resolvent_gap, tilted_zero_resolvent, zero_resolvent,
                        zero_resolvent_fn)

__version__ = "0.1.0"

__all__ = [
    "LevyModel", "brownian", "symmetric_stable", "jump_diffusion",
    "psi", "sample_increment", "check_condition_a",
    "QuadratureConfig", "ZeroLimitConfig",
    "resolvent_density", "resolvent_gap", "zero_resolvent",
    "tilted_zero_resolvent", "zero_resolvent_fn",
    "PenalizationParams", "PathState",
    "local_time_until_hit", "local_time_until_either_hit", "prob_hit_before",
    "martingale_factor", "martingale_value", "weight_value",
    "inverse_clock_martingale_value", "estimate_decay_rate",
    "SimGrid", "MCConfig", "Path",
    "ExponentialClock", "HittingClock", "TwoPointHittingClock",
    "InverseLocalTimeClock", "HitDetector",
    "simulate_path", "first_hitting", "inverse_local_time", "realize_clock",
    "__version__",
]
