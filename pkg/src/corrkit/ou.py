"""Scalar Ornstein-Uhlenbeck primitive shared by the trend and diffusion models."""

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import ParameterError
from .rng import stream


@dataclass(frozen=True)
class OuParams:
    """Mean-reverting scalar process.

    ``relaxation_periods`` is the mean-reversion time (the inverse of the
    reversion rate) in periods; ``stationary_std`` the standard deviation of
    the stationary law.
    """

    relaxation_periods: float
    stationary_std: float
    long_run_mean: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.relaxation_periods) or self.relaxation_periods <= 0:
            raise ParameterError("relaxation_periods must be > 0")
        if not np.isfinite(self.stationary_std) or self.stationary_std < 0:
            raise ParameterError("stationary_std must be >= 0")
        if not np.isfinite(self.long_run_mean):
            raise ParameterError("long_run_mean must be finite")

    @property
    def persistence(self):
        """One-step autoregressive coefficient ``exp(-1 / relaxation)``."""
        return float(np.exp(-1.0 / self.relaxation_periods))

    @property
    def innovation_std(self):
        a = self.persistence
        return float(self.stationary_std * np.sqrt(1.0 - a * a))


def ou_filter(shocks, params, x0=None):
    """Run the exact OU recursion over standard-normal ``shocks``.

    ``shocks`` may be 1-d or 2-d (time along axis 0). When ``x0`` is None the
    first value is drawn from the stationary law using ``shocks[0]``.
    """
    shocks = np.asarray(shocks, dtype=float)
    a = params.persistence
    m = params.long_run_mean
    if x0 is None:
        start = params.stationary_std * shocks[0]
    else:
        start = np.asarray(x0, dtype=float) - m
    out = np.empty_like(shocks)
    out[0] = start
    if len(shocks) > 1:
        drive = params.innovation_std * shocks[1:]
        zi = np.asarray(a * start, dtype=float)
        if drive.ndim == 1:
            out[1:] = lfilter([1.0], [1.0, -a], drive, zi=np.atleast_1d(zi))[0]
        else:
            zi = np.broadcast_to(zi, drive.shape[1:])[np.newaxis, ...]
            out[1:] = lfilter([1.0], [1.0, -a], drive, axis=0, zi=zi)[0]
    return out + m


def simulate_ou(params, n_steps, seed, x0=None):
    """Simulate ``n_steps`` values of an OU process with a stationary start.

    Uses the exact discretization
    ``x[t+1] = m + (x[t] - m) e^{-1/tau} + s sqrt(1 - e^{-2/tau}) xi[t]``,
    so there is no step-size bias.
    """
    if int(n_steps) < 1:
        raise ParameterError("n_steps must be >= 1")
    shocks = stream(seed, "ou").standard_normal(int(n_steps))
    return ou_filter(shocks, params, x0=x0)
