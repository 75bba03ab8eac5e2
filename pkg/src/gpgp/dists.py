"""The five primitive prior families used by the scene programs.

Values are plain Python scalars: ``bool`` for Bernoulli, ``int`` for
UniformDiscrete and ``float`` for the continuous families. ``log_density``
never raises; anything outside the support scores ``-inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError

NEG_INF = float("-inf")


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ParameterError(f"Bernoulli p must lie in [0, 1], got {self.p}")

    enumerable = True

    def sample(self, rng):
        return bool(rng.random() < self.p)

    def log_density(self, value):
        if value is True or value == 1:
            return math.log(self.p) if self.p > 0 else NEG_INF
        if value is False or value == 0:
            return math.log1p(-self.p) if self.p < 1 else NEG_INF
        return NEG_INF

    def support(self):
        return (False, True)


@dataclass(frozen=True)
class UniformDiscrete:
    """Uniform over the integers lo..hi, both ends included."""

    lo: int
    hi: int

    def __post_init__(self):
        if int(self.lo) != self.lo or int(self.hi) != self.hi:
            raise ParameterError("UniformDiscrete bounds must be integers")
        if self.lo > self.hi:
            raise ParameterError(f"UniformDiscrete needs lo <= hi, got {self.lo} > {self.hi}")

    enumerable = True

    @property
    def size(self):
        return self.hi - self.lo + 1

    def sample(self, rng):
        return int(rng.integers(self.lo, self.hi + 1))

    def log_density(self, value):
        if isinstance(value, bool):
            return NEG_INF
        try:
            if value != int(value):
                return NEG_INF
        except (TypeError, ValueError, OverflowError):
            return NEG_INF
        if self.lo <= value <= self.hi:
            return -math.log(self.size)
        return NEG_INF

    def support(self):
        return tuple(range(self.lo, self.hi + 1))


@dataclass(frozen=True)
class UniformContinuous:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ParameterError(f"UniformContinuous needs lo < hi, got [{self.lo}, {self.hi}]")

    enumerable = False

    def sample(self, rng):
        return float(rng.uniform(self.lo, self.hi))

    def log_density(self, value):
        if self.lo <= value <= self.hi:
            return -math.log(self.hi - self.lo)
        return NEG_INF


def _log_power(x, exponent):
    # x**exponent in log space, with 0**0 = 1
    if exponent == 0:
        return 0.0
    if x == 0:
        return NEG_INF if exponent > 0 else math.inf
    return exponent * math.log(x)


@dataclass(frozen=True)
class ScaledBeta:
    """``scale * Beta(a, b)``, supported on [0, scale]."""

    scale: float
    a: float
    b: float

    def __post_init__(self):
        if not (self.scale > 0 and self.a > 0 and self.b > 0):
            raise ParameterError(
                f"ScaledBeta needs scale, a, b > 0, got ({self.scale}, {self.a}, {self.b})"
            )

    enumerable = False

    @property
    def mean(self):
        return self.scale * self.a / (self.a + self.b)

    def sample(self, rng):
        return float(self.scale * rng.beta(self.a, self.b))

    def log_density(self, value):
        if not 0.0 <= value <= self.scale:
            return NEG_INF
        u = value / self.scale
        log_beta = math.lgamma(self.a) + math.lgamma(self.b) - math.lgamma(self.a + self.b)
        return (
            _log_power(u, self.a - 1)
            + _log_power(1.0 - u, self.b - 1)
            - log_beta
            - math.log(self.scale)
        )


@dataclass(frozen=True)
class Gamma:
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ParameterError(f"Gamma needs shape, rate > 0, got ({self.shape}, {self.rate})")

    enumerable = False

    def sample(self, rng):
        return float(rng.gamma(self.shape, 1.0 / self.rate))

    def log_density(self, value):
        if value < 0:
            return NEG_INF
        return (
            self.shape * math.log(self.rate)
            - math.lgamma(self.shape)
            + _log_power(value, self.shape - 1)
            - self.rate * value
        )


DistSpec = Bernoulli | UniformDiscrete | UniformContinuous | ScaledBeta | Gamma
FAMILIES = (Bernoulli, UniformDiscrete, UniformContinuous, ScaledBeta, Gamma)


def sample_prior(dist, rng):
    """Draw one value from ``dist`` using the numpy Generator ``rng``."""
    return dist.sample(rng)


def log_density(dist, value):
    try:
        return dist.log_density(value)
    except TypeError:
        return NEG_INF


def is_enumerable(dist):
    return dist.enumerable
