"""Service and interarrival time distributions, parameterized in minutes.

Three families are supported: exponential (interarrival processes),
uniform and Gaussian (service processes).  Gaussian variates are
rejection-resampled until strictly positive, so every sample returned
by :meth:`ServiceDistribution.sample` is a positive number of minutes.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from random import Random
from statistics import NormalDist

__all__ = ["ServiceDistribution", "ConfigError"]

_STD_NORMAL = NormalDist()


class ConfigError(ValueError):
    """Invalid distribution or scenario parameters."""


@dataclass(frozen=True)
class ServiceDistribution:
    """A positive time distribution: ``exp``, ``uniform`` or ``gaussian``.

    Parameters are (mean,), (a, b) or (mu, sigma) respectively, all in
    minutes.  Use the class constructors rather than building instances
    by hand.
    """

    kind: str
    p1: float
    p2: float = 0.0

    @classmethod
    def exponential(cls, mean: float) -> "ServiceDistribution":
        if mean <= 0:
            raise ConfigError(f"exponential mean must be > 0, got {mean}")
        return cls("exp", float(mean))

    @classmethod
    def uniform(cls, a: float, b: float) -> "ServiceDistribution":
        if not (0 <= a < b):
            raise ConfigError(f"uniform needs 0 <= a < b, got ({a}, {b})")
        return cls("uniform", float(a), float(b))

    @classmethod
    def gaussian(cls, mu: float, sigma: float) -> "ServiceDistribution":
        if mu <= 0 or sigma <= 0:
            raise ConfigError(f"gaussian needs mu > 0 and sigma > 0, got ({mu}, {sigma})")
        return cls("gaussian", float(mu), float(sigma))

    # -- sampling ------------------------------------------------------

    def sample(self, rng: Random) -> float:
        """Draw one variate.  Gaussian draws <= 0 are discarded and redrawn."""
        if self.kind == "exp":
            return -self.p1 * math.log(1.0 - rng.random())
        if self.kind == "uniform":
            return self.p1 + (self.p2 - self.p1) * rng.random()
        # gaussian, truncated by rejection
        while True:
            x = self.p1 + self.p2 * _STD_NORMAL.inv_cdf(rng.random())
            if x > 0.0:
                return x

    def mean(self) -> float:
        """E[X].  For the truncated Gaussian this is mu (bias ignored)."""
        if self.kind == "exp":
            return self.p1
        if self.kind == "uniform":
            return (self.p1 + self.p2) / 2.0
        return self.p1

    def variance(self) -> float:
        if self.kind == "exp":
            return self.p1 ** 2
        if self.kind == "uniform":
            return (self.p2 - self.p1) ** 2 / 12.0
        return self.p2 ** 2

    # -- cdf/pdf, used by the numerical remaining-time oracle ----------

    def cdf(self, x: float) -> float:
        if self.kind == "exp":
            return 0.0 if x <= 0 else 1.0 - math.exp(-x / self.p1)
        if self.kind == "uniform":
            if x <= self.p1:
                return 0.0
            if x >= self.p2:
                return 1.0
            return (x - self.p1) / (self.p2 - self.p1)
        return NormalDist(self.p1, self.p2).cdf(x)

    def pdf(self, x: float) -> float:
        if self.kind == "exp":
            return 0.0 if x < 0 else math.exp(-x / self.p1) / self.p1
        if self.kind == "uniform":
            return 1.0 / (self.p2 - self.p1) if self.p1 <= x <= self.p2 else 0.0
        return NormalDist(self.p1, self.p2).pdf(x)

    def support_upper(self) -> float:
        """Upper end of the (effective) support, used by the exact oracle."""
        if self.kind == "uniform":
            return self.p2
        if self.kind == "exp":
            return self.p1 * 40.0
        return self.p1 + 8.0 * self.p2

    # -- config round-trip ---------------------------------------------

    def spec(self) -> str:
        if self.kind == "exp":
            return f"exp({self.p1:g})"
        if self.kind == "uniform":
            return f"uniform({self.p1:g},{self.p2:g})"
        return f"gaussian({self.p1:g},{self.p2:g})"

    _PATTERN = re.compile(r"^\s*([a-zA-Z]+)\s*\(\s*([^,()]+?)\s*(?:,\s*([^,()]+?)\s*)?\)\s*$")

    @classmethod
    def parse(cls, text: str) -> "ServiceDistribution":
        """Parse ``exp(9)``, ``uniform(2,5)`` or ``gaussian(0.87,0.21)``."""
        m = cls._PATTERN.match(text)
        if not m:
            raise ConfigError(f"cannot parse distribution {text!r}")
        name = m.group(1).lower()
        try:
            p1 = float(m.group(2))
            p2 = float(m.group(3)) if m.group(3) is not None else None
        except ValueError as exc:
            raise ConfigError(f"bad numeric parameter in {text!r}") from exc
        if name in ("exp", "exponential"):
            if p2 is not None:
                raise ConfigError(f"exponential takes one parameter: {text!r}")
            return cls.exponential(p1)
        if name in ("uniform", "u"):
            if p2 is None:
                raise ConfigError(f"uniform takes two parameters: {text!r}")
            return cls.uniform(p1, p2)
        if name in ("gaussian", "normal", "n"):
            if p2 is None:
                raise ConfigError(f"gaussian takes two parameters: {text!r}")
            return cls.gaussian(p1, p2)
        raise ConfigError(f"unknown distribution kind {name!r}")
