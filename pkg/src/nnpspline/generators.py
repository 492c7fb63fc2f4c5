"""Seeded synthetic data from the density families used in the experiments.

Families and their parameters (defaults in brackets):

``poisson_pmf``  ``mean`` [20]
    ``mean^x exp(-mean) / x!``, extended to real ``x >= 0`` through the
    gamma function and zero for ``x < 0``.
``gamma_pdf``    ``alpha`` shape [2], ``beta`` scale [2]
``weibull_pdf``  ``alpha`` shape [1], ``beta`` scale [1.5]
``pareto_pdf``   ``alpha`` shape [1], ``b`` scale [1]

Noise is Gaussian with standard deviation ``noise`` drawn from
``numpy.random.default_rng(seed)``.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .exceptions import DomainError

__all__ = ["FAMILIES", "GeneratorSpec", "density", "generate"]

FAMILIES = {
    "poisson_pmf": {"mean": 20.0},
    "gamma_pdf": {"alpha": 2.0, "beta": 2.0},
    "weibull_pdf": {"alpha": 1.0, "beta": 1.5},
    "pareto_pdf": {"alpha": 1.0, "b": 1.0},
}


def _poisson(x, mean):
    out = np.zeros_like(x)
    pos = x >= 0
    xp = x[pos]
    out[pos] = np.exp(xp * math.log(mean) - mean - gammaln(xp + 1.0))
    return out


def density(family, x, **params) -> np.ndarray:
    """Noise-free values of ``family`` at ``x``; missing parameters take their defaults."""
    if family not in FAMILIES:
        raise DomainError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    p = _resolve(family, params)
    x = np.asarray(x, dtype=float)
    if family == "poisson_pmf":
        return _poisson(x, p["mean"])
    if family == "gamma_pdf":
        return stats.gamma.pdf(x, a=p["alpha"], scale=p["beta"])
    if family == "weibull_pdf":
        return stats.weibull_min.pdf(x, c=p["alpha"], scale=p["beta"])
    return stats.pareto.pdf(x, b=p["alpha"], scale=p["b"])


def _resolve(family, params) -> dict:
    defaults = FAMILIES[family]
    unknown = set(params) - set(defaults)
    if unknown:
        raise DomainError(f"{family} has no parameter(s) {', '.join(sorted(unknown))}")
    p = {k: float(params.get(k, v)) for k, v in defaults.items()}
    for k, v in p.items():
        if not (v > 0 and math.isfinite(v)):
            raise DomainError(f"{family} parameter {k} must be positive and finite, got {v}")
    return p


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    """What to sample: family, parameters, abscissae, noise level and seed."""

    family: str
    x: np.ndarray
    params: dict = field(default_factory=dict)
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown family {self.family!r}; choose from {', '.join(FAMILIES)}")
        object.__setattr__(self, "params", _resolve(self.family, dict(self.params)))
        x = np.asarray(self.x, dtype=float).ravel()
        if not np.all(np.isfinite(x)):
            raise DomainError("sample abscissae must be finite")
        if self.family == "pareto_pdf" and np.any(x < self.params["b"]):
            raise DomainError(f"pareto_pdf is defined for x >= b = {self.params['b']}")
        object.__setattr__(self, "x", x)
        if not (self.noise >= 0 and math.isfinite(self.noise)):
            raise DomainError(f"noise must be a finite nonnegative number, got {self.noise}")

    @classmethod
    def on_range(cls, family, lo, hi, count, **kw):
        """Spec with ``count`` equally spaced abscissae on ``[lo, hi]``."""
        if count < 0:
            raise DomainError("count must be nonnegative")
        if count > 1 and not lo < hi:
            raise DomainError(f"need lo < hi, got {lo}:{hi}")
        return cls(family, np.linspace(lo, hi, int(count)), **kw)


def generate(spec: GeneratorSpec):
    """Return ``(x, y)`` with ``y = density + noise``."""
    rng = np.random.default_rng(spec.seed)
    y = density(spec.family, spec.x, **spec.params)
    if spec.noise > 0:
        y = y + spec.noise * rng.standard_normal(spec.x.size)
    return spec.x.copy(), y
