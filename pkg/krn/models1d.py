"""Continuous one-dimensional measures and kernels (Gaussian family)."""

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import erfc

from errors import InvalidArgument

SQRT2 = math.sqrt(2.0)


def standard_normal_cdf(z):
    return 0.5 * erfc(-np.asarray(z, dtype=float) / SQRT2)


def standard_normal_sf(z):
    return 0.5 * erfc(np.asarray(z, dtype=float) / SQRT2)


def _format_param(value: float) -> str:
    short = format(value, "g")
    return short if float(short) == value else repr(value)


@dataclass(frozen=True)
class Descriptor:
    """Family tag plus parameters, printable as ``tag:p1:p2``"""

    tag: str
    params: Tuple[float, ...]

    def __str__(self) -> str:
        return ":".join([self.tag, *(_format_param(p) for p in self.params)])


@dataclass(frozen=True)
class Measure1D:
    """A probability distribution on the real line given by its CDF"""

    cdf: Callable[[np.ndarray], np.ndarray]
    descriptor: Descriptor
    density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    sf: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def survival(self, t):
        if self.sf is not None:
            return self.sf(t)
        return 1.0 - self.cdf(t)

    def interval_mass(self, a, b):
        """Mass of (a, b], using the survival function in the upper tail"""
        a, b = np.broadcast_arrays(
            np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        )
        lower = self.cdf(a)
        via_cdf = self.cdf(b) - lower
        via_sf = self.survival(a) - self.survival(b)
        return np.maximum(np.where(lower <= 0.5, via_cdf, via_sf), 0.0)

    def __str__(self) -> str:
        return str(self.descriptor)


@dataclass(frozen=True)
class KernelModel1D:
    """A family x -> distribution on the real line"""

    at: Callable[[float], Measure1D]
    descriptor: Descriptor
    # Vectorized (xs, lower edges, upper edges) -> probabilities, if available
    grid: Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]] = None

    def interval_probabilities(self, xs, edges) -> np.ndarray:
        """Matrix of K(x)((e_l, e_l+1]) with one row per x and one column per cell"""
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        edges = np.asarray(edges, dtype=float)
        lower, upper = edges[:-1], edges[1:]
        if self.grid is not None:
            return self.grid(xs, lower, upper)
        return np.vstack([self.at(float(x)).interval_mass(lower, upper) for x in xs])

    def __str__(self) -> str:
        return str(self.descriptor)


def _require_variance(variance: float, what: str = "variance"):
    if not (math.isfinite(variance) and variance > 0):
        raise InvalidArgument(
            f"{what} must be a positive finite number, got {variance!r}"
        )


def normal(mean: float, variance: float) -> Measure1D:
    """Normal distribution N(mean, variance)"""
    if not math.isfinite(mean):
        raise InvalidArgument(f"mean must be finite, got {mean!r}")
    _require_variance(variance)
    mean, variance = float(mean), float(variance)
    sd = math.sqrt(variance)
    norm = 1.0 / math.sqrt(2.0 * math.pi * variance)

    def cdf(t):
        return standard_normal_cdf((np.asarray(t, dtype=float) - mean) / sd)

    def sf(t):
        return standard_normal_sf((np.asarray(t, dtype=float) - mean) / sd)

    def density(t):
        t = np.asarray(t, dtype=float)
        return norm * np.exp(-((t - mean) ** 2) / (2.0 * variance))

    return Measure1D(
        cdf=cdf,
        descriptor=Descriptor("normal", (mean, variance)),
        density=density,
        sf=sf,
    )


def gaussian_kernel(variance: float) -> KernelModel1D:
    """The kernel x -> N(x, variance)"""
    _require_variance(variance)
    variance = float(variance)
    sd = math.sqrt(variance)

    def grid(xs, lower, upper):
        z_lower = (lower[None, :] - xs[:, None]) / sd
        z_upper = (upper[None, :] - xs[:, None]) / sd
        via_cdf = standard_normal_cdf(z_upper) - standard_normal_cdf(z_lower)
        via_sf = standard_normal_sf(z_lower) - standard_normal_sf(z_upper)
        return np.maximum(np.where(z_lower > 0, via_sf, via_cdf), 0.0)

    return KernelModel1D(
        at=lambda x: normal(x, variance),
        descriptor=Descriptor("gaussian_kernel", (variance,)),
        grid=grid,
    )


def exact_gaussian_posterior(
    prior_mean: float, prior_var: float, like_var: float, obs: float
) -> Measure1D:
    """Conjugate posterior of a normal prior under a normal likelihood"""
    _require_variance(prior_var, "prior variance")
    _require_variance(like_var, "likelihood variance")
    variance = 1.0 / (1.0 / prior_var + 1.0 / like_var)
    mean = variance * (prior_mean / prior_var + obs / like_var)
    return normal(mean, variance)


def posterior_tail_query(posterior: Measure1D, threshold: float) -> float:
    """Probability that the posterior exceeds the threshold"""
    return float(posterior.survival(threshold))


def parse_measure(text: str) -> Measure1D:
    """Parse a descriptor string such as ``normal:0:1``"""
    parts = text.strip().split(":")
    if parts[0] != "normal" or len(parts) != 3:
        raise InvalidArgument(f"expected normal:<mean>:<variance>, got {text!r}")
    try:
        mean, variance = float(parts[1]), float(parts[2])
    except ValueError:
        raise InvalidArgument(f"non-numeric parameters in {text!r}") from None
    return normal(mean, variance)
