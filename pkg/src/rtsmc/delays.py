"""Discrete delay and generation-time distributions.

Continuous parametric delay distributions (gamma, lognormal, weibull) are
discretised onto integer day bins, truncated at a per-bin mass threshold,
and renormalised.  The resulting `DelayPMF` values are the generation-time
weights and observation kernels used everywhere else in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import EmptySupport, InvalidSpec

FAMILIES = ("gamma", "lognormal", "weibull")

# Sub-steps per day for the midpoint quadrature of the continuous density.
QUAD_STEPS_PER_DAY = 1000

DEFAULT_MAX_SPAN = 60
DEFAULT_THRESHOLD = 0.1

SUM_TOL = 1e-9


@dataclass(frozen=True)
class ContinuousDelaySpec:
    """A continuous delay distribution.

    Parameter meaning depends on the family: gamma and weibull take
    (shape, scale); lognormal takes (log-mean, log-sd).
    """

    family: str
    param1: float
    param2: float

    def __post_init__(self):
        fam = self.family.lower()
        if fam not in FAMILIES:
            raise InvalidSpec(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "family", fam)
        if not (self.param1 > 0 and self.param2 > 0):
            raise InvalidSpec(
                f"parameters must be positive, got ({self.param1}, {self.param2})"
            )

    def _dist(self):
        if self.family == "gamma":
            return stats.gamma(a=self.param1, scale=self.param2)
        if self.family == "lognormal":
            return stats.lognorm(s=self.param2, scale=np.exp(self.param1))
        return stats.weibull_min(c=self.param1, scale=self.param2)

    def pdf(self, x):
        return self._dist().pdf(x)

    def mean(self) -> float:
        return float(self._dist().mean())


@dataclass(frozen=True)
class DelayPMF:
    """Probability mass over integer day offsets.

    Entry ``probs[i]`` is the mass at day ``offset_start + i``.  ``span``
    is the largest day carrying mass (the maximum lag of the kernel).
    """

    offset_start: int
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise InvalidSpec("probs must be a non-empty 1-d vector")
        if self.offset_start < 0:
            raise InvalidSpec("offset_start must be >= 0")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise InvalidSpec("probs must be finite and non-negative")
        if probs.sum() <= 0:
            raise InvalidSpec("probs must carry positive total mass")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def span(self) -> int:
        return self.offset_start + len(self.probs) - 1

    @property
    def days(self) -> np.ndarray:
        return np.arange(self.offset_start, self.span + 1)

    def mean(self) -> float:
        return float(np.dot(self.days, self.probs) / self.probs.sum())

    def total(self) -> float:
        return float(self.probs.sum())

    @classmethod
    def point_mass(cls, day: int) -> "DelayPMF":
        return cls(offset_start=day, probs=np.array([1.0]))


def _bin_masses(spec: ContinuousDelaySpec, max_span: int) -> np.ndarray:
    """Mass per day bin [k, k+1), k = 0..max_span, by midpoint quadrature."""
    n = QUAD_STEPS_PER_DAY
    x = (np.arange((max_span + 1) * n) + 0.5) / n
    dens = spec.pdf(x)
    return dens.reshape(max_span + 1, n).sum(axis=1) / n


def discretize(
    spec: ContinuousDelaySpec,
    threshold: float = DEFAULT_THRESHOLD,
    normalize: bool = True,
    max_span: int = DEFAULT_MAX_SPAN,
) -> DelayPMF:
    """Discretise a continuous delay distribution onto day bins.

    Day-bin mass is the integral of the density over [k, k+1).  Bins with
    mass below ``threshold`` are discarded; of the survivors only the
    contiguous run containing the modal bin is kept, then renormalised.

    Raises ``EmptySupport`` when no bin reaches the threshold.
    """
    if not 0 <= threshold < 1:
        raise InvalidSpec(f"threshold must be in [0, 1), got {threshold}")
    masses = _bin_masses(spec, max_span)
    if threshold == 0:
        lo, hi = 0, max_span
    else:
        surviving = masses >= threshold
        if not surviving.any():
            raise EmptySupport(
                f"no day bin of {spec.family}({spec.param1}, {spec.param2}) "
                f"reaches mass {threshold}"
            )
        mode = int(np.argmax(masses))
        lo = mode
        while lo > 0 and surviving[lo - 1]:
            lo -= 1
        hi = mode
        while hi < max_span and surviving[hi + 1]:
            hi += 1
    kept = masses[lo : hi + 1]
    if normalize:
        kept = kept / kept.sum()
    return DelayPMF(offset_start=lo, probs=kept)


def convolve(a: DelayPMF, b: DelayPMF) -> DelayPMF:
    """Discrete convolution of two delay PMFs.

    The result starts at the sum of the input offsets and is renormalised
    to absorb floating-point drift.
    """
    probs = np.convolve(a.probs, b.probs)
    return DelayPMF(offset_start=a.offset_start + b.offset_start, probs=probs / probs.sum())


def min_delay(p: DelayPMF) -> int:
    """Smallest day offset carrying mass (the minimum observable delay d)."""
    return p.offset_start
