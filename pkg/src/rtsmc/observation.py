"""Observation process: kernels, expected counts, noise, and likelihoods.

Counts are linked to infections by a convolution over the observation
delay kernel.  Report types differ only in how the kernel is composed:
onset reports use the incubation distribution, confirmed reports add the
onset-to-report delay, death reports use the infection-to-death delay
scaled by the observed mortality rate.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, xlogy

from .delays import DelayPMF, convolve
from .errors import (
    InvalidSpec,
    LengthMismatch,
    MissingComponent,
    NonpositiveVariance,
    WindowTooShort,
)

ONSET = "onset"
CONFIRMED = "confirmed"
DEATH = "death"
KINDS = (ONSET, CONFIRMED, DEATH)

GAUSSIAN = "gaussian"
POISSON = "poisson"

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class ObservationKernel:
    """Delay kernel for one report type.

    ``mortality_scale`` is the observed mortality rate for death reports
    and 1.0 otherwise.
    """

    kind: str
    pmf: DelayPMF
    mortality_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown observation kind {self.kind!r}")
        if not 0 < self.mortality_scale <= 1:
            raise InvalidSpec("mortality_scale must be in (0, 1]")
        if self.kind != DEATH and self.mortality_scale != 1.0:
            raise InvalidSpec("mortality_scale must be 1 for non-death kinds")

    @property
    def min_delay(self) -> int:
        return self.pmf.offset_start

    @property
    def span(self) -> int:
        return self.pmf.span

    @property
    def window_length(self) -> int:
        """Days of infection history needed to produce one observation."""
        return self.pmf.span - self.pmf.offset_start + 1


@dataclass(frozen=True)
class CaseSeries:
    """Daily observed counts on contiguous calendar dates."""

    dates: tuple
    counts: np.ndarray = field(repr=False)
    filled_dates: tuple = ()

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        dates = tuple(self.dates)
        if len(dates) != len(counts) or len(dates) == 0:
            raise LengthMismatch("dates and counts must be non-empty and equal length")
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise InvalidSpec("counts must be finite and non-negative")
        for prev, cur in zip(dates, dates[1:]):
            if (cur - prev).days != 1:
                raise InvalidSpec("dates must be contiguous daily and increasing")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "dates", dates)

    def __len__(self):
        return len(self.counts)

    @classmethod
    def from_day_index(cls, counts, start_date=datetime.date(2020, 1, 1)):
        dates = tuple(start_date + datetime.timedelta(days=i) for i in range(len(counts)))
        return cls(dates=dates, counts=np.asarray(counts, dtype=float))


@dataclass(frozen=True)
class VarianceSeries:
    """Per-day observation-error variance, floored away from zero."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if np.any(values <= 0) or not np.all(np.isfinite(values)):
            raise InvalidSpec("variances must be finite and positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)


def build_kernel(
    kind: str,
    incubation: DelayPMF | None = None,
    onset_to_report: DelayPMF | None = None,
    infection_to_death: DelayPMF | None = None,
    mortality: float | None = None,
) -> ObservationKernel:
    """Assemble the observation kernel for a report type."""
    if kind == ONSET:
        if incubation is None:
            raise MissingComponent("onset kernel requires the incubation distribution")
        return ObservationKernel(kind=ONSET, pmf=incubation)
    if kind == CONFIRMED:
        if incubation is None or onset_to_report is None:
            raise MissingComponent(
                "confirmed kernel requires incubation and onset-to-report distributions"
            )
        return ObservationKernel(kind=CONFIRMED, pmf=convolve(incubation, onset_to_report))
    if kind == DEATH:
        if infection_to_death is None or mortality is None:
            raise MissingComponent(
                "death kernel requires the infection-to-death distribution and a mortality rate"
            )
        return ObservationKernel(kind=DEATH, pmf=infection_to_death, mortality_scale=mortality)
    raise InvalidSpec(f"unknown observation kind {kind!r}")


def observe_mean(j_window, kernel: ObservationKernel):
    """Expected observation from an infection window.

    ``j_window`` holds infections most-recent-last, its final entry being
    the most recent infection observable today (lag = kernel.min_delay).
    A 2-d input is treated as stacked windows, one row per particle.
    """
    window = np.asarray(j_window, dtype=float)
    k = len(kernel.pmf.probs)
    if window.shape[-1] < k:
        raise WindowTooShort(
            f"window of length {window.shape[-1]} shorter than kernel ({k} entries)"
        )
    recent = window[..., window.shape[-1] - k :]
    return kernel.mortality_scale * (recent @ kernel.pmf.probs[::-1])


PROPORTIONAL = "proportional"
SQRT = "sqrt"


def add_noise(
    series: CaseSeries,
    noise_multiplier: float,
    rng_seed=None,
    scale: str = PROPORTIONAL,
) -> CaseSeries:
    """Add reporting noise, then round and clip at zero.

    ``proportional`` draws Gaussian noise with sd = multiplier * count;
    ``sqrt`` uses sd = multiplier * sqrt(count) (Poisson-like reporting
    error).  A zero multiplier returns the input unchanged.
    """
    if noise_multiplier < 0:
        raise InvalidSpec("noise multiplier must be >= 0")
    if scale not in (PROPORTIONAL, SQRT):
        raise InvalidSpec(f"unknown noise scale {scale!r}")
    if noise_multiplier == 0:
        return series
    rng = (
        rng_seed
        if isinstance(rng_seed, np.random.Generator)
        else np.random.default_rng(rng_seed)
    )
    sd = series.counts if scale == PROPORTIONAL else np.sqrt(series.counts)
    eps = rng.normal(0.0, noise_multiplier * sd)
    noisy = np.maximum(0.0, np.rint(series.counts + eps)) + 0.0
    return CaseSeries(dates=series.dates, counts=noisy, filled_dates=series.filled_dates)


def _centered_moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average whose radius shrinks symmetrically at the ends."""
    n = len(values)
    half = window // 2
    idx = np.arange(n)
    radius = np.minimum(half, np.minimum(idx, n - 1 - idx))
    cumsum = np.concatenate([[0.0], np.cumsum(values)])
    return (cumsum[idx + radius + 1] - cumsum[idx - radius]) / (2 * radius + 1)


def empirical_variance(
    series: CaseSeries,
    window: int = 7,
    variance_floor: float = 1.0,
    relative_floor: float = 0.05,
) -> VarianceSeries:
    """Estimate the per-day observation-error variance from the data.

    A centered moving average is subtracted from the counts; the squared
    residuals are smoothed with the same moving average.  The result is
    floored at max(variance_floor, (relative_floor * moving_average)^2)
    so flat stretches never produce a degenerate likelihood.
    """
    if window < 1 or window % 2 == 0:
        raise InvalidSpec("window must be odd and >= 1")
    if variance_floor <= 0:
        raise InvalidSpec("variance_floor must be > 0")
    ma = _centered_moving_average(series.counts, window)
    resid_sq = (series.counts - ma) ** 2
    raw = _centered_moving_average(resid_sq, window)
    floor = np.maximum(variance_floor, (relative_floor * ma) ** 2)
    return VarianceSeries(values=np.maximum(raw, floor))


def log_likelihood(observed: float, predicted, variance: float, kind: str = GAUSSIAN):
    """Log density/mass of one observation given predicted mean(s)."""
    predicted = np.asarray(predicted, dtype=float)
    if kind == GAUSSIAN:
        if variance <= 0:
            raise NonpositiveVariance(f"variance must be > 0, got {variance}")
        return -0.5 * ((observed - predicted) ** 2 / variance + np.log(variance) + LOG_2PI)
    if kind == POISSON:
        k = max(0, int(round(observed)))
        with np.errstate(divide="ignore"):
            return xlogy(k, predicted) - predicted - gammaln(k + 1)
    raise InvalidSpec(f"unknown likelihood kind {kind!r}")


def likelihood(observed: float, predicted: float, variance: float, kind: str = GAUSSIAN) -> float:
    """Density of `observed` under the observation model at mean `predicted`."""
    return float(np.exp(log_likelihood(observed, float(predicted), variance, kind)))
