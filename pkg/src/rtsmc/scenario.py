"""Synthetic scenarios and validation metrics.

The default scenario mirrors the package's reference experiment: R starts
at 3.2, follows a small-step Gaussian random walk, drops abruptly to 1.6
on day 23 and 0.5 on day 33, and resurges to 3.0 on day 83.  Infections
are run through the renewal recursion, convolved with the observation
kernel into a noise-free expected curve, and perturbed with proportional
Gaussian reporting noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .delays import ContinuousDelaySpec, DelayPMF, discretize
from .errors import InvalidSpec, LengthMismatch
from .observation import SQRT, CaseSeries, ObservationKernel, add_noise, build_kernel
from .renewal import DETERMINISTIC_MEAN, POISSON_DRAW, simulate_infections

# (day, new R, walk resumes afterwards): the walk stays frozen through the
# suppression plateau so the trough depth does not swing by orders of
# magnitude between realisations
DEFAULT_CHANGE_POINTS = ((23, 1.6, True), (33, 0.5, False), (83, 3.0, True))


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs of the synthetic ground-truth generator."""

    r0: float = 3.2
    walk_sd: float = 0.05
    change_points: tuple = DEFAULT_CHANGE_POINTS
    horizon: int = 100
    j_init: float = 1.0
    noise_multiplier: float = 1.0
    generation_time: ContinuousDelaySpec = ContinuousDelaySpec("gamma", 5.51, 0.81)
    incubation: ContinuousDelaySpec = ContinuousDelaySpec("lognormal", 1.644, 0.363)
    truncation_threshold: float = 0.1
    max_span: int = 60
    sim_mode: str = DETERMINISTIC_MEAN
    init_history: str = "constant"
    noise_scale: str = SQRT
    seed: int = 0

    def __post_init__(self):
        points = tuple(self._normalized_change_points())
        object.__setattr__(self, "change_points", points)
        days = [day for day, _, _ in points]
        if any(b <= a for a, b in zip(days, days[1:])):
            raise InvalidSpec("change-point days must be strictly increasing")
        if any(not 0 < day < self.horizon for day in days):
            raise InvalidSpec("change-point days must lie inside the horizon")
        if self.sim_mode not in (DETERMINISTIC_MEAN, POISSON_DRAW):
            raise InvalidSpec(f"unknown sim_mode {self.sim_mode!r}")
        if self.horizon < 2:
            raise InvalidSpec("horizon must be at least 2 days")

    def _normalized_change_points(self):
        for entry in self.change_points:
            entry = tuple(entry)
            if len(entry) == 2:
                day, value = entry
                walk = True
            else:
                day, value, walk = entry
            yield int(day), float(value), bool(walk)

    def generation_pmf(self) -> DelayPMF:
        return discretize(self.generation_time, self.truncation_threshold, max_span=self.max_span)

    def observation_kernel(self) -> ObservationKernel:
        incubation = discretize(self.incubation, self.truncation_threshold, max_span=self.max_span)
        return build_kernel("onset", incubation=incubation)


@dataclass(frozen=True)
class Scenario:
    """Synthetic ground truth with its noisy observable."""

    R_true: np.ndarray = field(repr=False)
    j_true: np.ndarray = field(repr=False)
    C_bar: np.ndarray = field(repr=False)
    C_noisy: np.ndarray = field(repr=False)
    change_days: tuple = ()

    def __post_init__(self):
        n = len(self.R_true)
        if not (len(self.j_true) == len(self.C_bar) == len(self.C_noisy) == n):
            raise LengthMismatch("scenario series must share the horizon length")

    @property
    def horizon(self) -> int:
        return len(self.R_true)


def synthesize_rt(config: ScenarioConfig, rng) -> np.ndarray:
    """Piecewise Gaussian random walk for R, reset at each change point.

    A change point may freeze the walk for its segment (hold R constant
    until the next jump); the walk is always active before the first one.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    jumps = {day: (value, walk) for day, value, walk in config.change_points}
    R = np.empty(config.horizon)
    R[0] = config.r0
    walking = True
    for t in range(1, config.horizon):
        if t in jumps:
            R[t], walking = jumps[t]
            continue
        if not walking or config.walk_sd == 0:
            R[t] = R[t - 1]
            continue
        step = rng.normal(R[t - 1], config.walk_sd)
        while step < 0:
            step = rng.normal(R[t - 1], config.walk_sd)
        R[t] = step
    return R


def generate(config: ScenarioConfig, rng=None) -> Scenario:
    """Ground-truth pipeline: R path -> renewal infections -> expected
    observations -> proportional reporting noise."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(
        config.seed if rng is None else rng
    )
    R = synthesize_rt(config, rng)
    w = config.generation_pmf()
    kernel = config.observation_kernel()
    j = simulate_infections(R, w, j_init=config.j_init, mode=config.sim_mode,
                            rng_seed=rng, init_history=config.init_history).counts

    # expected observations: convolution of infections with the kernel by lag
    phi_by_lag = np.zeros(kernel.pmf.span + 1)
    phi_by_lag[kernel.pmf.offset_start :] = kernel.pmf.probs
    C_bar = kernel.mortality_scale * np.convolve(j, phi_by_lag)[: config.horizon]

    noisy = add_noise(
        CaseSeries.from_day_index(C_bar), config.noise_multiplier, rng_seed=rng,
        scale=config.noise_scale,
    ).counts
    return Scenario(
        R_true=R,
        j_true=j,
        C_bar=C_bar,
        C_noisy=noisy,
        change_days=tuple(day for day, _, _ in config.change_points),
    )


@dataclass(frozen=True)
class ErrorMetrics:
    mean_diff: float
    sd_diff: float
    mean_abs_diff: float


def error_metrics(truth, estimate) -> ErrorMetrics:
    """Mean and sample standard deviation of (estimate - truth), plus the
    mean absolute difference.  Pairs with a missing estimate are skipped."""
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if len(truth) != len(estimate):
        raise LengthMismatch(f"lengths differ: {len(truth)} vs {len(estimate)}")
    ok = np.isfinite(truth) & np.isfinite(estimate)
    diff = estimate[ok] - truth[ok]
    if diff.size == 0:
        raise LengthMismatch("no overlapping finite entries to compare")
    sd = float(np.std(diff, ddof=1)) if diff.size > 1 else 0.0
    return ErrorMetrics(
        mean_diff=float(diff.mean()),
        sd_diff=sd,
        mean_abs_diff=float(np.abs(diff).mean()),
    )


def coverage(truth, lo, hi) -> float:
    """Fraction of days where the interval [lo, hi] contains the truth."""
    truth = np.asarray(truth, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if not (len(truth) == len(lo) == len(hi)):
        raise LengthMismatch("coverage inputs must share one length")
    ok = np.isfinite(truth) & np.isfinite(lo) & np.isfinite(hi)
    if not ok.any():
        raise LengthMismatch("no overlapping finite entries to compare")
    inside = (lo[ok] <= truth[ok]) & (truth[ok] <= hi[ok])
    return float(inside.mean())


@dataclass(frozen=True)
class ChangeHit:
    true_day: int
    hit: bool
    detected_day: int | None
    latency: int | None


def change_detection_score(
    p_change,
    true_days,
    window: int = 3,
    threshold: float = 0.15,
    days=None,
) -> list:
    """Score change-point detection from the posterior change probability.

    An event is hit when the series attains a local maximum above the
    threshold within +-window days of the true day; latency is detected
    minus true day.  ``days`` maps series positions to calendar days
    (defaults to 0..T-1).
    """
    p = np.asarray(p_change, dtype=float)
    days = np.arange(len(p)) if days is None else np.asarray(days)
    finite = np.isfinite(p)
    local_max = np.zeros(len(p), dtype=bool)
    for i in np.nonzero(finite)[0]:
        left = p[i - 1] if i > 0 and finite[i - 1] else -np.inf
        right = p[i + 1] if i + 1 < len(p) and finite[i + 1] else -np.inf
        local_max[i] = p[i] >= left and p[i] >= right
    candidates = finite & local_max & (p > threshold)

    results = []
    for true_day in true_days:
        near = candidates & (np.abs(days - true_day) <= window)
        if near.any():
            pick = np.nonzero(near)[0][np.argmax(p[near])]
            detected = int(days[pick])
            results.append(ChangeHit(true_day, True, detected, detected - true_day))
        else:
            results.append(ChangeHit(true_day, False, None, None))
    return results
