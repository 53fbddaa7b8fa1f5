"""Switching state-space model over (R, J, M).

The latent state bundles the reproduction number R, a vector J of the most
recent daily infection counts, and a binary mode indicator M.  M switches
the R transition between a Gaussian random walk (smooth evolution) and a
bounded uniform reset (abrupt change); J advances by shifting in a Poisson
draw from the renewal mean.

States are indexed by infection time t* = t - d, d being the minimum
observation delay: the observation at day t informs the state at t*.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ndtr, xlogy

from .delays import DelayPMF
from .errors import InsufficientData, InvalidSpec
from .observation import CaseSeries, ObservationKernel
from .renewal import infection_force, renewal_mean

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class LatentState:
    """One particle: reproduction number, infection window, change flag."""

    R: float
    J: np.ndarray
    M: int

    def __post_init__(self):
        if self.R < 0:
            raise InvalidSpec("R must be >= 0")
        if self.M not in (0, 1):
            raise InvalidSpec("M must be 0 or 1")
        J = np.asarray(self.J)
        if J.ndim != 1 or J.size == 0 or np.any(J < 0):
            raise InvalidSpec("J must be a non-empty vector of non-negative counts")
        object.__setattr__(self, "J", J)


@dataclass(frozen=True)
class ModelParams:
    """Fixed parameters of the transition and observation model."""

    w: DelayPMF
    kernel: ObservationKernel
    sigma_R: float = 0.1
    delta: float = 0.5
    alpha: float = 0.95
    T_phi: int = 0
    r_prior: tuple = (1.0, 5.0)
    import_rate: float = 0.0
    reset_prob: float = 0.0

    def __post_init__(self):
        if not self.sigma_R > 0:
            raise InvalidSpec("sigma_R must be > 0")
        if self.delta < 0:
            raise InvalidSpec("delta must be >= 0")
        if not 0 < self.alpha < 1:
            raise InvalidSpec("alpha must be in (0, 1)")
        if self.import_rate < 0:
            raise InvalidSpec("import_rate must be >= 0")
        if not 0 <= self.reset_prob < 1:
            raise InvalidSpec("reset_prob must be in [0, 1)")
        if self.w.offset_start < 1:
            raise InvalidSpec("generation-time kernel must have offset_start >= 1")
        minimum = max(self.w.span, self.kernel.window_length)
        if self.T_phi == 0:
            object.__setattr__(self, "T_phi", minimum)
        elif self.T_phi < minimum:
            raise InvalidSpec(
                f"T_phi={self.T_phi} shorter than required {minimum} "
                "(max of generation span and observation window)"
            )
        lo, hi = self.r_prior
        if not 0 <= lo < hi:
            raise InvalidSpec("r_prior must be an interval [lo, hi] with 0 <= lo < hi")

    @property
    def d(self) -> int:
        """Minimum observation delay: states lag observations by d days."""
        return self.kernel.min_delay


@dataclass
class Ensemble:
    """Weighted particle approximation of one day's posterior.

    Particle i is (R[i], J[i], M[i]); ``ancestors`` are indices into the
    previous day's ensemble.  ``ess_before_resample`` and ``flags`` carry
    per-day diagnostics.
    """

    R: np.ndarray
    J: np.ndarray
    M: np.ndarray
    weights: np.ndarray
    ancestors: np.ndarray
    flags: tuple = ()
    ess_before_resample: float = float("nan")

    def __post_init__(self):
        n = len(self.R)
        if not (len(self.J) == len(self.M) == len(self.weights) == len(self.ancestors) == n):
            raise InvalidSpec("ensemble arrays must share one particle count")
        if np.any(self.weights < 0):
            raise InvalidSpec("weights must be non-negative")
        total = self.weights.sum()
        if not np.isclose(total, 1.0, atol=1e-6):
            raise InvalidSpec(f"weights must sum to 1, got {total}")

    @property
    def n(self) -> int:
        return len(self.R)

    def state(self, i: int) -> LatentState:
        return LatentState(R=float(self.R[i]), J=self.J[i], M=int(self.M[i]))


def sample_M(prev, params: ModelParams, rng):
    """Next mode indicator: 1 with probability 1 - alpha, independent of prev."""
    shape = np.shape(prev)
    u = rng.random(shape if shape else None)
    draw = (u >= params.alpha).astype(np.int8)
    return draw if shape else int(draw)


def sample_R(prev_R, M, params: ModelParams, rng):
    """Next reproduction number given the mode.

    Mode 0 is a Gaussian step truncated below zero (resampled on
    rejection).  Mode 1 draws uniformly on [0, prev + delta], except that
    with probability ``reset_prob`` the memory is dropped entirely and R
    is redrawn from the initial prior; without that reset an abrupt
    upswing could never exceed +delta per day.
    """
    prev = np.asarray(prev_R, dtype=float)
    scalar = prev.ndim == 0
    prev = np.atleast_1d(prev)
    mode = np.atleast_1d(np.asarray(M))
    if np.any(prev < 0):
        raise InvalidSpec("prev_R must be >= 0")
    out = np.empty_like(prev)

    walk = mode == 0
    if walk.any():
        draws = rng.normal(prev[walk], params.sigma_R)
        while True:
            bad = draws < 0
            if not bad.any():
                break
            draws[bad] = rng.normal(prev[walk][bad], params.sigma_R)
        out[walk] = draws
    jump = ~walk
    if jump.any():
        draws = rng.uniform(0.0, prev[jump] + params.delta)
        if params.reset_prob > 0:
            lo, hi = params.r_prior
            reset = rng.random(int(jump.sum())) < params.reset_prob
            resets = rng.uniform(lo, hi, size=int(reset.sum()))
            draws[reset] = resets
        out[jump] = draws
    return float(out[0]) if scalar else out


# numpy's Poisson sampler rejects means beyond ~1e18; runaway particles
# (pure-SIS mode) are capped instead of crashing the run
_POISSON_MEAN_CAP = 1e12


def advance_J(J_prev, R_new, w: DelayPMF, rng, import_rate: float = 0.0):
    """Shift the infection window and append a Poisson renewal draw.

    A positive ``import_rate`` adds a constant importation intensity to
    the Poisson mean, keeping extinct windows re-ignitable.
    """
    J_prev = np.asarray(J_prev)
    mean = np.minimum(renewal_mean(R_new, J_prev, w) + import_rate, _POISSON_MEAN_CAP)
    if J_prev.ndim == 1:
        j_new = rng.poisson(float(mean))
        return np.concatenate([J_prev[1:], [j_new]])
    j_new = rng.poisson(mean)
    return np.concatenate([J_prev[:, 1:], j_new[:, None]], axis=1)


def _log_mode_prob(M, alpha):
    return np.where(np.asarray(M) == 0, np.log(alpha), np.log1p(-alpha))


def _log_r_walk(next_R, prev_R, sigma):
    """Gaussian step density truncated at zero, matching rejection sampling."""
    z = (np.asarray(next_R) - np.asarray(prev_R)) / sigma
    log_norm = np.log(ndtr(np.asarray(prev_R) / sigma))  # mass above zero
    dens = -0.5 * (z**2 + LOG_2PI) - np.log(sigma) - log_norm
    return np.where(np.asarray(next_R) >= 0, dens, -np.inf)


def _log_r_jump(next_R, prev_R, delta, reset_prob=0.0, r_prior=(1.0, 5.0)):
    """Mode-II density: bounded uniform mixed with the prior reset."""
    upper = np.asarray(prev_R) + delta
    nxt = np.asarray(next_R)
    with np.errstate(divide="ignore"):
        bounded = np.where((nxt >= 0) & (nxt <= upper), 1.0 / upper, 0.0)
    if reset_prob == 0.0:
        with np.errstate(divide="ignore"):
            return np.log(bounded)
    lo, hi = r_prior
    reset = np.where((nxt >= lo) & (nxt <= hi), 1.0 / (hi - lo), 0.0)
    with np.errstate(divide="ignore"):
        return np.log((1.0 - reset_prob) * bounded + reset_prob * reset)


def _log_poisson(k, lam):
    k = np.asarray(k, dtype=float)
    lam = np.asarray(lam, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = xlogy(k, lam) - lam - gammaln(k + 1)
    # Poisson(0) puts all mass on k = 0
    return np.where((lam == 0) & (k > 0), -np.inf, out)


def transition_density(next_state: LatentState, prev_state: LatentState, params: ModelParams) -> float:
    """One-step transition density p(next | prev).

    The J shift is treated as given: only the appended count is scored,
    via Poisson(renewal mean of the new R over prev's window).  This is
    the marginal approximation that makes cross-particle smoothing
    possible; exact shift-chaining would zero out every non-descendant
    pair.
    """
    if len(next_state.J) != len(prev_state.J):
        raise InvalidSpec("states must share the window length T_phi")
    lp = _log_mode_prob(next_state.M, params.alpha)
    if next_state.M == 0:
        lp = lp + _log_r_walk(next_state.R, prev_state.R, params.sigma_R)
    else:
        lp = lp + _log_r_jump(next_state.R, prev_state.R, params.delta,
                              params.reset_prob, params.r_prior)
    lam = renewal_mean(next_state.R, prev_state.J, params.w) + params.import_rate
    lp = lp + _log_poisson(next_state.J[-1], lam)
    return float(np.exp(lp))


def log_transition_matrix(next_ens: Ensemble, prev_ens: Ensemble, params: ModelParams) -> np.ndarray:
    """Pairwise log transition densities, entry [i, j] = log p(next_j | prev_i).

    Vectorised equivalent of ``transition_density`` over all particle
    pairs; used by the O(N^2) smoothing pass.
    """
    next_R = next_ens.R[None, :]  # (1, N)
    prev_R = prev_ens.R[:, None]  # (N, 1)
    next_M = next_ens.M[None, :]

    lp = np.broadcast_to(_log_mode_prob(next_M, params.alpha), (prev_ens.n, next_ens.n)).copy()
    walk = _log_r_walk(next_R, prev_R, params.sigma_R)
    jump = _log_r_jump(next_R, prev_R, params.delta, params.reset_prob, params.r_prior)
    lp += np.where(next_M == 0, walk, jump)

    force = infection_force(prev_ens.J, params.w)[:, None]  # (N, 1)
    lam = next_R * force + params.import_rate
    lp += _log_poisson(next_ens.J[None, :, -1], lam)
    return lp


def init_ensemble(
    params: ModelParams,
    early_obs: CaseSeries,
    n_particles: int = 200,
    rng=None,
) -> Ensemble:
    """Initial particle cloud for the first above-threshold day.

    R is drawn from the uniform prior and M starts at 0.  The infection
    window is seeded by back-shifting the early observed counts by the
    kernel's rounded mean delay and rescaling by the mortality rate, with
    per-particle Poisson jitter for diversity.
    """
    if n_particles < 1:
        raise InvalidSpec("n_particles must be >= 1")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    T_phi, d = params.T_phi, params.d
    if len(early_obs) < T_phi + d:
        raise InsufficientData(
            f"need at least T_phi + d = {T_phi + d} observed days, got {len(early_obs)}"
        )
    shift = int(round(params.kernel.pmf.mean()))
    counts = early_obs.counts
    # 3-day local averages so a single noisy day cannot mis-scale the seed
    padded = np.concatenate([counts[:1], counts, counts[-1:]])
    smoothed = (padded[:-2] + padded[1:-1] + padded[2:]) / 3.0
    # state day of the first observation is -d in series coordinates
    window_days = np.arange(-d - T_phi + 1, -d + 1)
    src = np.clip(window_days + shift, 0, len(counts) - 1)
    base = smoothed[src] / params.kernel.mortality_scale
    J = rng.poisson(base, size=(n_particles, T_phi)).astype(np.int64)
    lo, hi = params.r_prior
    R = rng.uniform(lo, hi, size=n_particles)
    M = np.zeros(n_particles, dtype=np.int8)
    weights = np.full(n_particles, 1.0 / n_particles)
    ancestors = np.arange(n_particles, dtype=np.int64)
    return Ensemble(R=R, J=J, M=M, weights=weights, ancestors=ancestors)
