"""Sequential Monte Carlo engine: forward filtering, backward smoothing,
posterior summaries, and the end-to-end run over an observed series.

Filtering is a bootstrap particle filter: particles are propagated through
the model transition (which is also the proposal, so weights reduce to the
observation likelihood), reweighted, and systematically resampled when the
effective sample size drops below a threshold.  Smoothing revises the
filtered weights by the backward recursion

    smoothed_t[i] ~ W_t[i] * sum_j smoothed_{t+1}[j] * A[i, j] / (W_t . A[:, j])

with A the pairwise transition-density matrix; particle locations are
never moved.  An optional backward-simulation smoother draws whole index
trajectories instead and is kept for cross-checking.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .errors import InsufficientData, InvalidSpec
from .model import (
    Ensemble,
    ModelParams,
    advance_J,
    init_ensemble,
    log_transition_matrix,
    sample_M,
    sample_R,
)
from .observation import (
    GAUSSIAN,
    CaseSeries,
    ObservationKernel,
    _centered_moving_average,
    empirical_variance,
    log_likelihood,
    observe_mean,
)

FFBSM = "ffbsm"
BACKWARD_SIM = "backward_sim"
NO_SMOOTHER = "none"
SMOOTHERS = (FFBSM, BACKWARD_SIM, NO_SMOOTHER)

SYSTEMATIC = "systematic"
NO_RESAMPLING = "none"

FLAG_WEIGHT_COLLAPSE = "weight_collapse"
FLAG_SMOOTH_FALLBACK = "smooth_fallback"

QUANTILES = (0.025, 0.5, 0.975)


@dataclass(frozen=True)
class RunOptions:
    """Knobs of the inference run that are not model parameters."""

    n_particles: int = 200
    seed: int = 0
    start_threshold: float = 10.0
    likelihood: str = GAUSSIAN
    resampling: str = SYSTEMATIC
    ess_threshold_fraction: float = 0.5
    smoother: str = FFBSM
    variance_window: int = 7
    variance_floor: float = 1.0
    relative_variance_floor: float = 0.05

    def __post_init__(self):
        if self.smoother not in SMOOTHERS:
            raise InvalidSpec(f"unknown smoother {self.smoother!r}")
        if self.resampling not in (SYSTEMATIC, NO_RESAMPLING):
            raise InvalidSpec(f"unknown resampling scheme {self.resampling!r}")
        if not 0 < self.ess_threshold_fraction <= 1:
            raise InvalidSpec("ess_threshold_fraction must be in (0, 1]")


def ess(weights) -> float:
    """Effective sample size 1 / sum(w^2) of normalised weights."""
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w**2))


def systematic_indices(weights, n: int, u: float) -> np.ndarray:
    """Index walk of systematic resampling with stratified offset u in [0, 1/n)."""
    positions = u + np.arange(n) / n
    return np.searchsorted(np.cumsum(weights), positions, side="right").clip(max=len(weights) - 1)


def systematic_resample(weights, rng, n: int | None = None) -> np.ndarray:
    """Draw resampling indices; expected copy count of particle i is n * w_i."""
    w = np.asarray(weights, dtype=float)
    n = len(w) if n is None else n
    return systematic_indices(w, n, rng.random() / n)


def resample(
    ens: Ensemble,
    rng,
    ess_threshold_fraction: float = 0.5,
    scheme: str = SYSTEMATIC,
) -> Ensemble:
    """Systematic resampling when the ESS falls below the threshold.

    Returned ancestors index into ``ens``; weights become uniform after a
    resampling pass and are untouched otherwise.
    """
    current = ess(ens.weights)
    if scheme == NO_RESAMPLING or current >= ess_threshold_fraction * ens.n:
        return ens
    idx = systematic_resample(ens.weights, rng)
    return Ensemble(
        R=ens.R[idx],
        J=ens.J[idx],
        M=ens.M[idx],
        weights=np.full(ens.n, 1.0 / ens.n),
        ancestors=idx.astype(np.int64),
        flags=ens.flags,
        ess_before_resample=ens.ess_before_resample,
    )


def _reweight(ens: Ensemble, log_lik: np.ndarray) -> Ensemble:
    """Multiply weights by likelihoods in log space; collapse -> uniform + flag."""
    with np.errstate(divide="ignore"):
        logw = np.log(ens.weights) + log_lik
    peak = np.max(logw)
    flags = ens.flags
    if not np.isfinite(peak):
        weights = np.full(ens.n, 1.0 / ens.n)
        flags = flags + (FLAG_WEIGHT_COLLAPSE,)
    else:
        weights = np.exp(logw - peak)
        weights /= weights.sum()
    return replace(ens, weights=weights, flags=flags, ess_before_resample=ess(weights))


def propagate_and_weight(
    ens: Ensemble,
    C_t: float,
    variance_t: float,
    params: ModelParams,
    rng,
    likelihood_kind: str = GAUSSIAN,
) -> Ensemble:
    """Propagate through the transition and weight by the new observation
    (no resampling: the weighted ensemble keeps its distinct support)."""
    M_new = sample_M(ens.M, params, rng)
    R_new = sample_R(ens.R, M_new, params, rng)
    J_new = advance_J(ens.J, R_new, params.w, rng, import_rate=params.import_rate)
    proposed = Ensemble(
        R=R_new,
        J=J_new,
        M=M_new,
        weights=ens.weights,
        ancestors=np.arange(ens.n, dtype=np.int64),
        flags=(),
    )
    predicted = observe_mean(J_new, params.kernel)
    return _reweight(proposed, log_likelihood(C_t, predicted, variance_t, likelihood_kind))


def filter_step(
    ens: Ensemble,
    C_t: float,
    variance_t: float,
    params: ModelParams,
    rng,
    likelihood_kind: str = GAUSSIAN,
    resampling: str = SYSTEMATIC,
    ess_threshold_fraction: float = 0.5,
) -> Ensemble:
    """One forward filtering update: propagate, weight by the new
    observation, renormalise, and resample if degenerate."""
    weighted = propagate_and_weight(ens, C_t, variance_t, params, rng, likelihood_kind)
    return resample(weighted, rng, ess_threshold_fraction, resampling)


def ffbsm_reweight(filter_weights: list, log_trans: list) -> tuple[list, list]:
    """Backward reweighting pass shared by the epidemic model and test
    harnesses.

    ``filter_weights[t]`` are the filtered weights at step t;
    ``log_trans[t][i, j]`` is log p(X_{t+1} = particle_j | X_t = particle_i).
    Returns (smoothed weights per step, indices of fallback steps where a
    degenerate backward normaliser forced a copy of the filtered weights).
    """
    T = len(filter_weights)
    smoothed = [None] * T
    smoothed[T - 1] = filter_weights[T - 1]
    fallbacks = []
    for t in range(T - 2, -1, -1):
        W_t = filter_weights[t]
        L = log_trans[t]
        with np.errstate(divide="ignore"):
            log_W = np.log(W_t)
            log_tilde = np.log(smoothed[t + 1])
        log_denom = logsumexp(log_W[:, None] + L, axis=0)  # per next-particle j
        reachable = np.isfinite(log_denom)
        if np.any(~reachable & (smoothed[t + 1] > 0)):
            smoothed[t] = W_t
            fallbacks.append(t)
            continue
        # log-space throughout: the ratio matrix can overflow double range
        inner = L[:, reachable] + (log_tilde[reachable] - log_denom[reachable])[None, :]
        log_new = log_W + logsumexp(inner, axis=1)
        peak = np.max(log_new)
        if not np.isfinite(peak):
            smoothed[t] = W_t
            fallbacks.append(t)
            continue
        new = np.exp(log_new - peak)
        smoothed[t] = new / new.sum()
    return smoothed, fallbacks


def _backward_sim_weights(
    filtered: list, log_trans: list, params: ModelParams, rng, n_draws: int
) -> list:
    """Smoothed weights by backward trajectory simulation (cross-check mode)."""
    T = len(filtered)
    n = filtered[-1].n
    idx = rng.choice(n, size=n_draws, p=filtered[-1].weights)
    weights = [None] * T
    weights[T - 1] = np.bincount(idx, minlength=n) / n_draws
    for t in range(T - 2, -1, -1):
        with np.errstate(divide="ignore"):
            logp = np.log(filtered[t].weights)[:, None] + log_trans[t][:, idx]
        logp -= logsumexp(logp, axis=0)
        cdf = np.cumsum(np.exp(logp), axis=0)
        u = rng.random(n_draws)
        idx = (u[None, :] < cdf).argmax(axis=0)
        weights[t] = np.bincount(idx, minlength=n) / n_draws
    return weights


def smooth(
    filtered: list,
    params: ModelParams,
    method: str = FFBSM,
    rng=None,
) -> list:
    """Backward smoothing over the filtered ensembles.

    Weights are revised in place of the filtered ones; particle locations
    are unchanged.  The final day's smoothed ensemble equals the filtered
    one by construction.
    """
    if method == NO_SMOOTHER or len(filtered) <= 1:
        return list(filtered)
    log_trans = [
        log_transition_matrix(filtered[t + 1], filtered[t], params)
        for t in range(len(filtered) - 1)
    ]
    if method == FFBSM:
        weights, fallbacks = ffbsm_reweight([e.weights for e in filtered], log_trans)
    elif method == BACKWARD_SIM:
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        weights = _backward_sim_weights(filtered, log_trans, params, rng, filtered[-1].n)
        fallbacks = []
    else:
        raise InvalidSpec(f"unknown smoother {method!r}")
    out = []
    for t, (ens, w) in enumerate(zip(filtered, weights)):
        flags = ens.flags + ((FLAG_SMOOTH_FALLBACK,) if t in fallbacks else ())
        out.append(replace(ens, weights=w, flags=flags))
    return out


def weighted_quantile(values, weights, qs) -> np.ndarray:
    """Lower weighted quantile: smallest value whose cumulative weight
    reaches the level."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(np.asarray(weights, dtype=float)[order])
    cum /= cum[-1]
    idx = np.searchsorted(cum, np.asarray(qs) - 1e-12, side="left").clip(max=len(values) - 1)
    return values[order][idx]


@dataclass
class DayEstimate:
    """Posterior summary of one day's ensemble."""

    r: np.ndarray  # (lo95, median, hi95)
    j: np.ndarray
    c_pred: np.ndarray
    p_change: float


def summarize(ens: Ensemble, kernel: ObservationKernel) -> DayEstimate:
    """Weighted 2.5/50/97.5% quantiles of R, the newest J entry, and the
    per-particle predicted observation, plus the posterior change probability."""
    r_q = weighted_quantile(ens.R, ens.weights, QUANTILES)
    j_q = weighted_quantile(ens.J[:, -1], ens.weights, QUANTILES)
    c_q = weighted_quantile(observe_mean(ens.J, kernel), ens.weights, QUANTILES)
    p_change = float(ens.weights[ens.M == 1].sum())
    return DayEstimate(r=r_q, j=j_q, c_pred=c_q, p_change=p_change)


def reconstruct_observations(smoothed: list, kernel: ObservationKernel) -> np.ndarray:
    """Per-day weighted quantiles (2.5/50/97.5%) of the reconstructed
    observation, shape (T, 3)."""
    rows = [
        weighted_quantile(observe_mean(e.J, kernel), e.weights, QUANTILES) for e in smoothed
    ]
    return np.asarray(rows)


@dataclass
class EstimateSeries:
    """Per-calendar-day posterior summaries.

    Rows cover the estimated state days followed by the trailing d days
    that only have reconstructed observations; missing entries are NaN.
    ``flags`` holds per-row diagnostic tokens (empty string when clean).
    """

    COLUMNS = (
        "date",
        "R_median",
        "R_lo95",
        "R_hi95",
        "j_median",
        "j_lo95",
        "j_hi95",
        "p_change",
        "C_pred_median",
        "C_pred_lo95",
        "C_pred_hi95",
        "flags",
    )

    dates: list
    r_median: np.ndarray
    r_lo95: np.ndarray
    r_hi95: np.ndarray
    j_median: np.ndarray
    j_lo95: np.ndarray
    j_hi95: np.ndarray
    p_change: np.ndarray
    c_pred_median: np.ndarray
    c_pred_lo95: np.ndarray
    c_pred_hi95: np.ndarray
    flags: list = field(default_factory=list)

    def __len__(self):
        return len(self.dates)

    def rows(self):
        for i, date in enumerate(self.dates):
            yield (
                date.isoformat(),
                _fmt(self.r_median[i]),
                _fmt(self.r_lo95[i]),
                _fmt(self.r_hi95[i]),
                _fmt(self.j_median[i]),
                _fmt(self.j_lo95[i]),
                _fmt(self.j_hi95[i]),
                _fmt(self.p_change[i]),
                _fmt(self.c_pred_median[i]),
                _fmt(self.c_pred_lo95[i]),
                _fmt(self.c_pred_hi95[i]),
                self.flags[i] if self.flags else "",
            )


def _fmt(x) -> str:
    """CSV cell: empty for missing values."""
    return "" if x is None or (isinstance(x, float) and np.isnan(x)) else format(x, ".6g")


@dataclass
class RunResult:
    """Everything produced by one inference run."""

    series: EstimateSeries
    filtered_series: EstimateSeries
    ess_per_day: np.ndarray
    day_flags: list
    start_index: int
    d: int
    observed: CaseSeries
    variance: np.ndarray


def _assemble_series(
    summaries: list,
    trimmed: CaseSeries,
    d: int,
    flags_per_day: list,
) -> EstimateSeries:
    """Re-label state estimates from observation time to infection time.

    The ensemble processed at observation day t describes the state at
    t - d; its reconstruction describes the observation at t itself.  The
    output therefore spans d extra leading rows (early states) and has
    NaN state columns on the trailing d rows.
    """
    K = len(summaries)
    total = K + d
    first_date = trimmed.dates[0] - datetime.timedelta(days=d)
    dates = [first_date + datetime.timedelta(days=i) for i in range(total)]
    nan = lambda: np.full(total, np.nan)
    out = EstimateSeries(
        dates=dates,
        r_median=nan(), r_lo95=nan(), r_hi95=nan(),
        j_median=nan(), j_lo95=nan(), j_hi95=nan(),
        p_change=nan(),
        c_pred_median=nan(), c_pred_lo95=nan(), c_pred_hi95=nan(),
        flags=[""] * total,
    )
    for i, day in enumerate(summaries):
        out.r_lo95[i], out.r_median[i], out.r_hi95[i] = day.r
        out.j_lo95[i], out.j_median[i], out.j_hi95[i] = day.j
        out.p_change[i] = day.p_change
        # reconstruction belongs to the observation day, d rows later
        out.c_pred_lo95[i + d], out.c_pred_median[i + d], out.c_pred_hi95[i + d] = day.c_pred
        if flags_per_day[i]:
            out.flags[i] = ";".join(flags_per_day[i])
    return out


def run(obs: CaseSeries, params: ModelParams, options: RunOptions = RunOptions()) -> RunResult:
    """Full inference over an observed count series.

    Leading days are trimmed until the count exceeds the start threshold;
    the empirical variance curve is estimated from the trimmed series; the
    ensemble is initialised and filtered forward, then smoothed backward;
    summaries are re-labelled from observation to infection time.
    """
    above = np.nonzero(obs.counts > options.start_threshold)[0]
    if len(above) == 0:
        raise InsufficientData(
            f"no day exceeds the start threshold {options.start_threshold}"
        )
    t0 = int(above[0])
    trimmed = CaseSeries(dates=obs.dates[t0:], counts=obs.counts[t0:])
    if len(trimmed) < params.T_phi + params.d:
        raise InsufficientData(
            f"only {len(trimmed)} days above threshold; need {params.T_phi + params.d}"
        )
    variance = empirical_variance(
        trimmed,
        window=options.variance_window,
        variance_floor=options.variance_floor,
        relative_floor=options.relative_variance_floor,
    ).values.copy()
    # the first days lack residual statistics (shrunken windows underestimate
    # the noise); borrow the first fully-windowed estimate scaled down by the
    # squared level ratio, so head days are neither overconfident nor blinded
    head = min(options.variance_window, len(variance) - 1)
    level = _centered_moving_average(trimmed.counts, options.variance_window)
    ref = max(level[head], 1.0)
    scaled = variance[head] * (np.maximum(level[:head], 1.0) / ref) ** 2
    variance[:head] = np.maximum(variance[:head], scaled)

    rng = np.random.default_rng(options.seed)
    ens = init_ensemble(params, trimmed, options.n_particles, rng)
    weighted = _reweight(
        ens, log_likelihood(trimmed.counts[0], observe_mean(ens.J, params.kernel),
                            variance[0], options.likelihood)
    )
    # the weighted (pre-resample) ensembles keep their distinct support and
    # are what the smoother and the summaries consume; the resampled clone
    # is only carried forward for propagation
    filtered = [weighted]
    carry = resample(weighted, rng, options.ess_threshold_fraction, options.resampling)
    for u in range(1, len(trimmed)):
        weighted = propagate_and_weight(
            carry,
            trimmed.counts[u],
            variance[u],
            params,
            rng,
            likelihood_kind=options.likelihood,
        )
        filtered.append(weighted)
        carry = resample(weighted, rng, options.ess_threshold_fraction, options.resampling)

    smoothed = smooth(filtered, params, method=options.smoother, rng=rng)

    kernel = params.kernel
    smoothed_series = _assemble_series(
        [summarize(e, kernel) for e in smoothed], trimmed, params.d,
        [e.flags for e in smoothed],
    )
    filtered_series = _assemble_series(
        [summarize(e, kernel) for e in filtered], trimmed, params.d,
        [e.flags for e in filtered],
    )
    return RunResult(
        series=smoothed_series,
        filtered_series=filtered_series,
        ess_per_day=np.array([e.ess_before_resample for e in filtered]),
        day_flags=[e.flags for e in smoothed],
        start_index=t0,
        d=params.d,
        observed=trimmed,
        variance=variance,
    )
