import numpy as np
import numpy.testing as npt
import pytest

from rtsmc import (
    CaseSeries,
    Ensemble,
    ModelParams,
    RunOptions,
    ess,
    filter_step,
    reconstruct_observations,
    resample,
    run,
    smooth,
    summarize,
    weighted_quantile,
)
from rtsmc.engine import (
    FLAG_SMOOTH_FALLBACK,
    FLAG_WEIGHT_COLLAPSE,
    _reweight,
    ffbsm_reweight,
    systematic_indices,
    systematic_resample,
)
from rtsmc.errors import InsufficientData


def make_ensemble(R, J, M=None, weights=None):
    R = np.asarray(R, dtype=float)
    n = len(R)
    J = np.asarray(J, dtype=np.int64)
    M = np.zeros(n, dtype=np.int8) if M is None else np.asarray(M, dtype=np.int8)
    weights = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    return Ensemble(R=R, J=J, M=M, weights=weights, ancestors=np.arange(n, dtype=np.int64))


def test_ess_uniform():
    assert abs(ess(np.full(200, 1.0 / 200)) - 200.0) < 1e-9


def test_ess_degenerate():
    w = np.zeros(10)
    w[3] = 1.0
    assert ess(w) == 1.0


def test_ess_formula():
    assert abs(ess(np.array([0.5, 0.25, 0.25])) - 1.0 / 0.375) < 1e-12


def test_systematic_indices_manual_walk():
    idx = systematic_indices(np.array([0.7, 0.2, 0.1]), 10, u=0.05)
    counts = np.bincount(idx, minlength=3)
    npt.assert_array_equal(counts, [7, 2, 1])


def test_systematic_uniform_weights_one_copy_each(rng):
    idx = systematic_resample(np.full(8, 1.0 / 8), rng)
    npt.assert_array_equal(np.sort(idx), np.arange(8))


def test_systematic_certain_weight():
    idx = systematic_indices(np.array([1.0, 0.0]), 2, u=0.3)
    npt.assert_array_equal(idx, [0, 0])


def test_resample_triggers_only_below_threshold(params, rng):
    n = 10
    J = np.zeros((n, params.T_phi), dtype=np.int64)
    healthy = make_ensemble(np.linspace(1, 2, n), J)
    assert resample(healthy, rng) is healthy
    skewed_w = np.array([0.91] + [0.01] * 9)
    skewed = make_ensemble(np.linspace(1, 2, n), J, weights=skewed_w)
    out = resample(skewed, rng)
    npt.assert_allclose(out.weights, 1.0 / n)
    assert (out.ancestors == 0).sum() >= 8


def test_filter_step_uninformative_observation(generation_pmf, onset_kernel, rng):
    # zero windows without importation propagate identically, so the
    # likelihood is constant across particles and weights stay put
    params = ModelParams(w=generation_pmf, kernel=onset_kernel, import_rate=0.0)
    n = 4
    J = np.zeros((n, params.T_phi), dtype=np.int64)
    weights = np.array([0.4, 0.3, 0.2, 0.1])
    ens = make_ensemble(np.full(n, 1.5), J, weights=weights)
    out = filter_step(ens, 20.0, 100.0, params, rng, resampling="none")
    npt.assert_allclose(out.weights, weights, atol=1e-12)


def test_filter_step_singleton(params, rng):
    ens = make_ensemble([1.2], np.full((1, params.T_phi), 10, dtype=np.int64))
    out = filter_step(ens, 15.0, 9.0, params, rng)
    npt.assert_allclose(out.weights, [1.0])


def test_filter_step_two_particle_bayes(params):
    from rtsmc.observation import observe_mean, likelihood

    rng = np.random.default_rng(3)
    J = np.stack([np.full(params.T_phi, 10), np.full(params.T_phi, 40)]).astype(np.int64)
    ens = make_ensemble([1.0, 1.0], J)
    C_t, var_t = 30.0, 25.0
    out = filter_step(ens, C_t, var_t, params, np.random.default_rng(3), resampling="none")

    # replay the propagation with the same stream to get the predictions
    from rtsmc.model import advance_J, sample_M, sample_R

    rng2 = np.random.default_rng(3)
    M2 = sample_M(ens.M, params, rng2)
    R2 = sample_R(ens.R, M2, params, rng2)
    J2 = advance_J(ens.J, R2, params.w, rng2, import_rate=params.import_rate)
    L = np.array([likelihood(C_t, float(p), var_t) for p in observe_mean(J2, params.kernel)])
    npt.assert_allclose(out.weights, L / L.sum(), rtol=1e-9)


def test_reweight_collapse_flags_and_uniformizes():
    ens = make_ensemble([1.0, 2.0], np.zeros((2, 5), dtype=np.int64))
    out = _reweight(ens, np.array([-np.inf, -np.inf]))
    npt.assert_allclose(out.weights, 0.5)
    assert FLAG_WEIGHT_COLLAPSE in out.flags


def test_weighted_quantile_two_equal_particles():
    q = weighted_quantile([1.0, 3.0], [0.5, 0.5], [0.025, 0.5, 0.975])
    npt.assert_allclose(q, [1.0, 1.0, 3.0])


def test_weighted_quantile_point_mass():
    q = weighted_quantile([2.0, 2.0, 2.0], [0.2, 0.5, 0.3], [0.025, 0.5, 0.975])
    npt.assert_allclose(q, 2.0)


def test_ffbsm_boundary_and_identity():
    w = [np.array([0.3, 0.7])]
    smoothed, fallbacks = ffbsm_reweight(w, [])
    npt.assert_array_equal(smoothed[0], w[0])
    assert fallbacks == []


def exact_smoothed_marginals(p0, trans, liks):
    """Forward-backward by exhaustive trajectory enumeration."""
    T = len(liks)
    n = len(p0)
    paths = [[s] for s in range(n)]
    for _ in range(T - 1):
        paths = [p + [s] for p in paths for s in range(n)]
    joint = []
    for p in paths:
        prob = p0[p[0]] * liks[0][p[0]]
        for t in range(1, T):
            prob *= trans[p[t - 1], p[t]] * liks[t][p[t]]
        joint.append(prob)
    joint = np.array(joint)
    joint /= joint.sum()
    marg = np.zeros((T, n))
    for p, pr in zip(paths, joint):
        for t, s in enumerate(p):
            marg[t, s] += pr
    return marg


def test_ffbsm_matches_exhaustive_enumeration():
    """2-state, 3-step chain: placing one particle on each grid state with
    exact filter weights must reproduce the enumerated smoothed marginals."""
    trans = np.array([[0.8, 0.2], [0.35, 0.65]])
    p0 = np.array([0.5, 0.5])
    liks = [np.array([0.9, 0.4]), np.array([0.2, 0.7]), np.array([0.6, 0.5])]

    # exact filtered marginals (discrete forward pass)
    filt = []
    cur = p0 * liks[0]
    cur /= cur.sum()
    filt.append(cur)
    for t in (1, 2):
        cur = (cur @ trans) * liks[t]
        cur /= cur.sum()
        filt.append(cur)

    log_trans = [np.log(trans)] * 2
    smoothed, fallbacks = ffbsm_reweight(filt, log_trans)
    assert fallbacks == []
    oracle = exact_smoothed_marginals(p0, trans, liks)
    for t in range(3):
        npt.assert_allclose(smoothed[t], oracle[t], atol=1e-9)
    npt.assert_array_equal(smoothed[2], filt[2])


def test_ffbsm_degenerate_denominator_falls_back():
    # particle 0 carries all weight at t=0 but cannot reach particle 1 at
    # t=1, which holds all the smoothed mass: the day falls back, flagged
    filt = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    log_trans = [np.array([[0.0, -np.inf], [-0.7, -0.7]])]
    smoothed, fallbacks = ffbsm_reweight(filt, log_trans)
    assert fallbacks == [0]
    npt.assert_array_equal(smoothed[0], filt[0])


def test_smooth_identity_cases(params, rng):
    J = rng.integers(0, 30, size=(6, params.T_phi)).astype(np.int64)
    ens = make_ensemble(rng.uniform(0.5, 3.0, 6), J)
    assert smooth([ens], params) == [ens]
    out = smooth([ens], params, method="none")
    assert out == [ens]


def test_smooth_final_day_unchanged(params, rng):
    ensembles = []
    for _ in range(4):
        J = rng.integers(0, 30, size=(8, params.T_phi)).astype(np.int64)
        w = rng.dirichlet(np.ones(8))
        ensembles.append(make_ensemble(rng.uniform(0.5, 3.0, 8), J, weights=w))
    out = smooth(ensembles, params)
    npt.assert_array_equal(out[-1].weights, ensembles[-1].weights)
    for before, after in zip(ensembles, out):
        npt.assert_array_equal(before.R, after.R)
        npt.assert_array_equal(before.J, after.J)


def test_summarize_point_mass(params, onset_kernel):
    J = np.full((5, params.T_phi), 12, dtype=np.int64)
    ens = make_ensemble(np.full(5, 1.7), J)
    day = summarize(ens, onset_kernel)
    npt.assert_allclose(day.r, 1.7)
    npt.assert_allclose(day.j, 12.0)
    assert day.p_change == 0.0


def test_summarize_two_particles(params, onset_kernel):
    J = np.stack([np.full(params.T_phi, 1), np.full(params.T_phi, 9)]).astype(np.int64)
    ens = make_ensemble([1.0, 3.0], J, M=[0, 1])
    day = summarize(ens, onset_kernel)
    npt.assert_allclose(day.r, [1.0, 1.0, 3.0])
    assert abs(day.p_change - 0.5) < 1e-12


def test_reconstruct_single_particle_exact(params, onset_kernel, rng):
    from rtsmc.observation import observe_mean

    J = rng.integers(0, 40, size=(1, params.T_phi)).astype(np.int64)
    ens = make_ensemble([1.0], J)
    rows = reconstruct_observations([ens], onset_kernel)
    expected = float(observe_mean(J, onset_kernel)[0])
    npt.assert_allclose(rows[0], expected)


def test_run_requires_days_above_threshold(params):
    obs = CaseSeries.from_day_index(np.full(40, 3.0))
    with pytest.raises(InsufficientData):
        run(obs, params, RunOptions())


def test_run_requires_enough_days(params):
    obs = CaseSeries.from_day_index([20.0] * 4)
    with pytest.raises(InsufficientData):
        run(obs, params, RunOptions())


def test_run_deterministic_given_seed(params):
    rng = np.random.default_rng(0)
    counts = np.clip(np.exp(np.linspace(1, 6, 60)) + rng.normal(0, 5, 60), 0, None)
    obs = CaseSeries.from_day_index(counts)
    a = run(obs, params, RunOptions(seed=9, n_particles=80))
    b = run(obs, params, RunOptions(seed=9, n_particles=80))
    npt.assert_array_equal(a.series.r_median, b.series.r_median)
    npt.assert_array_equal(a.series.c_pred_hi95, b.series.c_pred_hi95)
    npt.assert_array_equal(a.ess_per_day, b.ess_per_day)


def test_run_poisson_collapse_is_flagged_not_fatal(generation_pmf, onset_kernel):
    # zero counts make every particle window zero; a later spike has zero
    # Poisson likelihood for all particles and must be flagged, not raised
    params = ModelParams(w=generation_pmf, kernel=onset_kernel, import_rate=0.0)
    counts = np.concatenate([[50.0], np.zeros(30), [400.0], np.zeros(8)])
    obs = CaseSeries.from_day_index(counts)
    result = run(obs, params, RunOptions(seed=1, n_particles=40, likelihood="poisson",
                                         smoother="none"))
    assert any(FLAG_WEIGHT_COLLAPSE in f for f in result.day_flags)


def test_run_output_shape_and_relabeling(params):
    rng = np.random.default_rng(4)
    counts = np.clip(np.exp(np.linspace(1.5, 5.5, 50)) * (1 + 0.3 * rng.normal(size=50)), 0, None)
    obs = CaseSeries.from_day_index(counts)
    res = run(obs, params, RunOptions(seed=2, n_particles=60))
    d = params.d
    n_obs = len(obs) - res.start_index
    assert len(res.series) == n_obs + d
    # trailing d rows carry reconstruction only
    assert np.all(np.isnan(res.series.r_median[-d:]))
    assert np.all(np.isfinite(res.series.c_pred_median[-d:]))
    # leading d rows carry state estimates only
    assert np.all(np.isnan(res.series.c_pred_median[:d]))
    assert np.all(np.isfinite(res.series.r_median[:d]))
    # quantile ordering
    ok = np.isfinite(res.series.r_median)
    assert np.all(res.series.r_lo95[ok] <= res.series.r_median[ok] + 1e-12)
    assert np.all(res.series.r_median[ok] <= res.series.r_hi95[ok] + 1e-12)
