import numpy as np
import numpy.testing as npt
import pytest

from rtsmc import (
    ScenarioConfig,
    change_detection_score,
    coverage,
    error_metrics,
    generate,
    synthesize_rt,
)
from rtsmc.errors import InvalidSpec, LengthMismatch


def test_synthesize_frozen_walk_constant():
    config = ScenarioConfig(walk_sd=0.0, change_points=(), horizon=30)
    R = synthesize_rt(config, np.random.default_rng(0))
    npt.assert_allclose(R, 3.2)


def test_synthesize_jump_values_exact():
    R = synthesize_rt(ScenarioConfig(), np.random.default_rng(1))
    assert R[23] == 1.6
    assert R[33] == 0.5
    assert R[83] == 3.0
    assert R[0] == 3.2


def test_synthesize_suppression_segment_frozen_by_default():
    R = synthesize_rt(ScenarioConfig(), np.random.default_rng(2))
    npt.assert_allclose(R[33:83], 0.5)
    # the walk resumes after the resurgence jump
    assert np.std(R[83:]) > 0


def test_synthesize_walk_flag_controls_segment():
    config = ScenarioConfig(change_points=((23, 1.6, True), (33, 0.5, True), (83, 3.0, True)))
    R = synthesize_rt(config, np.random.default_rng(2))
    assert np.std(R[33:83]) > 0


def test_synthesize_increment_sd_matches_walk_sd():
    """Monte Carlo oracle: within-segment increments have sd = walk_sd."""
    config = ScenarioConfig(walk_sd=0.05, change_points=(), horizon=10**4 + 1, r0=50.0)
    R = synthesize_rt(config, np.random.default_rng(3))
    increments = np.diff(R)
    assert abs(increments.std() - 0.05) < 0.002


def test_change_points_must_increase():
    with pytest.raises(InvalidSpec):
        ScenarioConfig(change_points=((30, 1.0), (20, 2.0)))


def test_generate_zero_noise_equals_expected_curve():
    scen = generate(ScenarioConfig(noise_multiplier=0.0, seed=4))
    npt.assert_array_equal(scen.C_noisy, scen.C_bar)


def test_generate_convolution_oracle():
    """C_bar must equal an independent re-convolution of the infections."""
    config = ScenarioConfig(seed=5)
    scen = generate(config)
    kernel = config.observation_kernel()
    pmf = kernel.pmf
    expected = np.zeros(config.horizon)
    for t in range(config.horizon):
        total = 0.0
        for day, p in zip(pmf.days, pmf.probs):
            if t - day >= 0:
                total += p * scen.j_true[t - day]
        expected[t] = kernel.mortality_scale * total
    npt.assert_allclose(scen.C_bar, expected, rtol=1e-12, atol=1e-12)


def test_generate_reproducible_from_seed():
    a = generate(ScenarioConfig(seed=11))
    b = generate(ScenarioConfig(seed=11))
    npt.assert_array_equal(a.R_true, b.R_true)
    npt.assert_array_equal(a.j_true, b.j_true)
    npt.assert_array_equal(a.C_noisy, b.C_noisy)


def test_generate_noise_grid_shares_ground_truth():
    base = generate(ScenarioConfig(seed=6, noise_multiplier=0.0))
    for n in (1.0, 2.0, 3.0):
        scen = generate(ScenarioConfig(seed=6, noise_multiplier=n))
        npt.assert_array_equal(scen.R_true, base.R_true)
        npt.assert_array_equal(scen.j_true, base.j_true)
        npt.assert_array_equal(scen.C_bar, base.C_bar)


def test_error_metrics_perfect():
    m = error_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert m.mean_diff == 0.0
    assert m.sd_diff == 0.0
    assert m.mean_abs_diff == 0.0


def test_error_metrics_hand_case_sample_sd():
    m = error_metrics([1.0, 1.0], [1.2, 0.8])
    assert abs(m.mean_diff) < 1e-12
    assert abs(m.sd_diff - 0.2 * np.sqrt(2)) < 1e-12  # sample convention, n-1
    assert abs(m.mean_abs_diff - 0.2) < 1e-12


def test_error_metrics_skips_missing_estimates():
    m = error_metrics([1.0, 2.0, 3.0], [1.5, np.nan, 3.0])
    assert abs(m.mean_abs_diff - 0.25) < 1e-12


def test_error_metrics_length_mismatch():
    with pytest.raises(LengthMismatch):
        error_metrics([1.0, 2.0], [1.0])


def test_coverage_cases():
    assert coverage([1.0, 2.0], [1.0, 2.0], [1.0, 2.0]) == 1.0
    assert coverage([5.0, 5.0], [0.0, 0.0], [1.0, 1.0]) == 0.0
    truth = np.arange(10.0)
    lo = np.where(np.arange(10) < 5, truth - 1, truth + 1)
    hi = lo + 2
    assert coverage(truth, lo, hi) == 0.5


def test_change_detection_perfect_spikes():
    p = np.full(50, 0.05)
    for day in (10, 30):
        p[day] = 0.9
    hits = change_detection_score(p, [10, 30])
    assert all(h.hit for h in hits)
    assert [h.latency for h in hits] == [0, 0]


def test_change_detection_flat_series_misses():
    hits = change_detection_score(np.full(40, 0.05), [10, 30])
    assert not any(h.hit for h in hits)
    assert all(h.latency is None for h in hits)


def test_change_detection_latency():
    p = np.full(40, 0.01)
    p[25] = 0.8
    (hit,) = change_detection_score(p, [23], window=3)
    assert hit.hit and hit.latency == 2 and hit.detected_day == 25


def test_change_detection_respects_window():
    p = np.full(40, 0.01)
    p[28] = 0.8
    (hit,) = change_detection_score(p, [23], window=3)
    assert not hit.hit


def test_change_detection_with_day_mapping():
    days = np.arange(100, 140)
    p = np.full(40, 0.01)
    p[5] = 0.6
    (hit,) = change_detection_score(p, [104], window=3, days=days)
    assert hit.hit and hit.detected_day == 105 and hit.latency == 1
