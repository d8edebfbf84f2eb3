import math
from functools import lru_cache

import numpy as np
import pytest

from icc_cta.airframe import AttackConfig
from icc_cta.channel import AoaModel, OneRingModel, dft_submatrix, draw_cir, one_ring_covariance
from icc_cta.code import IccCode
from icc_cta.decode import decode_grid, ensure_thresholds
from icc_cta.errors import DimensionError, DomainError, SingularPilotError, UnderdeterminedError
from icc_cta.estimate import (
    Alg1Config,
    MetricWeights,
    OverlapObservation,
    Status,
    Verdict,
    algorithm1,
    cir_nmse,
    decision_metric,
    delta_f,
    delta_f_limit,
    lmmse_estimate,
    lmmse_scale,
    ls_fs_estimate,
    perfect_mmse_estimate,
    recover_cir,
    rf_inverse_trace,
)
from icc_cta.link import ChannelStats, CovarianceBank, LinkSetup, simulate_trial
from icc_cta.pipeline import _models, overlap_round
from icc_cta.tradeoff import equally_spaced_positions


@lru_cache(maxsize=None)
def bank(n_t, L):
    return CovarianceBank(n_t, L, math.pi / 12)


def _round(n_t=64, L=4, n_fft=16, theta=(-0.5, 0.5), noise_var=1e-2, seed=0, attack=None):
    b = bank(n_t, L)
    pos = equally_spaced_positions(n_fft, L)
    obs, grid = overlap_round(n_fft, pos, L, b(theta[0]), b(theta[1]), noise_var, np.random.default_rng(seed), attack)
    return obs, grid, b(theta[0]), b(theta[1])


def test_lmmse_matches_explicit_weight_oracle():
    obs, grid, sb, _ = _round()
    pair = lmmse_estimate(obs, sb.cov, grid.noise_var)
    c_y = obs.y_l @ obs.y_l.conj().T / obs.y_l.shape[1]
    w = 1.0 * obs.x_l.conj().T @ np.linalg.inv(c_y)
    assert np.allclose(pair.h_b_hat, (w @ obs.y_l)[0])
    assert np.allclose(pair.h_a_hat, (w @ obs.y_l)[1])
    assert pair.eps_b_sq == pytest.approx(np.sum(np.abs(pair.h_b_hat - obs.h_b_true) ** 2) / np.sum(np.abs(obs.h_b_true) ** 2))


def test_scale_is_one_for_unit_modulus_rows():
    cov = one_ring_covariance(OneRingModel(0.1, math.pi / 12, n_t=32, l_taps=6))
    assert lmmse_scale(cov, dft_submatrix(48, 6, range(0, 48, 8))) == pytest.approx(1.0)
    assert lmmse_scale(cov.aggregate(), dft_submatrix(48, 6, [1, 2, 3])) == pytest.approx(1.0)


def test_perfect_mmse_is_exact_without_noise():
    obs, grid, sb, _ = _round(noise_var=1e-14)
    pair = perfect_mmse_estimate(obs, sb.cov, 1e-14)
    assert pair.eps_b_sq < 1e-8 and pair.eps_a_sq < 1e-8


def test_ls_is_contaminated_by_the_attacker():
    obs, grid, sb, _ = _round(noise_var=1e-10)
    x = obs.x_l
    expected = obs.h_b_true + (x[0, 1] / x[0, 0]) * obs.h_a_true
    assert np.allclose(ls_fs_estimate(obs), expected, atol=1e-4)


def test_collinear_pilots_raise():
    obs, grid, sb, _ = _round(attack=AttackConfig("PTS", pip_time="replica"))
    with pytest.raises(SingularPilotError):
        lmmse_estimate(obs, sb.cov, grid.noise_var)
    with pytest.raises(SingularPilotError):
        perfect_mmse_estimate(obs, sb.cov, grid.noise_var)


def test_observation_shape_checks():
    f = dft_submatrix(8, 2, [0, 4])
    with pytest.raises(DimensionError):
        OverlapObservation(np.zeros((2, 5)), np.eye(2), np.array([0, 1]), f)
    with pytest.raises(DimensionError):
        OverlapObservation(np.zeros((2, 4)), np.eye(3), np.array([0, 1]), f)
    with pytest.raises(DomainError):
        OverlapObservation(np.zeros((2, 4)), np.eye(2), np.array([]), f)


def test_decision_metric_matches_trace_oracle():
    rng = np.random.default_rng(0)
    cov = one_ring_covariance(OneRingModel(0.2, math.pi / 12, n_t=16, l_taps=3))
    f = dft_submatrix(12, 3, [0, 4, 8, 2])
    wts = MetricWeights.build(cov, f)
    u = rng.standard_normal((16, 4)) + 1j * rng.standard_normal((16, 4))
    oracle = np.trace(wts.r1_pinv @ u @ wts.rf_pinv @ u.conj().T).real
    assert decision_metric(u, wts) == pytest.approx(oracle)
    assert decision_metric(u.reshape(-1), wts) == pytest.approx(oracle)
    with pytest.raises(DimensionError):
        decision_metric(u[:, :3], wts)


def test_metric_means_match_large_array_limit():
    # noiseless FS channels: E f(h_B) = L rho_1 and E f(h_A) = L Tr(R_2 R_1^+)
    n_t, L, n = 128, 4, 400
    b = bank(n_t, L)
    s1, s2 = b(-0.3), b(0.4)
    f = dft_submatrix(16, L, equally_spaced_positions(16, L))
    wts = MetricWeights.build(s1.cov, f)
    rng = np.random.default_rng(1)
    fb = np.mean([decision_metric(draw_cir(s1.cov, L, rng, sqrt=s1.sqrt).taps @ f.T, wts) for _ in range(n)])
    fa = np.mean([decision_metric(draw_cir(s2.cov, L, rng, sqrt=s2.sqrt).taps @ f.T, wts) for _ in range(n)])
    rho1 = np.trace(wts.r1_pinv @ s1.cov.entries).real
    assert fb == pytest.approx(L * rho1, rel=0.03)
    assert fb - fa == pytest.approx(delta_f_limit(s1.cov, s2.cov, L), rel=0.05)


def test_delta_f_limit_vanishes_for_equal_angles():
    s = bank(64, 4)(0.2)
    assert delta_f_limit(s.cov, s.cov, 4) == pytest.approx(0.0, abs=1e-9)
    assert delta_f_limit(s.cov, bank(64, 4)(-0.6).cov, 4) > 0


def test_delta_f_verdicts():
    obs, grid, sb, _ = _round(n_t=100, L=6, n_fft=48, noise_var=0.01)
    pair = lmmse_estimate(obs, sb.cov, grid.noise_var)
    wts = MetricWeights.build(sb.cov, obs.f_ls)
    d = delta_f(pair, wts)
    assert d.verdict == Verdict.BOB_IS_H0 and d.delta_f > 0
    swapped = type(pair)(pair.h_a_hat, pair.h_b_hat)
    assert delta_f(swapped, wts).verdict == Verdict.BOB_IS_H1
    assert delta_f(pair, wts, tol=abs(d.delta_f) + 1).verdict == Verdict.UNDECIDABLE


def test_random_per_subcarrier_attacker_gives_large_gap():
    # equal mean AoAs; only the per-subcarrier phase scrambling separates the two sources
    attack = AttackConfig("PTS", pip_freq="random_per_subcarrier")
    b = bank(64, 4)
    s = b(0.2)
    gaps, scale = [], []
    for seed in range(40):
        obs, grid = overlap_round(16, range(0, 16, 2), 4, s, s, 1e-2, np.random.default_rng(seed), attack)
        wts = MetricWeights.build(s.cov, obs.f_ls)
        gaps.append(delta_f(lmmse_estimate(obs, s.cov, grid.noise_var), wts).delta_f)
        scale.append(decision_metric(obs.h_b_true, wts))
    assert np.median(gaps) > 0.3 * np.median(scale)


def test_cir_recovery_exact_without_noise():
    obs, grid, sb, _ = _round(noise_var=1e-14)
    est = recover_cir(obs.h_b_true, sb.cov, obs.f_ls)
    truth = grid.truth["cir_b"].taps
    assert cir_nmse(est, truth) < 1e-20
    assert est.g.size == truth.size


def test_cir_recovery_underdetermined():
    cov = one_ring_covariance(OneRingModel(0.0, 0.2, n_t=4, l_taps=3))
    with pytest.raises(UnderdeterminedError):
        recover_cir(np.zeros(8), cov, dft_submatrix(12, 3, [0, 4]))


def test_rf_inverse_trace():
    assert rf_inverse_trace(48, 6, equally_spaced_positions(48, 6)) == pytest.approx(1.0)
    assert rf_inverse_trace(48, 6, [0, 1, 2, 3, 4, 5]) > 1e3
    assert rf_inverse_trace(48, 6, [0, 8, 16]) == math.inf


def test_unequal_spacing_gives_larger_error():
    """Equally spaced overlaps give the smallest mean CIR error at fixed s."""
    L, n_fft, n_t = 4, 16, 32
    b = bank(n_t, L)
    errs = {}
    for name, pos in (("equal", (0, 4, 8, 12)), ("unequal", (0, 1, 5, 9))):
        total = 0.0
        rng = np.random.default_rng(3)
        for _ in range(150):
            obs, grid = overlap_round(n_fft, pos, L, b(-0.4), b(0.5), 0.05, rng)
            pair = lmmse_estimate(obs, b(-0.4).cov, 0.05)
            total += cir_nmse(recover_cir(pair.h_b_hat, b(-0.4).cov, obs.f_ls), grid.truth["cir_b"].taps)
        errs[name] = total
    assert errs["unequal"] > errs["equal"]


# ---------------------------------------------------------------- algorithm1 branches

@pytest.fixture(scope="module")
def base_setup():
    setup = LinkSetup(IccCode(7, 1), n_t=64, aoa=AoaModel("DPD", 2, support=(-0.6, 0.6)))
    ensure_thresholds(setup)
    return setup


def _run(setup, seed, attack, cfg=None):
    setup.attack = attack
    rng = np.random.default_rng(seed)
    trial = simulate_trial(setup, rng)
    dec = decode_grid(trial.grid, setup.code, setup.thresholds, rng)
    res = algorithm1(trial.grid, dec, setup.code, _models(setup, trial), cfg or Alg1Config(setup.l_taps), rng)
    return trial, dec, res


def test_no_attack_branch_uses_ls():
    # two taps over a 32-point FFT keep adjacent bins coherent and the LS fit well conditioned
    setup = LinkSetup(IccCode(7, 1), n_t=64, n_fft=32, l_taps=2)
    ensure_thresholds(setup)
    trial, dec, res = _run(setup, 0, AttackConfig("SC"))
    assert res.status == Status.NO_ATTACK and res.chosen == trial.bob.bits
    assert cir_nmse(res.cir, trial.grid.truth["cir_b"].taps) < 0.2


def test_unique_bob_with_overlap_uses_lmmse(base_setup):
    trial, dec, res = _run(base_setup, 1, AttackConfig("PTS"))
    assert res.status == Status.RESOLVED and res.chosen == trial.bob.bits
    assert res.fs is not None and res.cir is not None


def test_decode_failure_branch(base_setup):
    class Failed:
        class outcome:
            from icc_cta.decode import OutcomeKind
            kind = OutcomeKind.FAILURE

    rng = np.random.default_rng(0)
    trial = simulate_trial(base_setup, rng)
    res = algorithm1(trial.grid, Failed, base_setup.code, _models(base_setup, trial), Alg1Config(4), rng)
    assert res.status == Status.DECODE_FAILURE and res.chosen is None


def test_confusing_rounds_resolved_by_angle(base_setup):
    attack = AttackConfig("PTS", pattern_law="codeword")
    seen = {"distinct": [0, 0], "collision": [0, 0]}
    for seed in range(60):
        trial, dec, res = _run(base_setup, 100 + seed, attack)
        if res.status not in (Status.RESOLVED_BY_ANGLE, Status.IDENTIFICATION_ERROR):
            continue
        key = "collision" if trial.theta_a == trial.theta_b else "distinct"
        seen[key][0] += 1
        seen[key][1] += res.chosen != trial.bob.bits
        if key == "distinct":
            assert res.status == Status.RESOLVED_BY_ANGLE
    assert seen["distinct"][0] > 10
    assert seen["distinct"][1] == 0


def test_alg1_config_rejects_unknown_pilot_source():
    with pytest.raises(DomainError):
        Alg1Config(4, confusing_pilot="oracle")
