import math

import numpy as np
import pytest
from scipy import stats

from bellrm import (
    CHSH_MENU,
    HiddenState,
    ModelKind,
    OutcomeModel,
    PairSampler,
    UnsupportedModelError,
    evolve_lambda,
    local_hv_bit,
    normalize_angle,
    qm_correlation,
    qm_joint_probability,
    sample_outcome,
    sawtooth_correlation,
    scenario_pattern,
)
from bellrm.streams import per_pulse_choice, substream

PI = math.pi

QM = OutcomeModel(ModelKind.QM_NONLOCAL)
LOCAL = OutcomeModel(ModelKind.LOCAL_ERGODIC)
NONERG = OutcomeModel(ModelKind.NONERGODIC)


def test_angle_normalization():
    assert normalize_angle(0.0) == 0.0
    assert normalize_angle(PI) == pytest.approx(0.0, abs=1e-12)
    assert normalize_angle(1.5 * PI) == pytest.approx(0.5 * PI)
    assert normalize_angle(-PI / 4) == pytest.approx(3 * PI / 4)


class TestQmJointProbability:
    def test_aligned_settings_identical_bits(self):
        # alpha = beta: sequences identical, so mismatch has probability 0
        assert qm_joint_probability(0.3, 0.3, 0, 0) == pytest.approx(0.5)
        assert qm_joint_probability(0.3, 0.3, 1, 1) == pytest.approx(0.5)
        assert qm_joint_probability(0.3, 0.3, 0, 1) == pytest.approx(0.0)

    def test_orthogonal_settings_anticorrelated(self):
        assert qm_joint_probability(0.3, 0.3 + PI / 2, 0, 1) == pytest.approx(0.5)
        assert qm_joint_probability(0.3, 0.3 + PI / 2, 0, 0) == pytest.approx(0.0, abs=1e-15)

    def test_correlation_at_pi_over_8(self):
        # E = cos(pi/4) = sqrt(2)/2
        e = sum(
            qm_joint_probability(PI / 8, 0.0, a, b) * (1 if a == b else -1)
            for a in (0, 1)
            for b in (0, 1)
        )
        assert e == pytest.approx(math.sqrt(2) / 2, abs=1e-12)
        assert qm_correlation(PI / 8, 0.0) == pytest.approx(math.sqrt(2) / 2)

    def test_probabilities_sum_to_one_on_grid(self):
        for alpha in np.linspace(0, PI, 7):
            for beta in np.linspace(0, PI, 5):
                total = sum(
                    qm_joint_probability(alpha, beta, a, b)
                    for a in (0, 1)
                    for b in (0, 1)
                )
                assert total == pytest.approx(1.0, abs=1e-12)

    def test_rejects_non_bits(self):
        with pytest.raises(ValueError):
            qm_joint_probability(0, 0, 2, 0)


class TestLocalHvBit:
    def test_aligned_transmits(self):
        assert local_hv_bit(0.0, 0.0) == 0

    def test_orthogonal_reflects(self):
        assert local_hv_bit(0.0, PI / 2) == 1

    def test_sawtooth_correlation_from_grid_integration(self):
        # independent oracle: integrate the product of deterministic bits
        # over a dense uniform grid of the hidden angle
        lam = (np.arange(200_000) + 0.5) * (PI / 200_000)
        for theta in np.linspace(0.0, PI / 2, 9):
            prod = np.where(
                local_hv_bit(lam, theta) == local_hv_bit(lam, 0.0), 1.0, -1.0
            )
            oracle = float(prod.mean())
            assert oracle == pytest.approx(1 - 4 * theta / PI, abs=1e-4)
            assert sawtooth_correlation(theta) == pytest.approx(oracle, abs=1e-4)

    def test_depends_only_on_local_arguments(self, rng):
        lam = rng.random(1000) * PI
        bits = local_hv_bit(lam, 0.7)
        assert np.array_equal(bits, local_hv_bit(lam, 0.7))


class TestEvolveLambda:
    def test_nonergodic_phase_origin(self):
        state = evolve_lambda(NONERG, 0.0)
        assert state.lam == 0.0

    def test_nonergodic_half_period(self):
        state = evolve_lambda(NONERG, NONERG.drift_period_s / 2)
        assert state.lam == pytest.approx(PI / 2)

    def test_ergodic_draws_uniform(self):
        rng = substream(5, "test-lambda")
        draws = np.array(
            [evolve_lambda(LOCAL, 0.0, rng).lam for _ in range(2000)]
        )
        big = substream(6, "test-lambda-vec").random(100_000) * PI
        ks = stats.kstest(np.concatenate([draws, big]) / PI, "uniform")
        assert ks.pvalue > 0.01

    def test_rejects_non_hidden_variable_kinds(self):
        with pytest.raises(UnsupportedModelError):
            evolve_lambda(QM, 0.0)


class TestSampleOutcome:
    def test_qm_aligned_never_mismatches(self):
        sampler = PairSampler(QM, seed=1)
        alphas = np.full(1_000_000, 0.0)
        bits_a, bits_b = sampler.sample(
            alphas, alphas.copy(), np.zeros_like(alphas), np.zeros_like(alphas, dtype=np.int64), 100,
            substream(1, "qm-aligned"),
        )
        assert np.array_equal(bits_a, bits_b)

    def test_local_model_deterministic_given_state(self):
        state = HiddenState(lam=0.3, epoch_time=0.0)
        rng = substream(2, "irrelevant")
        outs = {
            sample_outcome(LOCAL, state, 0.9, 0.1, 0.0, 1.0, rng).bit_a
            for _ in range(20)
        }
        assert len(outs) == 1

    def test_qm_chsh_reaches_quantum_bound(self):
        # oracle: S = |E1 - E2 + E3 + E4| with E = cos 2(alpha - beta)
        expected = abs(
            qm_correlation(*CHSH_MENU[0])
            - qm_correlation(*CHSH_MENU[1])
            + qm_correlation(*CHSH_MENU[2])
            + qm_correlation(*CHSH_MENU[3])
        )
        assert expected == pytest.approx(2 * math.sqrt(2), abs=1e-12)
        sampler = PairSampler(QM, seed=3)
        rng = substream(3, "qm-chsh")
        s = 0.0
        for sign, (alpha, beta) in zip((1, -1, 1, 1), CHSH_MENU):
            n = 1_000_000
            a = np.full(n, alpha)
            b = np.full(n, beta)
            bits_a, bits_b = sampler.sample(
                a, b, np.zeros(n), np.zeros(n, dtype=np.int64), 100, rng
            )
            e = float(np.mean(np.where(bits_a == bits_b, 1.0, -1.0)))
            s += sign * e
        assert abs(s) == pytest.approx(expected, abs=0.01)

    def test_time_outside_pulse_rejected(self):
        with pytest.raises(ValueError):
            sample_outcome(QM, None, 0, 0, 2.0, 1.0, substream(1, "x"))

    def test_unknown_kind_is_config_error(self):
        with pytest.raises(Exception):
            sample_outcome(
                OutcomeModel.from_dict({"kind": "NO_SUCH_MODEL"}), None, 0, 0, 0, 1,
                substream(1, "x"),
            )


class TestModelInvariants:
    def test_joint_probabilities_partition_unity(self):
        sampler = PairSampler(QM, seed=9)
        n = 100_000
        bits_a, bits_b = sampler.sample(
            np.full(n, 0.4), np.full(n, 1.1), np.zeros(n), np.zeros(n, dtype=np.int64),
            100, substream(9, "partition"),
        )
        counts = np.bincount(2 * bits_a.astype(int) + bits_b, minlength=4)
        assert counts.sum() == n  # the four outcomes partition the samples

    def test_qm_correlation_matches_cos_on_grid(self):
        n = 100_000
        tol = 4 / math.sqrt(n)
        sampler = PairSampler(QM, seed=11)
        rng = substream(11, "qm-grid")
        for delta in np.linspace(0, PI, 16, endpoint=False):
            bits_a, bits_b = sampler.sample(
                np.full(n, delta), np.zeros(n), np.zeros(n),
                np.zeros(n, dtype=np.int64), 100, rng,
            )
            e = float(np.mean(np.where(bits_a == bits_b, 1.0, -1.0)))
            assert abs(e - math.cos(2 * delta)) < tol

    @pytest.mark.parametrize("model", [LOCAL, NONERG])
    def test_remote_setting_cannot_influence_local_bit(self, model):
        # identical hidden state and stream position, different remote angle
        n = 20_000
        times = np.arange(n) * 1e-6
        within = np.zeros(n, dtype=np.int64)
        alphas = np.full(n, 0.2)
        sampler = PairSampler(model, seed=13)
        a1, _ = sampler.sample(alphas, np.full(n, 0.9), times, within, 100, substream(13, "swap"))
        a2, _ = sampler.sample(alphas, np.full(n, 1.4), times, within, 100, substream(13, "swap"))
        assert np.array_equal(a1, a2)
        b1 = sampler.sample(np.full(n, 0.9), alphas, times, within, 100, substream(13, "swap"))[1]
        b2 = sampler.sample(np.full(n, 1.4), alphas, times, within, 100, substream(13, "swap"))[1]
        assert np.array_equal(b1, b2)

    def test_nonergodic_autocorrelation_peaks_at_drift_period(self):
        # fixed setting, one bit per pulse over three drift periods
        rep = 1e6
        period_pulses = int(NONERG.drift_period_s * rep)
        n = 3 * period_pulses
        sampler = PairSampler(NONERG, seed=17)
        bits_a, _ = sampler.sample(
            np.zeros(n), np.zeros(n), np.arange(n) / rep,
            np.zeros(n, dtype=np.int64), 100, substream(17, "acf"),
        )
        x = 2.0 * bits_a.astype(np.float64) - 1.0
        x -= x.mean()

        def acf(lag):
            return float(
                np.dot(x[:-lag], x[lag:]) / ((x.size - lag) * np.mean(x * x))
            )

        # square-wave ACF: 1 at the full period, 0 at the quarter period;
        # an i.i.d. sequence would show ~1/sqrt(n) at every lag
        assert acf(period_pulses) > 0.9
        assert abs(acf(period_pulses // 4)) < 0.1

    @pytest.mark.parametrize(
        "kind",
        [
            ModelKind.SCENARIO_LOCALITY_FALSE,
            ModelKind.SCENARIO_REALISM_FALSE,
            ModelKind.SCENARIO_ERGODICITY_FALSE,
        ],
    )
    def test_scenarios_violate_chsh_in_both_halves(self, kind):
        model = OutcomeModel(kind)
        sampler = PairSampler(model, seed=19)
        rng = substream(19, "scenario-chsh")
        n = 100_000
        duration = 100
        for half_offset in (0, duration // 2):
            within = np.full(n, half_offset, dtype=np.int64)
            s = 0.0
            for sign, (alpha, beta) in zip((1, -1, 1, 1), CHSH_MENU):
                bits_a, bits_b = sampler.sample(
                    np.full(n, alpha), np.full(n, beta), np.zeros(n), within, duration, rng
                )
                s += sign * float(np.mean(np.where(bits_a == bits_b, 1.0, -1.0)))
            sigma = 2.0 / math.sqrt(n)  # four correlations, each var <= 1/n
            assert abs(s) > 2.0 + 10 * sigma


class TestScenarioPattern:
    def test_balanced_and_reproducible(self):
        pat = scenario_pattern(64, seed=123)
        assert pat.size == 64
        assert int(pat.sum()) == 32
        assert np.array_equal(pat, scenario_pattern(64, seed=123))
        assert not np.array_equal(pat, scenario_pattern(64, seed=124))

    def test_deterministic_half_emits_the_pattern_in_order(self):
        model = OutcomeModel(ModelKind.SCENARIO_LOCALITY_FALSE)
        sampler = PairSampler(model, seed=31)
        n = 256
        duration = 100
        within = np.full(n, 90, dtype=np.int64)  # all in the second half
        bits_a, _ = sampler.sample(
            np.zeros(n), np.zeros(n), np.zeros(n), within, duration,
            substream(31, "pattern-order"),
        )
        pat = scenario_pattern(64, seed=31)
        assert np.array_equal(bits_a, np.tile(pat, 4))


class TestPerPulseChoice:
    def test_reproducible_and_uniform(self):
        idx = np.arange(400_000)
        c1 = per_pulse_choice(7, "settings", idx, 4)
        c2 = per_pulse_choice(7, "settings", idx, 4)
        assert np.array_equal(c1, c2)
        counts = np.bincount(c1, minlength=4)
        chi2 = stats.chisquare(counts)
        assert chi2.pvalue > 0.001

    def test_different_labels_decorrelated(self):
        idx = np.arange(100_000)
        a = per_pulse_choice(7, "settings", idx, 2)
        b = per_pulse_choice(7, "other", idx, 2)
        agree = np.mean(a == b)
        assert abs(agree - 0.5) < 0.01
