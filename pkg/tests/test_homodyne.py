import math

import numpy as np
import pytest

import ramanmem as rm
from ramanmem.homodyne import (ModeExtractionError, PhaseRecoveryError,
                               dataset_quadratures)

MODE = rm.gaussian_temporal_mode(64, 1.0, 0.5, 0.25)
MODE32 = rm.gaussian_temporal_mode(32, 1.0, 0.5, 0.3)


def standard_error_of_variance(v, n):
    return v * math.sqrt(2.0 / n)


class TestSimulateDualPulse:
    def test_vacuum_calibration(self):
        vac = rm.GaussianState(1.0, 1.0)
        n = 100_000
        ds = rm.simulate_dual_pulse_run(vac, MODE, n, seed=1, store_photocurrents=True)
        q = rm.matched_filter_quadrature(ds.photocurrents, MODE)
        assert np.var(q, ddof=1) == pytest.approx(1.0, abs=3 * standard_error_of_variance(1.0, n))

    def test_locked_squeezed_variance(self):
        st = rm.squeezed_vacuum_state(1.6, 1.6)
        n = 100_000
        ds = rm.simulate_dual_pulse_run(st, MODE, n, locked_phase=0.0, seed=2,
                                        store_photocurrents=False)
        assert np.var(ds.quadratures, ddof=1) == pytest.approx(st.v_min, abs=0.01)

    def test_pointwise_variance_closed_form(self):
        st = rm.squeezed_vacuum_state(3.0, 3.0)
        n = 200_000
        ds = rm.simulate_dual_pulse_run(st, MODE32, n, locked_phase=math.pi / 2,
                                        seed=3)
        pv = np.var(ds.photocurrents, axis=0, ddof=1)
        dt = MODE32.dt
        expected = 1.0 / dt + (st.v_max - 1.0) * MODE32.samples**2
        np.testing.assert_allclose(pv, expected, rtol=0.03)

    def test_stored_quadratures_equal_matched_filtering(self):
        st = rm.squeezed_vacuum_state(1.6, 1.6)
        ds = rm.simulate_dual_pulse_run(st, MODE, 2000, seed=4, store_photocurrents=True)
        np.testing.assert_allclose(
            dataset_quadratures(ds), rm.matched_filter_quadrature(ds.photocurrents, MODE),
            atol=1e-10)

    def test_electronic_noise_adds_to_matched_variance(self):
        vac = rm.GaussianState(1.0, 1.0)
        n = 100_000
        ds = rm.simulate_dual_pulse_run(vac, MODE, n, electronic_noise_var=0.5,
                                        seed=5, store_photocurrents=True)
        q = rm.matched_filter_quadrature(ds.photocurrents, MODE)
        assert np.var(q, ddof=1) == pytest.approx(1.5, abs=3 * standard_error_of_variance(1.5, n))

    def test_companion_delay_drift_is_negligible_by_construction(self):
        st = rm.GaussianState(1.0, 1.0)
        drift = rm.PhaseDriftModel(bandwidth_hz=1e5, sigma_rad=0.05, seed=6)
        ds = rm.simulate_dual_pulse_run(st, MODE, 5000, drift=drift, seed=6,
                                        store_photocurrents=False)
        assert ds.metadata["companion_phase_error_std"] < 0.05

    def test_violent_drift_rejected(self):
        st = rm.GaussianState(1.0, 1.0)
        drift = rm.PhaseDriftModel(bandwidth_hz=5e6, sigma_rad=1.5, seed=7)
        with pytest.raises(ValueError, match="phase drift"):
            rm.simulate_dual_pulse_run(st, MODE, 2000, drift=drift, seed=7,
                                       companion_delay_s=500e-9,
                                       store_photocurrents=False)

    def test_determinism(self):
        st = rm.squeezed_vacuum_state(1.0, 1.2)
        a = rm.simulate_dual_pulse_run(st, MODE, 3000, seed=11)
        b = rm.simulate_dual_pulse_run(st, MODE, 3000, seed=11)
        assert np.array_equal(a.photocurrents, b.photocurrents)
        assert np.array_equal(a.fringes, b.fringes)
        c = rm.simulate_dual_pulse_run(st, MODE, 3000, seed=12)
        assert not np.array_equal(a.quadratures, c.quadratures)


class TestMatchedFilter:
    def test_projection_identity(self):
        q = rm.matched_filter_quadrature(MODE.samples, MODE)
        assert q == pytest.approx(1.0, rel=1e-12)  # unit-energy template

    def test_orthogonal_mode_rejected_by_filter(self):
        t = (np.arange(64) + 0.5) / 64
        ortho = MODE.samples * np.sin(2 * math.pi * (t - 0.5) / 0.5)
        ortho -= MODE.samples * np.sum(ortho * MODE.samples) / 64 / 1.0
        assert rm.matched_filter_quadrature(ortho, MODE) == pytest.approx(0.0, abs=1e-10)

    def test_grid_mismatch(self):
        with pytest.raises(ValueError, match="grid"):
            rm.matched_filter_quadrature(np.zeros(32), MODE)

    def test_vacuum_ensemble_unit_variance(self):
        rng = np.random.default_rng(0)
        n = 100_000
        dt = MODE.dt
        traces = rng.standard_normal((n, 64)) / math.sqrt(dt)
        q = rm.matched_filter_quadrature(traces, MODE)
        assert np.var(q, ddof=1) == pytest.approx(1.0, abs=3 * standard_error_of_variance(1.0, n))


class TestExtractTemporalMode:
    def test_self_consistency_at_high_contrast(self):
        st = rm.squeezed_vacuum_state(12.0, 12.0)
        ds = rm.simulate_dual_pulse_run(st, MODE32, 10_000, locked_phase=math.pi / 2,
                                        seed=3)
        mode, overlap = rm.extract_temporal_mode(ds)
        assert overlap >= 0.99

    def test_vacuum_input_fails(self):
        vac = rm.GaussianState(1.0, 1.0)
        ds = rm.simulate_dual_pulse_run(vac, MODE32, 10_000, locked_phase=0.0, seed=8)
        with pytest.raises(ModeExtractionError):
            rm.extract_temporal_mode(ds)

    def test_overlap_improves_with_trials(self):
        st = rm.squeezed_vacuum_state(12.0, 12.0)
        overlaps = []
        for n in (1000, 10_000):
            ds = rm.simulate_dual_pulse_run(st, MODE32, n, locked_phase=math.pi / 2,
                                            seed=9)
            overlaps.append(rm.extract_temporal_mode(ds)[1])
        assert overlaps[1] > overlaps[0]

    def test_needs_traces(self):
        st = rm.squeezed_vacuum_state(6.0, 6.0)
        ds = rm.simulate_dual_pulse_run(st, MODE32, 2000, locked_phase=0.0, seed=10,
                                        store_photocurrents=False)
        with pytest.raises(ValueError, match="traces"):
            rm.extract_temporal_mode(ds)


class TestRecoverPhase:
    def test_constructed_cosine(self):
        n = 1024
        i = np.arange(n)
        true_slope = 2 * math.pi * 3 / n
        rec = rm.recover_phase(np.cos(true_slope * i + 0.7))
        interior = ~rec.low_confidence
        slope = np.polyfit(i[interior], rec.phases[interior], 1)[0]
        offset = np.mean(rec.phases[interior] - slope * i[interior])
        assert slope == pytest.approx(true_slope, rel=0.01)
        assert offset == pytest.approx(0.7, rel=0.01)

    def test_constant_fringe_rejected(self):
        with pytest.raises(PhaseRecoveryError, match="amplitude"):
            rm.recover_phase(np.full(256, 0.7))

    def test_sub_cycle_scan_rejected(self):
        i = np.arange(256)
        with pytest.raises(PhaseRecoveryError, match="cycle"):
            rm.recover_phase(np.cos(0.5 * math.pi * i / 256))

    def test_noisy_cosine_offset_within_3_degrees(self):
        n = 1024
        i = np.arange(n)
        rng = np.random.default_rng(2)
        truth = 2 * math.pi * 3 * i / n + 0.7
        rec = rm.recover_phase(np.cos(truth) + 0.05 * rng.standard_normal(n))
        interior = ~rec.low_confidence
        offset_err = np.mean(rec.phases[interior] - truth[interior])
        assert abs(math.degrees(offset_err)) < 3.0

    def test_edge_flagging(self):
        rec = rm.recover_phase(np.cos(2 * math.pi * 4 * np.arange(200) / 200))
        assert rec.low_confidence[:20].all() and rec.low_confidence[-20:].all()
        assert not rec.low_confidence[20:-20].any()


class TestBinningAndFit:
    def test_vacuum_bins_near_unity(self):
        vac = rm.GaussianState(1.0, 1.0)
        n = 120_000
        ds = rm.simulate_dual_pulse_run(vac, MODE, n, seed=13, store_photocurrents=False)
        binned = rm.bin_variances(ds.quadratures, ds.phases(), 24)
        per_bin = n / 24
        tol = 3 * standard_error_of_variance(1.0, per_bin)
        assert np.all(np.abs(binned.variances - 1.0) < tol)

    def test_squeezed_extrema_recovered(self):
        st = rm.squeezed_vacuum_state(1.6, 1.6)
        ds = rm.simulate_dual_pulse_run(st, MODE, 100_000, seed=14,
                                        store_photocurrents=False)
        binned = rm.bin_variances(ds.quadratures, ds.phases(), 24)
        assert np.nanmin(binned.variances) == pytest.approx(st.v_min, rel=0.05)
        assert np.nanmax(binned.variances) == pytest.approx(st.v_max, rel=0.05)

    def test_fit_exact_on_noiseless_curve(self):
        st = rm.GaussianState(0.6, 1.9, theta0=0.4)
        centers = (np.arange(24) + 0.5) * math.pi / 24
        binned = rm.BinnedVariances(
            centers=centers,
            variances=rm.quadrature_variance(st, centers),
            counts=np.full(24, 100),
            low_count=np.zeros(24, dtype=bool),
        )
        fit = rm.fit_variance_curve(binned)
        assert fit.v_x == pytest.approx(0.6, abs=1e-10)
        assert fit.v_p == pytest.approx(1.9, abs=1e-10)
        assert fit.theta0 == pytest.approx(0.4, abs=1e-10)

    def test_fit_on_monte_carlo_data(self):
        st = rm.squeezed_vacuum_state(1.6, 1.6, 0.3)
        ds = rm.simulate_dual_pulse_run(st, MODE, 100_000, seed=15,
                                        store_photocurrents=False)
        fit = rm.fit_variance_curve(rm.bin_variances(ds.quadratures, ds.phases(), 24))
        assert fit.v_x == pytest.approx(st.v_min, rel=0.05)
        assert fit.v_p == pytest.approx(st.v_max, rel=0.05)
        assert fit.theta0 == pytest.approx(0.3, abs=math.radians(2.0))

    def test_bin_doubling_leaves_fit_stable(self):
        st = rm.squeezed_vacuum_state(1.6, 1.6)
        ds = rm.simulate_dual_pulse_run(st, MODE, 100_000, seed=16,
                                        store_photocurrents=False)
        fit24 = rm.fit_variance_curve(rm.bin_variances(ds.quadratures, ds.phases(), 24))
        fit48 = rm.fit_variance_curve(rm.bin_variances(ds.quadratures, ds.phases(), 48))
        stat = 3 * standard_error_of_variance(1.0, 100_000 / 48)
        assert abs(fit24.v_x - fit48.v_x) < stat
        assert abs(fit24.v_p - fit48.v_p) < stat

    def test_recovered_vs_true_phases_consistent(self):
        st = rm.squeezed_vacuum_state(1.6, 1.6)
        ds = rm.simulate_dual_pulse_run(
            st, MODE, 100_000, drift=rm.PhaseDriftModel(1e5, 0.05, seed=17),
            seed=17, store_photocurrents=False)
        fit_rec = rm.fit_variance_curve(
            rm.bin_variances(ds.quadratures, ds.phases_recovered, 24))
        fit_true = rm.fit_variance_curve(
            rm.bin_variances(ds.quadratures, ds.theta_true, 24))
        stat = 3 * standard_error_of_variance(1.0, 100_000 / 24)
        assert abs(fit_rec.v_x - fit_true.v_x) < stat
        assert abs(fit_rec.v_p - fit_true.v_p) < stat

    def test_empty_scan_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            rm.bin_variances(np.array([]), np.array([]), 8)

    def test_rank_deficient_fit_rejected(self):
        binned = rm.BinnedVariances(
            centers=np.full(8, 0.5),
            variances=np.ones(8),
            counts=np.full(8, 50),
            low_count=np.zeros(8, dtype=bool),
        )
        with pytest.raises(ValueError, match="rank"):
            rm.fit_variance_curve(binned)

    def test_low_count_flagging(self):
        q = np.array([0.1, -0.2, 0.3, 0.0, 0.5, -0.1] * 4)
        ph = np.zeros(24)  # everything lands in bin 0
        binned = rm.bin_variances(q, ph, 8)
        assert binned.counts[0] == 24 and not binned.low_count[0]
        assert binned.low_count[1:].all()


class TestPipelineClosure:
    def test_excess_noise_recovered_through_monte_carlo(self):
        st = rm.squeezed_vacuum_state(1.6, 1.6)
        ch = rm.ChannelParams(0.642, 0.025)
        out = rm.apply_noisy_channel(st, ch)
        drift = rm.PhaseDriftModel(1e5, 0.05, seed=0)
        delta = rm.estimate_channel_noise(st, out, ch.eta, 24, 20_000, seed=21,
                                          drift=drift)
        assert delta == pytest.approx(ch.delta, abs=0.008)


class TestPersistence:
    def test_round_trip_exact(self, tmp_path):
        st = rm.squeezed_vacuum_state(1.6, 1.6)
        drift = rm.PhaseDriftModel(1e5, 0.05, seed=3)
        ds = rm.simulate_dual_pulse_run(st, MODE, 2500, drift=drift, seed=22)
        rm.save_dataset(ds, tmp_path / "run")
        back = rm.load_dataset(tmp_path / "run")
        assert np.array_equal(back.photocurrents, ds.photocurrents)
        assert np.array_equal(back.fringes, ds.fringes)
        assert np.array_equal(back.quadratures, ds.quadratures)
        assert np.array_equal(back.phases_recovered, ds.phases_recovered)
        assert np.array_equal(back.theta_true, ds.theta_true)
        assert back.seed == ds.seed
        assert back.drift == ds.drift
        assert back.mode.dt == ds.mode.dt
        assert np.array_equal(back.mode.samples, ds.mode.samples)
