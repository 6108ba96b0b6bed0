import numpy as np
import pytest

from repisac import (NumericalDomainError, assemble_statistics, calibrate_threshold,
                     decide, drop_entities, glrt_statistic, map_estimate,
                     oracle_loglike_ratio, regressor, run_detection, sensing_channel,
                     sensing_noise_cov)
from repisac.channel import ClutterModel
from repisac.detector import (oracle_check, random_small_instance, run_sensing_trial,
                              threshold_from_null_stats, trial_rng)
from repisac.precoding import build_transmit_frame
from repisac.propagation import draw_noise, receive_bs_slot


def cn(rng, shape):
    return (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.sqrt(2.0)


class TestRegressor:
    def test_maps_vectorized_clutter_to_clutter_times_x(self, rng):
        nt, nr = 3, 4
        x = cn(rng, nt)
        c = cn(rng, (nr, nt))
        b = regressor(x, nr)
        assert b.shape == (nr, nt * nr)
        np.testing.assert_allclose(b @ c.reshape(-1, order="F"), c @ x, atol=1e-13)

    def test_workspace_regressors_match(self, rng):
        obs, frame, channels, config, clutter = random_small_instance(rng)
        ws = assemble_statistics(obs, frame, channels, config, clutter)
        stacked = ws.regressors()
        for tau in range(frame.x.shape[0]):
            np.testing.assert_array_equal(stacked[tau],
                                          regressor(frame.x[tau], config.n_rx_antennas))


class TestSensingModel:
    def test_noise_covariance_terms(self, rng):
        obs, frame, channels, config, _ = random_small_instance(rng)
        x = frame.x[0]
        cov = sensing_noise_cov(x, config, channels.b_rx)
        nu2 = abs(config.nu) ** 2
        expected = ((config.residual_interbs_power * np.vdot(x, x).real
                     + config.bs_noise_watt) * np.eye(config.n_rx_antennas)
                    + nu2 * config.repeater_noise_watt
                    * np.outer(channels.b_rx, channels.b_rx.conj()))
        np.testing.assert_allclose(cov, expected, atol=1e-14)

    def test_equivalent_channel_combines_direct_and_repeater_paths(self, rng):
        a_tx, a_rx, b_rx = cn(rng, 3), cn(rng, 4), cn(rng, 4)
        g = complex(cn(rng, ()))
        nu = 2.0j
        x = cn(rng, 3)
        r = sensing_channel(x, a_tx, a_rx, b_rx, g, nu)
        np.testing.assert_allclose(r, (a_rx + nu * g * b_rx) * (a_tx @ x), atol=1e-14)


class TestAssembledStatistics:
    def test_shapes_and_hermitian_structure(self, rng):
        obs, frame, channels, config, clutter = random_small_instance(rng)
        ws = assemble_statistics(obs, frame, channels, config, clutter)
        d = config.n_tx_antennas * config.n_rx_antennas
        assert ws.t_h1.shape == (d + 1,)
        assert ws.q_h1.shape == (d + 1, d + 1)
        np.testing.assert_allclose(ws.q_h1, ws.q_h1.conj().T, atol=1e-12)
        np.testing.assert_allclose(ws.q_h0, ws.q_h0.conj().T, atol=1e-12)
        assert np.all(np.linalg.eigvalsh(ws.q_h1) > 0)
        np.testing.assert_array_equal(ws.t_h1[1:], ws.t_h0)
        np.testing.assert_array_equal(ws.q_h1[1:, 1:], ws.q_h0)

    def test_matches_explicit_stacked_construction(self, rng):
        # reference: build everything from dense per-slot regressors
        obs, frame, channels, config, clutter = random_small_instance(rng)
        ws = assemble_statistics(obs, frame, channels, config, clutter)
        nr = config.n_rx_antennas
        q_bb = np.zeros_like(ws.q_h0)
        t_h0 = np.zeros_like(ws.t_h0)
        q_rr = 0.0
        t_top = 0.0
        cross = np.zeros_like(ws.t_h0)
        v = channels.a_rx + config.nu * channels.g_rep * channels.b_rx
        for tau in range(frame.x.shape[0]):
            b = regressor(frame.x[tau], nr)
            s_inv = np.linalg.inv(sensing_noise_cov(frame.x[tau], config, channels.b_rx))
            r = v * (channels.a_tx @ frame.x[tau])
            q_bb += b.conj().T @ s_inv @ b
            t_h0 += b.conj().T @ s_inv @ obs.y_slots[tau]
            q_rr += (r.conj() @ s_inv @ r).real
            t_top += r.conj() @ s_inv @ obs.y_slots[tau]
            cross += b.conj().T @ s_inv @ r
        np.testing.assert_allclose(ws.q_h0, q_bb + clutter.inverse_covariance(),
                                   rtol=1e-10)
        np.testing.assert_allclose(ws.t_h0, t_h0, rtol=1e-10)
        np.testing.assert_allclose(ws.q_h1[0, 0].real,
                                   q_rr + 1.0 / config.rcs_variance, rtol=1e-10)
        np.testing.assert_allclose(ws.t_h1[0], t_top, rtol=1e-10)
        np.testing.assert_allclose(ws.q_h1[1:, 0], cross, rtol=1e-10)

    def test_clutter_size_mismatch_rejected(self, rng):
        obs, frame, channels, config, _ = random_small_instance(rng)
        with pytest.raises(NumericalDomainError):
            assemble_statistics(obs, frame, channels, config, ClutterModel.iid(1.0, 3, 3))


class TestDetector:
    def test_oracle_agreement_on_random_instances(self):
        max_err, tol = oracle_check(n_instances=30, seed=11)
        assert max_err <= tol

    def test_oracle_agreement_with_full_clutter_covariance(self, rng):
        inst = random_small_instance(rng, full_clutter_cov=True)
        obs, frame, channels, config, clutter = inst
        ws = assemble_statistics(obs, frame, channels, config, clutter)
        t = glrt_statistic(ws)
        t_oracle = oracle_loglike_ratio(obs, frame, channels, config, clutter)
        assert abs(t - t_oracle) <= 1e-6 * (1 + abs(t))

    def test_map_estimate_satisfies_stationarity(self, rng):
        obs, frame, channels, config, clutter = random_small_instance(rng)
        ws = assemble_statistics(obs, frame, channels, config, clutter)
        alpha, c = map_estimate(ws)
        z = np.concatenate([[alpha], c])
        np.testing.assert_allclose(ws.q_h1 @ z, ws.t_h1, atol=1e-10)

    def test_statistic_grows_with_injected_target(self, rng):
        obs, frame, channels, config, clutter = random_small_instance(
            rng, slot_length=8)
        ws0 = assemble_statistics(obs, frame, channels, config, clutter)
        v = channels.a_rx + config.nu * channels.g_rep * channels.b_rx
        r = (frame.x @ channels.a_tx)[:, None] * v[None, :]
        boosted = type(obs)(y_slots=obs.y_slots + 20.0 * r)
        ws1 = assemble_statistics(boosted, frame, channels, config, clutter)
        assert glrt_statistic(ws1) > glrt_statistic(ws0)

    def test_decision_rule_boundary(self):
        assert decide(1.0, 1.0) == "H1"
        assert decide(0.999, 1.0) == "H0"

    def test_run_detection_bundles_everything(self, rng):
        obs, frame, channels, config, clutter = random_small_instance(rng)
        result = run_detection(obs, frame, channels, config, clutter, threshold=0.0)
        ws = assemble_statistics(obs, frame, channels, config, clutter)
        assert result.test_statistic == pytest.approx(glrt_statistic(ws))
        alpha, c = map_estimate(ws)
        assert result.rcs_estimate == pytest.approx(alpha)
        np.testing.assert_allclose(result.clutter_estimate, c)
        assert result.decision == decide(result.test_statistic, 0.0)


class TestTrials:
    def test_trial_rng_is_reproducible_and_keyed(self):
        a = trial_rng(0, (1, 2), 5).normal(size=3)
        b = trial_rng(0, (1, 2), 5).normal(size=3)
        c = trial_rng(0, (1, 2), 6).normal(size=3)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_sensing_trial_is_deterministic(self, small_setup):
        config, _, channels, clutter, precoders = small_setup
        t1 = run_sensing_trial(config, channels, clutter, precoders,
                               trial_rng(0, (3,), 0))
        t2 = run_sensing_trial(config, channels, clutter, precoders,
                               trial_rng(0, (3,), 0))
        assert t1 == t2

    def test_threshold_is_empirical_upper_quantile(self):
        values = np.arange(1000, dtype=float)
        thr = threshold_from_null_stats(values, 0.01)
        assert np.mean(values >= thr) <= 0.01
        assert np.mean(values >= thr) >= 0.005

    def test_calibration_controls_false_alarms(self, small_setup):
        config, geometry, channels, clutter, precoders = small_setup
        cfg = config.with_updates(pfa_target=0.05, calibration_trials=400)
        threshold, t_null = calibrate_threshold(cfg, geometry, channels=channels,
                                                precoders=precoders,
                                                clutter_model=clutter,
                                                seed_key=(8,))
        assert t_null.shape == (400,)
        assert np.mean(t_null >= threshold) <= 0.05

    def test_calibration_warns_when_underresolved(self, small_setup):
        config, geometry, channels, clutter, precoders = small_setup
        cfg = config.with_updates(pfa_target=0.01, calibration_trials=50)
        with pytest.warns(UserWarning, match="calibration trials"):
            calibrate_threshold(cfg, geometry, channels=channels, precoders=precoders,
                                clutter_model=clutter, seed_key=(8,))

    def test_detection_probability_rises_with_strong_target(self, small_setup):
        config, geometry, channels, clutter, precoders = small_setup
        cfg = config.with_updates(pfa_target=0.05, calibration_trials=400)
        threshold, _ = calibrate_threshold(cfg, geometry, channels=channels,
                                           precoders=precoders, clutter_model=clutter,
                                           seed_key=(8,))
        strong = cfg.with_updates(rcs_variance=1e9)
        hits = [run_sensing_trial(strong, channels, clutter, precoders,
                                  trial_rng(0, (9,), i)) >= threshold
                for i in range(100)]
        assert np.mean(hits) > 0.8


class TestModelConsistency:
    def test_simulated_observation_matches_assembled_model(self, rng):
        # propagate a known draw, then subtract every model term explicitly
        obs, frame, channels, config, clutter = random_small_instance(rng)
        channels.rcs = complex(cn(rng, ()))
        channels.clutter = cn(rng, channels.clutter.shape)
        noise = draw_noise(config, rng)
        sim = receive_bs_slot(frame, channels, noise, config)
        v = channels.a_rx + config.nu * channels.g_rep * channels.b_rx
        for tau in range(frame.x.shape[0]):
            b = regressor(frame.x[tau], config.n_rx_antennas)
            model = (channels.rcs * v * (channels.a_tx @ frame.x[tau])
                     + b @ channels.clutter.reshape(-1, order="F")
                     + channels.interbs_error @ frame.x[tau]
                     + config.nu * noise.w_rep[tau] * channels.b_rx + noise.w_bs[tau])
            np.testing.assert_allclose(sim.y_slots[tau], model, atol=1e-12)
