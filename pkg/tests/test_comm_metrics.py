import math

import numpy as np
import pytest

from repisac import ConfigError, build_precoders, spectral_efficiency, user_sinr
from repisac.precoding import effective_channels


class TestSpectralEfficiency:
    def test_shannon_formula(self):
        assert spectral_efficiency(0.0) == 0.0
        assert spectral_efficiency(1.0) == pytest.approx(1.0)
        assert spectral_efficiency(3.0) == pytest.approx(2.0)
        assert spectral_efficiency(10.0) == pytest.approx(math.log2(11.0))

    def test_negative_rejected(self):
        with pytest.raises(ConfigError):
            spectral_efficiency(-0.1)


class TestUserSinr:
    def test_matches_manual_computation(self, small_setup):
        config, _, channels, _, precoders = small_setup
        n = 0
        metrics = user_sinr(n, precoders, channels, config)
        fdot = effective_channels(channels, config)
        rho = config.tx_power_watt
        fr = config.user_fractions
        signal = rho * fr[n] * abs(fdot[n] @ precoders.user_precoders[n]) ** 2
        interference = sum(rho * fr[m] * abs(fdot[n] @ precoders.user_precoders[m]) ** 2
                           for m in range(config.n_users) if m != n)
        sensing = (rho * config.sensing_power_fraction
                   * abs(fdot[n] @ precoders.sensing_precoder) ** 2)
        noise = (abs(config.nu) ** 2 * abs(channels.h_user[n]) ** 2
                 * config.repeater_noise_watt + config.ue_noise_watt)
        assert metrics.signal_power == pytest.approx(signal, rel=1e-12)
        assert metrics.multiuser_interference == pytest.approx(interference, rel=1e-9)
        assert metrics.sensing_interference == pytest.approx(sensing, rel=1e-12)
        assert metrics.noise_power == pytest.approx(noise, rel=1e-12)
        assert metrics.sinr == pytest.approx(signal / (interference + sensing + noise),
                                             rel=1e-9)
        assert metrics.se == pytest.approx(spectral_efficiency(metrics.sinr), rel=1e-12)

    def test_literal_sum_keeps_own_term_in_denominator(self, small_setup):
        config, _, channels, _, precoders = small_setup
        base = user_sinr(0, precoders, channels, config)
        literal = user_sinr(0, precoders, channels,
                            config.with_updates(sinr_literal_sum=True))
        assert literal.multiuser_interference == pytest.approx(
            base.multiuser_interference + base.signal_power, rel=1e-12)
        assert literal.sinr < base.sinr

    def test_no_sensing_interference_without_sensing_beam(self, small_setup):
        config, _, channels, _, _ = small_setup
        cfg = config.with_updates(sensing_power_fraction=0.0,
                                  user_power_fractions=(0.5, 0.5))
        precoders = build_precoders(cfg, channels)
        assert user_sinr(0, precoders, channels, cfg).sensing_interference == 0.0

    def test_repeater_noise_leaves_with_repeater(self, small_setup):
        config, _, channels, _, _ = small_setup
        cfg = config.with_updates(repeater_on=False)
        precoders = build_precoders(cfg, channels)
        metrics = user_sinr(0, precoders, channels, cfg)
        assert metrics.noise_power == pytest.approx(cfg.ue_noise_watt, rel=1e-12)

    def test_index_validation(self, small_setup):
        config, _, channels, _, precoders = small_setup
        with pytest.raises(ConfigError):
            user_sinr(config.n_users, precoders, channels, config)
