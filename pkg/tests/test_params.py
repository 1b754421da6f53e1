import math

import pytest

from grantfree.errors import ConfigError
from grantfree.params import ChannelParams, SystemParams, db_to_linear


def test_default_channel_linear_values():
    ch = ChannelParams()
    assert ch.rho == pytest.approx(10 ** 5.2, rel=1e-14)
    assert ch.mu == pytest.approx(10 ** 0.4, rel=1e-14)
    assert ch.capture_factor == pytest.approx(ch.mu / (ch.mu + 1))


def test_from_linear_is_bit_exact():
    ch = ChannelParams.from_linear(2.0, 1e8)
    assert ch.mu == 2.0 and ch.rho == 1e8


def test_ideal_channel_has_no_noise():
    ch = ChannelParams.ideal(2.0)
    assert ch.noise_to_signal == 0.0
    assert ch.no_noise_success == 1.0


@pytest.mark.parametrize("lam", [0.5, 3, 5, 10, 13, 100, 1e-4])
def test_lambda_conversion_is_single_division(lam):
    assert SystemParams(10, 5, lam).lambda_tti == lam / 7000


def test_db_to_linear():
    assert db_to_linear(10) == pytest.approx(10.0)
    assert db_to_linear(0) == 1.0


@pytest.mark.parametrize("kw", [
    dict(n_ues=1, n_rbs=5, lambda_per_s=1),
    dict(n_ues=5, n_rbs=0, lambda_per_s=1),
    dict(n_ues=5, n_rbs=2, lambda_per_s=-1),
    dict(n_ues=5, n_rbs=2, lambda_per_s=math.inf),
    dict(n_ues=5, n_rbs=2, lambda_per_s=1750),
    dict(n_ues=2.5, n_rbs=2, lambda_per_s=1),
])
def test_invalid_system_rejected(kw):
    with pytest.raises(ConfigError):
        SystemParams(**kw)


def test_invalid_channel_rejected():
    with pytest.raises(ConfigError):
        ChannelParams(noise_power_dbm=math.nan)
    with pytest.raises(ConfigError):
        ChannelParams.from_linear(-1.0, 10.0)


def test_with_helpers_keep_rate():
    s = SystemParams(10, 5, 3.0, 14000.0)
    assert s.with_rbs(7).ttis_per_second == 14000.0
    assert s.with_ues(12).n_ues == 12
    assert s.tti_to_ms(7) == pytest.approx(0.5)
