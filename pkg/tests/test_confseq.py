import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scdetect.confseq import (
    BettingCs,
    CsConfig,
    HoeffdingCs,
    bet_next,
    cs_interval,
    hoeffding_halfwidth,
    hoeffding_update,
    mixture_component_bets,
    new_cs,
    update_cs,
    width_envelope,
    z_stat,
)
from scdetect.errors import ConfigError, DataDomainError


@pytest.fixture
def betting_config():
    return CsConfig(alpha=0.05)


class TestConfig:
    def test_alpha_out_of_range(self):
        with pytest.raises(ConfigError):
            CsConfig(alpha=1.1)
        with pytest.raises(ConfigError):
            CsConfig(alpha=0.0)

    def test_grid_too_small(self):
        with pytest.raises(ConfigError):
            CsConfig(alpha=0.05, grid_size=2)

    def test_lambda0_range(self):
        with pytest.raises(ConfigError):
            CsConfig(alpha=0.05, family="hoeffding", hoeffding_lambda0=2.0)

    def test_unknown_enums(self):
        with pytest.raises(ConfigError):
            CsConfig(alpha=0.05, family="bayes")
        with pytest.raises(ConfigError):
            CsConfig(alpha=0.05, strategy="kelly")


class TestNewCs:
    def test_fresh_betting_cs_is_full_interval(self, betting_config):
        cs = new_cs(betting_config, start_index=7)
        assert cs_interval(cs).lower == 0.0
        assert cs_interval(cs).upper == 1.0
        assert cs.n_local == 0
        assert cs.start_index == 7
        assert np.all(cs.log_wealth() == 0.0)

    def test_fresh_hoeffding_cs(self):
        cs = new_cs(CsConfig(alpha=0.5, family="hoeffding"), start_index=1)
        assert cs_interval(cs).lower == 0.0
        assert cs_interval(cs).upper == 1.0

    def test_bad_start_index(self, betting_config):
        with pytest.raises(ConfigError):
            new_cs(betting_config, start_index=0)


class TestBets:
    def test_two_component_bets_at_half(self):
        # two cells of [-2, 2] have midpoints -1 and +1
        cs = BettingCs(CsConfig(alpha=0.05, mixture_bets=2))
        assert np.allclose(bet_next(cs, 0.5), [-1.0, 1.0])

    def test_bets_lie_in_admissible_range(self):
        grid = np.linspace(0.0, 1.0, 101)
        bets = mixture_component_bets(grid, 5)
        up = np.where(grid > 0, 1.0 / np.maximum(grid, 1e-12), np.inf)
        down = np.where(grid < 1, 1.0 / np.maximum(1 - grid, 1e-12), np.inf)
        assert np.all(bets <= up[:, None] + 1e-12)
        assert np.all(bets >= -down[:, None] - 1e-12)

    def test_newton_bet_starts_at_zero(self):
        cs = BettingCs(CsConfig(alpha=0.05, strategy="newton"))
        assert np.all(cs.next_bets() == 0.0)
        assert bet_next(cs, 0.3) == 0.0

    def test_newton_bet_sign_follows_gradient(self):
        # all observations above s: the log-wealth objective
        # sum log(1 + lam (x - s)) has positive derivative sum(x - s) at
        # lam = 0, so the adaptive bet must move positive
        cs = BettingCs(CsConfig(alpha=0.05, strategy="newton"))
        s = 0.3
        xs = [0.9, 0.8, 0.95]
        assert sum(x - s for x in xs) > 0
        for x in xs:
            cs.update(x)
        assert bet_next(cs, s) > 0.0
        # and symmetric: observations below s push the bet negative
        cs2 = BettingCs(CsConfig(alpha=0.05, strategy="newton"))
        for x in (0.05, 0.1, 0.0):
            cs2.update(x)
        assert bet_next(cs2, 0.7) < 0.0

    def test_bet_next_requires_grid_point(self, betting_config):
        cs = BettingCs(betting_config)
        with pytest.raises(ConfigError):
            bet_next(cs, 0.2345)


class TestUpdate:
    def test_zero_bets_never_move_wealth(self, betting_config):
        cs = BettingCs(betting_config, bets=np.zeros((101, 1)))
        for x in (0.0, 0.3, 1.0, 0.5):
            update_cs(cs, x)
        assert np.all(cs.log_wealth() == 0.0)
        assert cs_interval(cs).lower == 0.0
        assert cs_interval(cs).upper == 1.0

    def test_single_fixed_bet_arithmetic(self):
        # bet 1 at s = 0.5, observe x = 1: wealth 1 + 1*(1 - 0.5) = 1.5
        cfg = CsConfig(alpha=0.05, grid_size=3)
        cs = BettingCs(cfg, bets=np.ones((3, 1)))
        update_cs(cs, 1.0)
        lw = cs.log_wealth()
        assert lw[1] == pytest.approx(math.log(1.5), abs=1e-12)
        # threshold is log 20, so 0.5 stays in the interval
        assert math.log(1.5) < math.log(1 / 0.05)
        assert cs_interval(cs).contains(0.5)

    def test_out_of_domain_observation(self, betting_config):
        cs = new_cs(betting_config)
        with pytest.raises(DataDomainError):
            update_cs(cs, 1.5)
        with pytest.raises(DataDomainError):
            update_cs(cs, -0.01)
        with pytest.raises(DataDomainError):
            update_cs(cs, float("nan"))

    def test_mixture_wealth_is_exact_component_average(self):
        rng = np.random.default_rng(5)
        cfg = CsConfig(alpha=0.05, grid_size=11, mixture_bets=4)
        cs = BettingCs(cfg)
        bets = cs.next_bets()
        xs = rng.random(20)
        for x in xs:
            cs.update(x)
        grid = cs.grid
        # independent product-form recomputation
        for j in range(len(grid)):
            wealth = np.ones(bets.shape[1])
            for x in xs:
                wealth *= 1.0 + bets[j] * (x - grid[j])
            expected = math.log(wealth.mean())
            assert cs.log_wealth()[j] == pytest.approx(expected, rel=1e-9)

    def test_interval_never_widens_on_real_data(self, betting_config):
        rng = np.random.default_rng(17)
        cs = new_cs(betting_config)
        prev = cs_interval(cs)
        for x in (rng.random(300) < 0.7).astype(float):
            update_cs(cs, x)
            cur = cs_interval(cs)
            assert prev.is_superset(cur)
            prev = cur


@settings(max_examples=40, deadline=None)
@given(
    xs=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40),
    family=st.sampled_from(["betting-mixture", "betting-newton", "hoeffding"]),
)
def test_nestedness_property(xs, family):
    if family == "hoeffding":
        cfg = CsConfig(alpha=0.1, family="hoeffding")
    else:
        cfg = CsConfig(alpha=0.1, strategy=family.split("-")[1], grid_size=21)
    cs = new_cs(cfg)
    prev = cs_interval(cs)
    for x in xs:
        update_cs(cs, x)
        cur = cs_interval(cs)
        assert prev.is_superset(cur)
        prev = cur


class TestHoeffding:
    def test_halfwidth_small_n(self):
        # (log 40 + 8 * 0.25 / 8) / (8 * 0.5)
        expected = (math.log(40.0) + 0.25) / 4.0
        assert hoeffding_halfwidth(8, 0.05, 0.5) == pytest.approx(expected)
        assert expected == pytest.approx(0.9847, abs=1e-4)

    def test_halfwidth_large_n(self):
        expected = (math.log(40.0) + 1000 * 0.25 / 8.0) / 500.0
        assert hoeffding_halfwidth(1000, 0.05, 0.5) == pytest.approx(expected)
        assert expected == pytest.approx(0.0699, abs=1e-4)

    def test_interval_matches_formula(self):
        cfg = CsConfig(alpha=0.05, family="hoeffding")
        cs = new_cs(cfg)
        for x in (0.0, 1.0) * 4:  # 8 observations, mean 0.5
            hoeffding_update(cs, x)
        # half-width ~ 0.985 clips the interval to the full space
        assert cs_interval(cs).lower == 0.0
        assert cs_interval(cs).upper == 1.0

    def test_interval_contains_stable_mean(self):
        cfg = CsConfig(alpha=0.05, family="hoeffding")
        cs = new_cs(cfg)
        pattern = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]  # mean 0.3
        for _ in range(100):
            for x in pattern:
                hoeffding_update(cs, x)
        iv = cs_interval(cs)
        assert iv.contains(0.3)
        h = hoeffding_halfwidth(1000, 0.05, 0.5)
        assert iv.lower >= 0.3 - h - 1e-9
        assert iv.upper <= 0.3 + h + 1e-9

    def test_rejects_betting_state(self):
        cs = new_cs(CsConfig(alpha=0.05))
        with pytest.raises(ConfigError):
            hoeffding_update(cs, 0.5)


class TestWidthEnvelope:
    def test_betting_value(self):
        expected = 4.0 * math.sqrt(math.log(10000 / 0.05) / 10000)
        assert width_envelope("betting", 10000, 0.05) == pytest.approx(expected)
        assert expected == pytest.approx(0.1397, abs=2e-4)

    def test_clipped_at_parameter_diameter(self):
        assert width_envelope("betting", 100, 0.05) == 1.0

    def test_nonincreasing_and_limits(self):
        for family in ("betting", "hoeffding"):
            vals = [width_envelope(family, n, 0.05) for n in range(1, 20000, 37)]
            below = [v for v in vals if v < 1.0]
            assert all(b <= a + 1e-12 for a, b in zip(below, below[1:]))
        # the betting envelope vanishes; the fixed-bet envelope converges
        # to lambda0/4 (a fixed bet cannot resolve arbitrarily small gaps)
        assert width_envelope("betting", 10**9, 0.05) < 1e-3
        assert width_envelope("hoeffding", 10**9, 0.05) == pytest.approx(
            0.125, abs=1e-6
        )

    def test_hoeffding_matches_halfwidth(self):
        assert width_envelope("hoeffding", 500, 0.1, hoeffding_lambda0=0.5) == (
            pytest.approx(min(1.0, 2 * hoeffding_halfwidth(500, 0.1, 0.5)))
        )

    def test_bad_inputs(self):
        with pytest.raises(ConfigError):
            width_envelope("betting", 0, 0.05)
        with pytest.raises(ConfigError):
            width_envelope("gaussian", 10, 0.05)


class TestZStat:
    def test_constant_at_theta_is_zero(self):
        assert z_stat([0.4, 0.4, 0.4], 0.4) == 0.0

    def test_all_zeros_attains_boundary(self):
        # objective n log(1 + 0.5 lam) increases up to lam = 2
        val = z_stat([0.0] * 5, 0.5)
        assert val == pytest.approx(5 * math.log(2.0), abs=1e-6)

    def test_monotone_in_theta(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            xs = rng.random(rng.integers(1, 50))
            a, b = np.sort(rng.uniform(0.02, 0.98, size=2))
            if a == b:
                continue
            assert z_stat(xs, b) >= z_stat(xs, a) - 1e-7

    def test_domain_errors(self):
        with pytest.raises(DataDomainError):
            z_stat([], 0.5)
        with pytest.raises(DataDomainError):
            z_stat([0.5], 1.0)
        with pytest.raises(DataDomainError):
            z_stat([1.5], 0.5)
