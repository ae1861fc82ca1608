import math

import numpy as np
import pytest

from scdetect.confseq import CsConfig, width_envelope
from scdetect.detector import DetectorConfig
from scdetect.errors import ConfigError, DataDomainError
from scdetect.intervals import ParamInterval
from scdetect.klinf import (
    DiscreteDist,
    bernoulli_kl,
    klinf_dual,
    klinf_dual_argmax,
    klinf_two_sided,
)
from scdetect.simulate import (
    DataGenModel,
    DistSpec,
    SimConfig,
    estimate_arl,
    estimate_delay,
    gen_stream,
    k_constants,
    theoretical_delay_bound,
)


class TestDistSpec:
    def test_parse_grammar(self):
        assert DistSpec.parse("bernoulli:0.5").mean == 0.5
        assert DistSpec.parse("beta:2,3").mean == pytest.approx(0.4)
        assert DistSpec.parse("twopoint:0.1,0.9,0.25").mean == pytest.approx(0.3)
        assert DistSpec.parse("const:0.7").mean == 0.7

    def test_parse_errors(self):
        for bad in ("bernoulli:1.5", "gauss:0,1", "beta:2", "bernoulli:x"):
            with pytest.raises(ConfigError):
                DistSpec.parse(bad)

    def test_to_discrete_exact_families(self):
        d, exact = DistSpec.bernoulli(0.3).to_discrete()
        assert exact and d.mean == pytest.approx(0.3)
        d, exact = DistSpec.twopoint(0.2, 0.8, 0.5).to_discrete()
        assert exact and d.mean == pytest.approx(0.5)
        d, exact = DistSpec.constant(0.4).to_discrete()
        assert exact and d.values == (0.4,)

    def test_to_discrete_beta_quadrature(self):
        d, exact = DistSpec.beta(2, 5).to_discrete()
        assert not exact
        assert d.mean == pytest.approx(2 / 7, abs=1e-3)


class TestGenStream:
    def test_constant_stream(self):
        model = DataGenModel(pre=DistSpec.constant(0.5), seed=1)
        assert np.all(gen_stream(model, 0, 20) == 0.5)

    def test_change_at_boundary(self):
        model = DataGenModel(
            pre=DistSpec.constant(0.0), post=DistSpec.constant(1.0),
            change_at=3, seed=1,
        )
        xs = gen_stream(model, 0, 7)
        assert list(xs) == [0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]

    def test_bernoulli_mean_concentrates(self):
        model = DataGenModel(pre=DistSpec.bernoulli(0.3), seed=2)
        xs = gen_stream(model, 0, 100_000)
        se = 3 * math.sqrt(0.3 * 0.7 / 100_000)
        assert abs(xs.mean() - 0.3) < se

    def test_deterministic_and_independent(self):
        model = DataGenModel(pre=DistSpec.beta(2, 2), seed=3)
        a1 = gen_stream(model, 5, 50)
        a2 = gen_stream(model, 5, 50)
        b = gen_stream(model, 6, 50)
        assert np.array_equal(a1, a2)
        assert not np.array_equal(a1, b)

    def test_horizon_validation(self):
        model = DataGenModel(pre=DistSpec.bernoulli(0.5), seed=0)
        with pytest.raises(ConfigError):
            gen_stream(model, 0, 0)

    def test_change_at_validation(self):
        with pytest.raises(ConfigError):
            DataGenModel(pre=DistSpec.bernoulli(0.5),
                         post=DistSpec.bernoulli(0.9), change_at=0)
        with pytest.raises(ConfigError):
            DataGenModel(pre=DistSpec.bernoulli(0.5), change_at=5)


def _arl_simcfg(trials=5, censor=20, alpha=0.2, **kwargs):
    return SimConfig(
        model=DataGenModel(pre=DistSpec.bernoulli(0.5), seed=11),
        detector=DetectorConfig(cs=CsConfig(alpha=alpha)),
        trials=trials,
        censor=censor,
        **kwargs,
    )


class TestEstimateArl:
    def test_requires_no_change(self):
        cfg = SimConfig(
            model=DataGenModel(
                pre=DistSpec.bernoulli(0.5), post=DistSpec.bernoulli(0.9),
                change_at=5, seed=0,
            ),
            detector=DetectorConfig(cs=CsConfig(alpha=0.2)),
            trials=2,
        )
        with pytest.raises(ConfigError):
            estimate_arl(cfg)

    def test_degenerate_single_trial(self):
        rep = estimate_arl(_arl_simcfg(trials=1, censor=1))
        assert rep.arl_censored_mean == 1.0
        assert rep.trials == 1

    def test_report_fields(self):
        rep = estimate_arl(_arl_simcfg())
        assert rep.kind == "arl"
        assert 0.0 <= rep.arl_censored_fraction <= 1.0
        assert 1.0 <= rep.arl_censored_mean <= 20.0
        assert len(rep.per_trial) == 5
        d = rep.to_dict()
        assert d["config"]["alpha"] == 0.2

    def test_default_censor_policy(self):
        rep = estimate_arl(_arl_simcfg(censor=None))
        assert rep.censor == 20 * math.ceil(1 / 0.2)

    def test_parallel_is_bit_identical(self):
        serial = estimate_arl(_arl_simcfg(trials=6, parallelism=1))
        parallel = estimate_arl(_arl_simcfg(trials=6, parallelism=2))
        a, b = serial.to_dict(True), parallel.to_dict(True)
        a["config"].pop("parallelism"), b["config"].pop("parallelism")
        assert a == b


def _delay_simcfg(post=0.8, trials=6, censor=300, **kwargs):
    return SimConfig(
        model=DataGenModel(
            pre=DistSpec.bernoulli(0.2), post=DistSpec.bernoulli(post),
            change_at=25, seed=13,
        ),
        detector=DetectorConfig(
            cs=CsConfig(alpha=0.05), mode="partitioned",
            theta0_set=ParamInterval(0.0, 0.3),
        ),
        trials=trials,
        censor=censor,
        **kwargs,
    )


class TestEstimateDelay:
    def test_requires_finite_change(self):
        with pytest.raises(ConfigError):
            estimate_delay(_arl_simcfg())

    def test_report_and_theory(self):
        rep = estimate_delay(_delay_simcfg())
        assert rep.kind == "delay"
        assert rep.delay_mean_unconditional >= 0.0
        assert rep.good_event_rate >= 0.0
        assert rep.theory["gap"] == pytest.approx(0.5)
        assert rep.theory["u"] == 602
        assert rep.theory["delay_bound"] == pytest.approx(3 * 602 / 0.95)
        assert rep.theory["K2"] == pytest.approx(
            bernoulli_kl(0.8, 0.3), abs=1e-4
        )

    def test_degenerate_delta_flagged(self):
        cfg = SimConfig(
            model=DataGenModel(
                pre=DistSpec.constant(0.5), post=DistSpec.constant(0.5),
                change_at=10, seed=0,
            ),
            detector=DetectorConfig(cs=CsConfig(alpha=0.2)),
            trials=2,
            censor=20,
        )
        rep = estimate_delay(cfg)
        assert rep.degenerate_delta
        assert any("delta" in f for f in rep.flags)

    def test_default_censor_policy(self):
        rep = estimate_delay(_delay_simcfg(censor=None))
        assert rep.censor == max(50 * 20, 10 * 25)


class TestTheoreticalDelayBound:
    def test_partitioned_scan_matches_naive(self):
        u, bound = theoretical_delay_bound("betting", 0.05, 0.5)
        naive = next(
            n for n in range(1, 10_000)
            if width_envelope("betting", n, 0.05) < 0.5
        )
        assert u == naive == 602
        assert bound == pytest.approx(3 * 602 / 0.95)

    def test_huge_gap_gives_one(self):
        u, _ = theoretical_delay_bound("betting", 0.05, 1.5)
        assert u == 1

    def test_non_partitioned_requires_large_t(self):
        # envelope at T=100 is 1 (clipped), never below a 0.6 gap
        with pytest.raises(ConfigError, match="too early"):
            theoretical_delay_bound("betting", 0.05, 0.6, T=100)
        u, _ = theoretical_delay_bound("betting", 0.05, 0.6, T=3000)
        naive = next(
            n for n in range(1, 10_000)
            if width_envelope("betting", 3000, 0.05)
            + width_envelope("betting", n, 0.05) < 0.6
        )
        assert u == naive

    def test_gap_validation(self):
        with pytest.raises(ConfigError):
            theoretical_delay_bound("betting", 0.05, 0.0)

    def test_hoeffding_fixed_bet_floor(self):
        # gaps below lambda0/4 are unreachable for the fixed-bet family
        with pytest.raises(ConfigError):
            theoretical_delay_bound("hoeffding", 0.05, 0.1, max_scan=200_000)
        u, _ = theoretical_delay_bound("hoeffding", 0.05, 0.3)
        assert u >= 1


class TestKlinfDual:
    def test_point_mass_at_theta(self):
        assert klinf_dual(DiscreteDist.point_mass(0.5), 0.5) == 0.0

    def test_matches_bernoulli_kl(self):
        k, lam = klinf_dual_argmax(DiscreteDist.bernoulli(0.9), 0.5)
        assert k == pytest.approx(bernoulli_kl(0.9, 0.5), abs=1e-9)
        assert k == pytest.approx(0.36806, abs=1e-5)
        assert lam == pytest.approx(1.6, abs=1e-6)

    def test_mean_below_theta_gives_zero(self):
        assert klinf_dual(DiscreteDist.bernoulli(0.3), 0.5) == 0.0

    def test_two_sided_mirrors(self):
        k = klinf_two_sided(DiscreteDist.bernoulli(0.3), 0.5)
        assert k == pytest.approx(bernoulli_kl(0.3, 0.5), abs=1e-9)

    def test_theta_domain(self):
        with pytest.raises(DataDomainError):
            klinf_dual(DiscreteDist.bernoulli(0.5), 0.0)

    def test_dist_validation(self):
        with pytest.raises(ConfigError):
            DiscreteDist((0.2, 1.5), (0.5, 0.5))
        with pytest.raises(ConfigError):
            DiscreteDist((0.2, 0.4), (0.7, 0.7))


class TestKConstants:
    def test_k2_singleton_reduces_to_bernoulli_kl(self):
        model = DataGenModel(
            pre=DistSpec.bernoulli(0.2), post=DistSpec.bernoulli(0.8),
            change_at=10, seed=0,
        )
        out = k_constants(model, ParamInterval(0.2, 0.2))
        assert out["K2"] == pytest.approx(0.83178, abs=1e-4)
        assert out["K2"] == pytest.approx(bernoulli_kl(0.8, 0.2), abs=1e-6)

    def test_k1_grid_minimum(self):
        # theta0 = 0.2, delta = 0.6: closest admissible mean to 0.8 is 0.5
        model = DataGenModel(
            pre=DistSpec.bernoulli(0.2), post=DistSpec.bernoulli(0.8),
            change_at=10, seed=0,
        )
        out = k_constants(model, None, delta=0.6)
        assert out["K1"] == pytest.approx(bernoulli_kl(0.8, 0.5), abs=1e-6)

    def test_post_mean_inside_theta0_gives_zero(self):
        model = DataGenModel(
            pre=DistSpec.bernoulli(0.2), post=DistSpec.bernoulli(0.5),
            change_at=10, seed=0,
        )
        out = k_constants(model, ParamInterval(0.4, 0.6))
        assert out["K2"] == 0.0

    def test_pinsker_lower_bound(self):
        model = DataGenModel(
            pre=DistSpec.bernoulli(0.2), post=DistSpec.bernoulli(0.8),
            change_at=10, seed=0,
        )
        out = k_constants(model, ParamInterval(0.0, 0.3), delta=0.6)
        assert out["K1"] >= 2 * (0.6 / 2) ** 2
        assert out["K2"] >= 2 * 0.5 ** 2

    def test_beta_post_flagged_and_sane(self):
        model = DataGenModel(
            pre=DistSpec.bernoulli(0.2), post=DistSpec.beta(8, 2),
            change_at=10, seed=0,
        )
        out = k_constants(model, ParamInterval(0.2, 0.2))
        gap = 8 / 10 - 0.2
        assert out["K2"] >= 2 * gap ** 2 - 1e-3
