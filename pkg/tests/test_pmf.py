"""Distribution calculus tests: independent oracles are brute-force
enumeration, scipy closed forms, and Monte Carlo sampling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from meiolab import pmf as pm


def random_pmf(rng, max_offset=20, max_len=40):
    offset = int(rng.integers(0, max_offset + 1))
    n = int(rng.integers(1, max_len))
    probs = rng.random(n) + 1e-6
    return pm.Pmf(offset, probs)


class TestPmfBasics:
    def test_normalization_and_moments(self):
        p = pm.Pmf(2, [1.0, 2.0, 1.0])
        assert np.isclose(p.probs.sum(), 1.0)
        assert np.isclose(p.mean, 2 * 0.25 + 3 * 0.5 + 4 * 0.25)
        assert np.isclose(p.variance, 0.5)

    def test_leading_zero_trimmed_into_offset(self):
        p = pm.Pmf(0, [0.0, 0.0, 1.0, 1.0])
        assert p.offset == 2
        assert p.probs.size == 2

    def test_negative_support_rejected(self):
        with pytest.raises(pm.InvalidParameterError):
            pm.Pmf(-1, [1.0])

    def test_bad_probs_rejected(self):
        with pytest.raises(pm.InvalidParameterError):
            pm.Pmf(0, [])
        with pytest.raises(pm.InvalidParameterError):
            pm.Pmf(0, [0.5, -0.5])
        with pytest.raises(pm.InvalidParameterError):
            pm.Pmf(0, [0.0, 0.0])
        with pytest.raises(pm.InvalidParameterError):
            pm.Pmf(0, [np.nan, 1.0])

    def test_quantile_is_smallest_integer_reaching_level(self):
        p = pm.Pmf(0, [0.2, 0.3, 0.5])
        assert p.quantile(0.2) == 0
        assert p.quantile(0.2 + 1e-12) == 1
        assert p.quantile(0.5) == 1
        assert p.quantile(0.99) == 2

    def test_expected_shortfall_by_enumeration(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = random_pmf(rng)
            s = int(rng.integers(0, p.max_value + 3))
            brute = sum(max(k - s, 0) * p.pmf(k) for k in p.support)
            assert np.isclose(p.expected_shortfall(s), brute, atol=1e-12)

    def test_expected_shortfall_telescopes_to_tail_mass(self):
        # ES(s) - ES(s+1) = P(X > s)
        p = pm.make_poisson(7.0)
        for s in range(0, 20):
            drop = p.expected_shortfall(s) - p.expected_shortfall(s + 1)
            tail = 1.0 - p.cdf(s)
            assert np.isclose(drop, tail, atol=1e-12)

    def test_sampling_matches_pmf(self):
        p = pm.Pmf(3, [0.5, 0.2, 0.3])
        rng = np.random.default_rng(7)
        draws = p.sample(rng, size=200_000)
        freq = np.bincount(draws, minlength=6)[3:6] / draws.size
        assert np.allclose(freq, p.probs, atol=5e-3)

    def test_sampling_deterministic_per_seed(self):
        p = pm.make_poisson(5.0)
        a = p.sample(np.random.default_rng(42), size=100)
        b = p.sample(np.random.default_rng(42), size=100)
        assert np.array_equal(a, b)


class TestConstructors:
    def test_point_mass(self):
        p = pm.make_point_mass(4)
        assert p.mean == 4.0 and p.variance == 0.0 and p.pmf(4) == 1.0
        with pytest.raises(pm.InvalidParameterError):
            pm.make_point_mass(-1)

    def test_poisson_matches_scipy(self):
        p = pm.make_poisson(9.5)
        ks = p.support
        assert np.allclose(p.probs, stats.poisson.pmf(ks, 9.5), atol=1e-10)
        assert abs(p.mean - 9.5) < 1e-6
        with pytest.raises(pm.InvalidParameterError):
            pm.make_poisson(0.0)

    def test_uniform_poisson_mixture_mean(self):
        p = pm.make_uniform_poisson_mixture(5, 15)
        assert abs(p.mean - 10.0) < 1e-9
        # variance: E[Var] + Var[E] for M ~ U{5..15}
        ms = np.arange(5, 16)
        expected_var = ms.mean() + ms.var()
        assert abs(p.variance - expected_var) < 1e-6

    def test_empirical_rescaled_to_target_mean(self):
        series = np.array([1, 2, 3, 4, 10])
        p = pm.make_empirical(series, target_mean=10.0)
        scaled = np.floor(series * (10.0 / series.mean()) + 0.5).astype(int)
        assert abs(p.mean - scaled.mean()) < 1e-9

    def test_empirical_rejects_bad_series(self):
        with pytest.raises(pm.InvalidParameterError):
            pm.make_empirical([], 10.0)
        with pytest.raises(pm.InvalidParameterError):
            pm.make_empirical([1.5, 2.0], 10.0)
        with pytest.raises(pm.InvalidParameterError):
            pm.make_empirical([-1, 2], 10.0)
        with pytest.raises(pm.InvalidParameterError):
            pm.make_empirical([0, 0, 0], 10.0)


class TestConvolution:
    def test_fft_vs_direct_on_100_random_pairs(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            a = random_pmf(rng, max_len=300)
            b = random_pmf(rng, max_len=300)
            got = pm.convolve(a, b)
            direct = np.convolve(a.probs, b.probs)
            tail = np.cumsum(direct[::-1])[::-1]
            keep = np.nonzero(tail >= pm.TAIL_PRUNE)[0]
            direct = direct[: keep[-1] + 1] if keep.size else direct
            want = pm.Pmf(a.offset + b.offset, direct)
            assert got.offset == want.offset
            assert np.allclose(got.probs, want.probs, atol=1e-9)

    def test_poisson_additivity(self):
        a, b = pm.make_poisson(3.0), pm.make_poisson(4.5)
        assert pm.convolve(a, b).allclose(pm.make_poisson(7.5), atol=1e-9)

    def test_offsets_add(self):
        got = pm.convolve(pm.make_point_mass(3), pm.make_point_mass(5))
        assert got.pmf(8) == 1.0

    def test_convolution_moments(self):
        rng = np.random.default_rng(2)
        a, b = random_pmf(rng), random_pmf(rng)
        c = pm.convolve(a, b)
        assert np.isclose(c.mean, a.mean + b.mean, atol=1e-9)
        assert np.isclose(c.variance, a.variance + b.variance, atol=1e-8)

    def test_convolve_all_empty_is_zero(self):
        assert pm.convolve_all([]).pmf(0) == 1.0


class TestCompound:
    def test_wald_identity_mean(self):
        # E[sum] = E[D] * E[L], the compound-mean (Wald) identity
        rng = np.random.default_rng(3)
        for _ in range(10):
            d, l = random_pmf(rng, max_offset=3, max_len=15), random_pmf(
                rng, max_offset=0, max_len=6
            )
            c = pm.compound_lead_time_demand(d, l)
            assert np.isclose(c.mean, d.mean * l.mean, atol=1e-9)

    def test_compound_variance_law(self):
        # Var = E[L] Var(D) + Var(L) E[D]^2
        d = pm.make_poisson(4.0)
        l = pm.Pmf(1, [0.5, 0.5])
        c = pm.compound_lead_time_demand(d, l)
        want = l.mean * d.variance + l.variance * d.mean**2
        assert np.isclose(c.variance, want, atol=1e-6)

    def test_zero_lead_is_point_zero(self):
        c = pm.compound_lead_time_demand(pm.make_poisson(5.0), pm.make_point_mass(0))
        assert c.pmf(0) == 1.0

    def test_unit_lead_is_demand(self):
        d = pm.make_poisson(5.0)
        assert pm.compound_lead_time_demand(d, pm.make_point_mass(1)).allclose(d)

    def test_monte_carlo_agreement(self):
        d = pm.Pmf(0, [0.3, 0.4, 0.3])
        l = pm.Pmf(1, [0.6, 0.4])
        c = pm.compound_lead_time_demand(d, l)
        rng = np.random.default_rng(11)
        n = 200_000
        ls = l.sample(rng, n)
        total = np.zeros(n, dtype=int)
        for k in range(1, l.max_value + 1):
            draws = d.sample(rng, n)
            total += draws * (ls >= k)
        freq = np.bincount(total, minlength=c.max_value + 1)[: c.max_value + 1] / n
        dense = np.zeros(c.max_value + 1)
        dense[c.offset :] = c.probs
        assert np.allclose(freq, dense, atol=5e-3)


class TestThinning:
    def test_single_supplier_identity(self):
        p = pm.make_poisson(5.0)
        assert pm.thin_random_routing(p, 1) is p

    def test_two_suppliers_mean_halved(self):
        p = pm.make_poisson(6.0)
        t = pm.thin_random_routing(p, 2)
        assert np.isclose(t.mean, 3.0, atol=1e-9)
        assert np.isclose(t.pmf(0), 0.5 + 0.5 * p.pmf(0), atol=1e-12)

    def test_invalid_count(self):
        with pytest.raises(pm.InvalidParameterError):
            pm.thin_random_routing(pm.make_point_mass(1), 0)


class TestSpecs:
    def test_poisson_uniform_spec_mean(self):
        spec = pm.DemandSpec.poisson_uniform(5, 15)
        assert spec.nominal_mean == 10.0
        assert abs(spec.resolved.mean - 10.0) < 0.1

    def test_mean_invariant_enforced(self):
        with pytest.raises(pm.InvalidParameterError):
            pm.DemandSpec("bad", (), pm.make_point_mass(5), 10.0)

    def test_lead_time_specs(self):
        assert pm.LeadTimeSpec.static(2).resolved.pmf(2) == 1.0
        u = pm.LeadTimeSpec.uniform(1, 5).resolved
        assert u.offset == 1 and np.allclose(u.probs, 0.2)
        with pytest.raises(pm.InvalidParameterError):
            pm.LeadTimeSpec.uniform(3, 1)


class TestCsv:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "demand.csv"
        path.write_text("p1,p2\n1,4\n2,5\n3,6\n")
        data = pm.load_demand_csv(path)
        assert np.array_equal(data["p1"], [1, 2, 3])
        assert np.array_equal(data["p2"], [4, 5, 6])

    @pytest.mark.parametrize("body", ["", "p1\n", "p1,p2\n1\n", "p1\nx\n", "p1\n-2\n", "p1\n \n"])
    def test_malformed_rejected(self, tmp_path, body):
        path = tmp_path / "bad.csv"
        path.write_text(body)
        with pytest.raises(pm.InvalidParameterError):
            pm.load_demand_csv(path)


@settings(max_examples=50, deadline=None)
@given(
    offset=st.integers(0, 10),
    probs=st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=30),
    shift=st.integers(0, 5),
)
def test_property_convolve_with_point_mass_shifts(offset, probs, shift):
    p = pm.Pmf(offset, probs)
    q = pm.convolve(p, pm.make_point_mass(shift))
    assert q.offset == p.offset + shift
    assert np.allclose(q.probs, p.probs, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    pa=st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=40),
    pb=st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=40),
)
def test_property_convolution_commutes(pa, pb):
    a, b = pm.Pmf(0, pa), pm.Pmf(0, pb)
    assert pm.convolve(a, b).allclose(pm.convolve(b, a), atol=1e-12)
