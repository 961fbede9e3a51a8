import math

import numpy as np
import pytest
from scipy import integrate, special
from scipy.stats import qmc

from relboltz.phase_space import (JuttnerField, JuttnerParams, PhasePoint, ShellError, SumField,
                                  TabulatedField, ZeroField, canonical_momentum, check_on_shell, current,
                                  juttner_energy_cdf, juttner_eval, juttner_log_norm, juttner_mean_energy,
                                  juttner_sample, lift_to_shell, sample_juttner_momenta, shell_error,
                                  spatial_density, vol1_density)
from relboltz.rng import CounterRNG
from relboltz.stats import ks_statistic

REST = np.array([1.0, 0.0, 0.0, 0.0])


def _z_quadrature(beta):
    # int exp(-beta p0) d^3p by radial quadrature, independent of the Bessel closed form
    val, _ = integrate.quad(lambda p: 4 * math.pi * p * p * math.exp(-beta * math.sqrt(1 + p * p)), 0, np.inf,
                            epsabs=0, epsrel=1e-13, limit=200)
    return val


def test_lift_to_shell_rest_vector(mink):
    phi = lift_to_shell(mink, np.zeros(4), mink.frame(np.zeros(4)), [0.0, 0.0, 0.0])
    assert np.allclose(phi.mdot, REST)


def test_lift_to_shell_minkowski_momentum(mink):
    phi = lift_to_shell(mink, np.zeros(4), mink.frame(np.zeros(4)), [3.0, 0.0, 0.0])
    assert np.allclose(phi.mdot, [math.sqrt(10.0), 3.0, 0.0, 0.0], atol=1e-15)
    assert shell_error(mink, phi.m, phi.mdot) <= 1e-14


def test_lift_to_shell_schwarzschild(schw):
    m = np.array([0.0, 6.0, math.pi / 2, 0.0])
    phi = lift_to_shell(schw, m, schw.frame(m), [1.0, 0.0, 0.0])
    g = schw.metric(m)
    assert abs(phi.mdot @ g @ phi.mdot - 1.0) <= 1e-12


def test_check_on_shell_rejects_off_shell_and_past_directed(mink):
    with pytest.raises(ShellError):
        check_on_shell(mink, np.zeros(4), np.array([1.1, 0.0, 0.0, 0.0]))
    with pytest.raises(ShellError):
        check_on_shell(mink, np.zeros(4), np.array([-1.0, 0.0, 0.0, 0.0]))


def test_vol1_density_values():
    assert vol1_density([0.0, 0.0, 0.0]) == 1.0
    assert vol1_density([3.0, 4.0, 0.0]) == pytest.approx(1.0 / math.sqrt(26.0), rel=1e-15)


def test_vol1_ball_volume_matches_hyperboloid_surface_integral():
    # radial integral of the density over |p| <= 2 ...
    R = 2.0
    radial, _ = integrate.quad(lambda p: 4 * math.pi * p * p * vol1_density([p, 0.0, 0.0]), 0, R,
                               epsabs=0, epsrel=1e-13)
    # ... against the Riemannian volume of the hyperboloid cap, sinh^2(chi) dchi dOmega
    surface, _ = integrate.quad(lambda c: 4 * math.pi * math.sinh(c) ** 2, 0, math.asinh(R),
                                epsabs=0, epsrel=1e-13)
    assert abs(radial - surface) <= 1e-6


def test_juttner_eval_at_rest(mink):
    beta = 2.0
    z = _z_quadrature(beta)
    val = juttner_eval(mink, JuttnerParams(beta, REST), PhasePoint(np.zeros(4), REST))
    assert val == pytest.approx(math.exp(-beta) / z, rel=1e-10)
    assert juttner_log_norm(beta) == pytest.approx(math.log(z), abs=1e-10)


def test_juttner_eval_ratio_is_boltzmann_factor(mink):
    beta = 40.0
    p = np.array([0.3, -0.2, 0.1])
    v = np.concatenate([[math.sqrt(1 + p @ p)], p])
    par = JuttnerParams(beta, REST)
    r = juttner_eval(mink, par, PhasePoint(np.zeros(4), v)) / juttner_eval(mink, par, PhasePoint(np.zeros(4), REST))
    assert r == pytest.approx(math.exp(-beta * (v[0] - 1.0)), rel=1e-12)


@pytest.mark.parametrize("beta", [1.0, 5.0])
def test_juttner_normalization_quasi_monte_carlo(mink, beta):
    # 2^20 scrambled Sobol points mapped to an isotropic Gamma(3, beta) proposal
    u = qmc.Sobol(3, scramble=True, seed=7).random_base2(20)
    r = special.gammaincinv(3, u[:, 0]) / beta
    cth = 2 * u[:, 1] - 1
    ph = 2 * math.pi * u[:, 2]
    sth = np.sqrt(1 - cth**2)
    p = r[:, None] * np.stack([sth * np.cos(ph), sth * np.sin(ph), cth], -1)
    q = beta**3 * np.exp(-beta * r) / (8 * math.pi)
    v = np.concatenate([np.sqrt(1 + r * r)[:, None], p], -1)
    f = juttner_eval(mink, JuttnerParams(beta, REST), PhasePoint(np.zeros((r.size, 4)), v))
    total = np.mean(f / q)
    assert abs(total - 1.0) <= 1e-4
    # first moment measure int f d^3p/p0 is K1/K2
    vol1 = np.mean(f / v[:, 0] / q)
    assert vol1 == pytest.approx(special.kv(1, beta) / special.kv(2, beta), rel=1e-4)


def test_juttner_mean_energy_closed_forms():
    for beta in (0.5, 2.0, 10.0):
        k1, k2 = special.kv(1, beta), special.kv(2, beta)
        assert juttner_mean_energy(beta, observer=True) == pytest.approx(k1 / k2 + 3 / beta, rel=1e-10)
        assert juttner_mean_energy(beta) == pytest.approx(k2 / k1, rel=1e-10)


def test_energy_cdf_matches_quadrature():
    beta = 1.5
    for g in (1.2, 2.0, 4.0):
        num, _ = integrate.quad(lambda e: math.sqrt(e * e - 1) * math.exp(-beta * e), 1, g)
        den, _ = integrate.quad(lambda e: math.sqrt(e * e - 1) * math.exp(-beta * e), 1, np.inf)
        assert float(juttner_energy_cdf(beta, g)) == pytest.approx(num / den, abs=1e-10)
        num, _ = integrate.quad(lambda e: e * math.sqrt(e * e - 1) * math.exp(-beta * e), 1, g)
        den, _ = integrate.quad(lambda e: e * math.sqrt(e * e - 1) * math.exp(-beta * e), 1, np.inf)
        assert float(juttner_energy_cdf(beta, g, observer=True)) == pytest.approx(num / den, abs=1e-10)


def test_sampler_mean_energy_beta10(mink):
    beta, n = 10.0, 100_000
    rng = CounterRNG(3, 0)
    k1, k2 = special.kv(1, beta), special.kv(2, beta)
    for observer, exact in ((True, (k1 + 3 * k2 / beta) / k2), (False, k2 / k1)):
        phi = juttner_sample(mink, JuttnerParams(beta, REST), mink.frame(np.zeros(4)), rng, n, observer=observer)
        e = phi.mdot[:, 0]
        assert abs(e.mean() - exact) <= 3 * e.std(ddof=1) / math.sqrt(n)


@pytest.mark.parametrize("beta", [1.0, 2.0, 10.0])
def test_sampler_energy_ks(beta):
    rng = CounterRNG(11, 0)
    p = sample_juttner_momenta(beta, rng, np.arange(100_000))
    e = np.sqrt(1 + np.sum(p * p, -1))
    assert ks_statistic(e, lambda x: juttner_energy_cdf(beta, x)) <= 0.01


def test_sampler_is_isotropic_and_on_shell(schw):
    rng = CounterRNG(5, 0)
    m = np.array([0.0, 7.0, 1.0, 0.5])
    f = JuttnerField(1.0)
    v = f.sample_partner(schw, m, rng, np.arange(50_000))
    assert np.max(shell_error(schw, np.broadcast_to(m, v.shape), v)) <= 1e-9
    p = canonical_momentum(schw, np.broadcast_to(m, v.shape), v)[:, 1:]
    assert np.all(np.abs(p.mean(0)) <= 4 * p.std(0) / math.sqrt(len(p)))


def test_partner_sampler_law_matches_eval_over_norm(mink):
    # energy marginal of eval / local_norm under VOL^1 is ~ sqrt(e^2-1) exp(-beta e)
    beta = 2.0
    f = JuttnerField(beta)
    v = f.sample_partner(mink, np.zeros(4), CounterRNG(8, 0), np.arange(100_000))
    grid = np.linspace(1.0, 25.0, 200_001)
    dens = 4 * math.pi * np.sqrt(grid**2 - 1) * f.eval(mink, np.zeros((grid.size, 4)),
                                                        np.stack([grid, np.sqrt(grid**2 - 1), 0 * grid, 0 * grid], -1))
    dens /= float(f.local_norm(mink, np.zeros(4)))
    cdf = integrate.cumulative_trapezoid(dens, grid, initial=0.0)
    assert cdf[-1] == pytest.approx(1.0, abs=1e-6)
    assert ks_statistic(v[:, 0], lambda x: np.interp(x, grid, cdf)) <= 0.01


def test_sampler_reproducible_by_lane():
    a = sample_juttner_momenta(1.0, CounterRNG(1, 0), np.arange(100))
    b = sample_juttner_momenta(1.0, CounterRNG(1, 0), np.arange(50, 100))
    assert np.array_equal(a[50:], b)


def test_current_rest_juttner(mink):
    j, se = current(mink, np.zeros(4), JuttnerField(2.0), 200_000, CounterRNG(2, 0))
    assert abs(j[0] - 1.0) <= 3 * se[0]
    assert np.all(np.abs(j[1:]) <= 3 * se[1:])


def test_current_zero_field(mink, rng):
    j, se = current(mink, np.zeros(4), ZeroField(), 10, rng)
    assert np.all(j == 0.0)


@pytest.mark.parametrize("chi", [0.0, 0.7])
def test_spatial_density_boosted_normal(mink, chi):
    beta = 2.0
    varpi = np.array([math.cosh(chi), math.sinh(chi), 0.0, 0.0])
    n, se = spatial_density(mink, np.zeros(4), JuttnerField(beta), varpi, 200_000, CounterRNG(4, 0))
    # rest-frame density by quadrature; spatial current vanishes by isotropy
    n_rest = _z_quadrature(beta) * math.exp(-juttner_log_norm(beta))
    assert abs(n - math.cosh(chi) * n_rest) <= 3 * se


def test_spatial_density_zero_field(mink, rng):
    assert spatial_density(mink, np.zeros(4), ZeroField(), REST, 10, rng) == (0.0, 0.0)


def test_drifting_field_current_direction(mink):
    u = 0.6
    f = JuttnerField(1.0, drift=[u / math.sqrt(1 - u * u), 0.0, 0.0])
    j, se = current(mink, np.zeros(4), f, 100_000, CounterRNG(9, 0))
    # a unit-density fluid moving with speed u has j = gamma (1, u, 0, 0)
    gam = 1 / math.sqrt(1 - u * u)
    assert abs(j[0] - gam) <= 3 * se[0]
    assert abs(j[1] - gam * u) <= 3 * se[1]


def test_sum_field_mixture(mink):
    f1, f2 = JuttnerField(1.0), JuttnerField(4.0, density=2.0)
    s = SumField([(0.5, f1), (1.0, f2)])
    m = np.zeros(4)
    assert float(s.local_norm(mink, m)) == pytest.approx(0.5 * float(f1.local_norm(mink, m))
                                                         + float(f2.local_norm(mink, m)), rel=1e-14)
    v = s.sample_partner(mink, m, CounterRNG(6, 0), np.arange(100_000))
    w1 = 0.5 * float(f1.local_norm(mink, m))
    w2 = float(f2.local_norm(mink, m))
    exact = (w1 * juttner_mean_energy(1.0) + w2 * juttner_mean_energy(4.0)) / (w1 + w2)
    assert abs(v[:, 0].mean() - exact) <= 3 * v[:, 0].std(ddof=1) / math.sqrt(len(v))


def test_tabulated_field_roundtrip(tmp_path, mink):
    tab = TabulatedField.from_field(mink, JuttnerField(2.0), [-6] * 3, [6] * 3, (24, 24, 24))
    path = tmp_path / "f.csv"
    tab.to_csv(path)
    first = path.read_text().splitlines()[0]
    assert first.startswith("#") and "schema_version" in first
    back = TabulatedField.from_csv(path)
    assert np.array_equal(back.values, tab.values)
    # the histogram norm approaches K1/K2 as the grid refines
    assert float(back.local_norm(mink, np.zeros(4))) == pytest.approx(special.kv(1, 2.0) / special.kv(2, 2.0),
                                                                         rel=0.02)
    v = back.sample_partner(mink, np.zeros(4), CounterRNG(1, 0), np.arange(20_000))
    assert np.max(shell_error(mink, np.zeros((len(v), 4)), v)) <= 1e-12
    assert np.all(np.abs(v[:, 1:]) <= 6.0)


def test_tabulated_field_rejects_bad_schema(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text('# {"schema_version": 99}\np1,p2,p3,value\n')
    with pytest.raises(ValueError):
        TabulatedField.from_csv(p)


def test_fields_are_nonnegative(mink):
    rng = CounterRNG(0, 0)
    v = JuttnerField(0.5).sample_partner(mink, np.zeros(4), rng, np.arange(1000))
    for f in (JuttnerField(1.0), JuttnerField(3.0, drift=[0.5, 0, 0]), ZeroField()):
        assert np.all(f.eval(mink, np.zeros((1000, 4)), v) >= 0)
