import math

import numpy as np
import pytest
from scipy import stats

from girsanovlab import rng
from girsanovlab.ergodics import (
    ergodic_average,
    ergodic_averages,
    ks_critical,
    long_path_samples,
    marginal_ks,
    mixing_test,
    relaxation_time,
    running_average,
    stationary_stats,
    variance_with_se,
    write_ergodics_csv,
)
from girsanovlab.linsim import simulate_linear
from girsanovlab.nonlinsim import simulate_nonlinear
from girsanovlab.spectral import ModelSpec, build_spectrum, gaussian_dofs


def _time_average_sd(mu, var, T):
    # stationary OU: Cov(z^2(s), z^2(t)) = 2 var^2 e^{-2 mu |t - s|}
    r = 2 * mu
    return math.sqrt(2 * var**2 * 2 / (r * T**2) * (T - (1 - math.exp(-r * T)) / r))


def test_exact_sampler_variances(ks):
    st = stationary_stats(ks, gaussian_dofs(ks, rng.stream(1), 100000))
    assert st.ok, st.zscore[st.flagged]
    assert np.max(np.abs(st.zscore)) < 4.5


def test_variance_standard_error():
    # Gaussian: se of s^2 is s^2 sqrt(2 / n) to leading order
    x = rng.stream(2).standard_normal((200000, 2)) * [1.0, 3.0]
    v, se = variance_with_se(x)
    assert np.allclose(se, v * math.sqrt(2 / 200000), rtol=0.02)


def test_too_few_samples(ks):
    with pytest.raises(ValueError, match="at least"):
        stationary_stats(ks, np.zeros((10, 64)))


def test_long_path_samples(ks_small):
    st = stationary_stats(ks_small, long_path_samples(ks_small, 5000, seed=3))
    assert st.ok
    assert relaxation_time(ks_small) == pytest.approx(0.5)


def test_running_average():
    t = np.linspace(0, 2, 201)
    assert np.allclose(running_average(t, np.ones_like(t)), 1)
    assert running_average(t, t)[-1] == pytest.approx(1.0, rel=1e-12)


def test_constant_observable(ks_small):
    rec = simulate_linear(ks_small, np.zeros(16), 1.0, 1 / 32, seed=1)
    avg, ref = ergodic_average(rec, "one")
    assert np.all(avg == 1) and ref == 1


def test_linear_time_average_error_law(ks):
    # mu_1 = 2, so T = 200 / mu_1 = 100; the OU prediction for the spread of
    # the time average of z_1^2 is 0.0250, i.e. 10% of 1/4 is one standard deviation
    T = 100.0
    sd = _time_average_sd(2.0, 0.25, T)
    assert sd == pytest.approx(0.0250, abs=5e-5)
    a = ergodic_averages(ks, "invariant", T, 1 / 16, 400, 3, "mode_sq:0")
    assert abs(a.mean() - 0.25) < 4 * sd / math.sqrt(len(a))
    assert a.std(ddof=1) == pytest.approx(sd, rel=4 / math.sqrt(2 * len(a)))
    frac = np.mean(np.abs(a - 0.25) < 0.025)
    assert abs(frac - 0.6827) < 4 * math.sqrt(0.68 * 0.32 / len(a))


def test_single_path_average(ks):
    rec = simulate_linear(ks, np.zeros(64), 100.0, 1 / 16, seed=11)
    avg, ref = ergodic_average(rec, "mode_sq:0")
    assert ref == 0.25
    # a four-sigma band of the error law above
    assert abs(avg[-1] - ref) < 4 * _time_average_sd(2.0, 0.25, 100.0)


@pytest.mark.slow
def test_time_average_rate(ks):
    Ts = np.array([25.0, 50.0, 100.0, 200.0])
    rmse = [np.sqrt(np.mean((ergodic_averages(ks, "invariant", T, 1 / 16, 400, 4, "mode_sq:0") - 0.25) ** 2))
            for T in Ts]
    slope = np.polyfit(np.log(Ts), np.log(rmse), 1)[0]
    assert abs(slope + 0.5) < 0.15


@pytest.mark.slow
def test_nonlinear_average_stabilizes():
    # nu = 2 keeps the first mode damped once the -a u part of F is added back;
    # at nu = 1 it is neutral and the energy wanders over windows of hundreds
    spec = ModelSpec.ks(nu=2.0, cutoff=16)
    rec = simulate_nonlinear(spec, np.zeros(32), 400.0, 1 / 64, seed=1)
    avg, ref = ergodic_average(rec, "sobolev_sq:0.7")
    assert ref is None
    half = avg[len(avg) // 2:]
    assert np.max(np.abs(half / half[-1] - 1)) < 0.05


def test_marginal_ks_self_test(ks_small):
    good = marginal_ks(ks_small, gaussian_dofs(ks_small, rng.stream(5), 5000))
    assert good.passed
    bad = marginal_ks(ks_small, 1.2 * gaussian_dofs(ks_small, rng.stream(5), 5000))
    assert not bad.passed


def test_bonferroni_critical():
    assert ks_critical(1000) == pytest.approx(stats.kstwo.ppf(0.99, 1000))
    assert ks_critical(1000, tests=64) > ks_critical(1000)


def test_linear_mixing_is_monotone(ks):
    x = np.zeros(64)
    x[1] = 2.0
    tau = relaxation_time(ks)
    s = [mixing_test(ks, x, t * tau, 5000, seed=2).statistic.max() for t in (0.1, 1, 3, 10)]
    assert np.all(np.diff(s) < 0)
    assert mixing_test(ks, x, 10 * tau, 5000, seed=2).passed
    assert not mixing_test(ks, x, 0.1 * tau, 5000, seed=2).passed


def test_nonlinear_mixing_needs_step(ks):
    with pytest.raises(ValueError, match="time step"):
        mixing_test(ks, np.zeros(64), 1.0, 10, nonlinear=True)


def test_ergodics_csv(tmp_path, ks_small):
    st = stationary_stats(ks_small, gaussian_dofs(ks_small, rng.stream(1), 2000))
    p = tmp_path / "ergodics.csv"
    write_ergodics_csv(p, st)
    lines = p.read_text().splitlines()
    assert lines[0] == "mode_label,var_theory,var_empirical,z_score,ks_statistic,ks_critical"
    assert len(lines) == 17 and lines[1].startswith("j1.cos,")
    assert len(build_spectrum(ks_small).labels) == 16
