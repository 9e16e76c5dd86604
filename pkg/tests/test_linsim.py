import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from girsanovlab import rng
from girsanovlab.ensemble import conditional_residual, increment_moments, terminal_states
from girsanovlab.linsim import (
    increment_correlation,
    joint_increment,
    read_paths_binary,
    reconstruct_states,
    simulate_linear,
    transition_moments,
    write_path_csv,
    write_paths_binary,
)
from girsanovlab.spectral import ModelSpec, SpectralField, basis, build_spectrum, sample_gaussian_field


def test_closed_form_moments():
    _, var_i, cov = increment_moments(np.array(2.0), 0.5)
    assert var_i == pytest.approx((1 - math.exp(-2)) / 4, rel=1e-15)
    assert cov == pytest.approx((1 - math.exp(-1)) / 2, rel=1e-15)


@pytest.mark.slow
def test_joint_law_against_fine_brownian_paths():
    # independent oracle: Riemann sums of e^{-mu (dt - s)} against 200 sub-increments
    mu, dt, n, m = 2.0, 0.5, 200, 100000
    g = rng.stream(21)
    h = dt / n
    dW = g.standard_normal((m, n)) * math.sqrt(h)
    s_mid = (np.arange(n) + 0.5) * h
    db = dW.sum(axis=1)
    I = dW @ np.exp(-mu * (dt - s_mid))
    _, var_i, cov = increment_moments(np.array(mu), dt)
    c = np.cov(db, I)
    se = lambda v: v * math.sqrt(2 / m)
    assert abs(c[0, 0] - dt) < 4 * se(dt)
    assert abs(c[1, 1] - var_i) < 4 * se(var_i)
    assert abs(c[0, 1] - cov) < 4 * math.sqrt(dt * var_i / m + cov**2 / m)
    # the library sampler has the same law
    db2, I2 = joint_increment(np.full(m, mu), dt, rng.stream(22))
    c2 = np.cov(db2, I2)
    assert abs(c2[1, 1] - var_i) < 4 * se(var_i)
    assert abs(c2[0, 1] - cov) < 4 * math.sqrt(dt * var_i / m + cov**2 / m)


def test_small_step_limit():
    _, var_i, cov = increment_moments(np.array(1e-9), 1e-3)
    assert var_i == pytest.approx(1e-3, rel=1e-8)
    assert cov == pytest.approx(1e-3, rel=1e-8)
    assert increment_correlation(np.array(1e-9), 1e-3) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("x", [1e-6, 1e-4, 9e-4, 2e-3, 0.1, 3.0])
def test_residual_against_high_precision(x):
    mp.mp.dps = 50
    X = mp.mpf(x)
    exact = (1 - mp.e ** (-2 * X)) / (2 * X) - ((1 - mp.e ** (-X)) / X) ** 2
    assert conditional_residual(np.array([x]), 1.0)[0] == pytest.approx(float(exact), rel=1e-9)


@given(st.floats(1e-6, 1e6), st.floats(1e-6, 10.0))
def test_correlation_bounded(mu, dt):
    r = increment_correlation(np.array(mu), dt)
    assert 0 <= r**2 <= 1 + 1e-12
    assert conditional_residual(np.array(mu), dt) >= 0


def test_rejects_nonpositive_rate():
    with pytest.raises(ValueError):
        joint_increment(np.array([1.0, 0.0]), 0.1, rng.stream(0))
    with pytest.raises(ValueError):
        increment_moments(np.array(-1.0), 0.1)


def test_noise_off_is_deterministic_decay(ks):
    spec = ks.replace(noise=False)
    x = sample_gaussian_field(ks, seed=3).dofs
    rec = simulate_linear(spec, x, 1.0, 1 / 64, seed=5)
    mu = build_spectrum(spec).mu
    for i in (0, 17, 64):
        assert np.allclose(rec.states[i], np.exp(-mu * rec.times[i]) * x, rtol=1e-12, atol=0)


def test_same_seed_bit_identical(ns2):
    a = simulate_linear(ns2, np.zeros(basis(ns2).ndof), 0.25, 1 / 64, seed=42)
    b = simulate_linear(ns2, SpectralField.zeros(ns2), 0.25, 1 / 64, seed=42)
    assert np.array_equal(a.states, b.states)
    assert a.increment_hash() == b.increment_hash()
    c = simulate_linear(ns2, SpectralField.zeros(ns2), 0.25, 1 / 64, seed=43)
    assert a.increment_hash() != c.increment_hash()


@pytest.mark.parametrize("n", [100, 128, 130])
def test_restart_with_continued_stream(ks, n):
    dt = 1 / 64
    full = simulate_linear(ks, np.zeros(64), n * dt, dt, seed=7)
    h = n // 2
    first = simulate_linear(ks, np.zeros(64), h * dt, dt, seed=7)
    second = simulate_linear(ks, first.states[-1], (n - h) * dt, dt, generator=first.continued_stream())
    assert np.array_equal(np.concatenate([first.states, second.states[1:]]), full.states)


def test_increment_reconstruction(ks):
    x = sample_gaussian_field(ks, seed=2).dofs
    rec = simulate_linear(ks, x, 0.5, 1 / 128, seed=1)
    z = reconstruct_states(ks, x, rec.dt, rec.conv_increments)
    assert np.allclose(z, rec.states, rtol=1e-12, atol=1e-15)


def test_step_must_divide_horizon(ks):
    with pytest.raises(ValueError, match="divide"):
        simulate_linear(ks, np.zeros(64), 1.0, 0.3)


def test_transition_moment_examples(ks):
    x = np.zeros(64)
    x[0] = 1.0
    m, v = transition_moments(ks, x, math.log(2) / 2)
    assert m[0] == pytest.approx(0.5, rel=1e-14)
    m0, v0 = transition_moments(ks, x, 0.0)
    assert np.array_equal(m0, x) and np.all(v0 == 0)
    m_inf, v_inf = transition_moments(ks, x, 1e3)
    assert np.allclose(m_inf, 0) and np.allclose(v_inf, build_spectrum(ks).stationary_variance)


@pytest.mark.slow
def test_lowest_mode_variance_at_T5(ks):
    # Var z_1(5) = 1/4 (1 - e^{-20}); exact OU steps make dt = T legitimate
    u = terminal_states(ks, np.zeros(64), 5.0, 5.0, 100000, seed=8, chunk=20000)
    target = 0.25 * (1 - math.exp(-20))
    v = u[:, 0].var(ddof=1)
    assert abs(v - target) < 4 * target * math.sqrt(2 / len(u))


def test_path_csv_and_binary(tmp_path, ns2_small):
    recs = [simulate_linear(ns2_small, np.zeros(basis(ns2_small).ndof), 0.1, 0.05, generator=rng.stream(9, i))
            for i in range(3)]
    p = tmp_path / "paths.bin"
    write_paths_binary(recs, p)
    header, times, amp = read_paths_binary(p)
    assert header["spec_hash"] == ns2_small.spec_hash() and header["npaths"] == 3
    assert np.array_equal(times, recs[0].times)
    b = basis(ns2_small)
    back = b.dofs_from_amplitudes(amp[1].reshape(len(times), b.nk, b.ntan))
    assert np.allclose(back, recs[1].states, rtol=1e-14, atol=1e-300)
    raw = p.read_bytes()
    assert raw[:8] == b"GLPATH1\x00"
    c1, c2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_path_csv(recs[0], c1)
    write_path_csv(recs[0], c2)
    assert c1.read_bytes() == c2.read_bytes()
    lines = c1.read_text().split("\n")
    assert lines[0] == "time,mode_label,re,im"
    assert len(lines) - 2 == len(times) * b.nk * b.ntan
