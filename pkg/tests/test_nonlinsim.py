import numpy as np
import pytest

from girsanovlab import rng
from girsanovlab.ensemble import BlowUpError, Propagator, integrate
from girsanovlab.linsim import simulate_linear
from girsanovlab.nonlinsim import gronwall_constant, simulate_nonlinear, step_nonlinear, twin_path_divergence
from girsanovlab.operators import drift_dofs
from girsanovlab.spectral import ModelSpec, SpectralField, basis, build_spectrum, sample_gaussian_field


def _tg(spec):
    return SpectralField.from_function(spec, lambda x, y: (np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)))


def test_noise_coupling_hash(ks, ns2):
    for spec in (ks, ns2):
        x = sample_gaussian_field(spec, seed=1).dofs
        lin = simulate_linear(spec, x, 0.125, 1 / 256, seed=3)
        non = simulate_nonlinear(spec, x, 0.125, 1 / 256, seed=3)
        assert lin.increment_hash() == non.increment_hash()
        assert not np.array_equal(lin.states[-1], non.states[-1])


def test_drift_off_equals_linear(ks):
    spec = ks.replace(nonlinear=False)
    x = sample_gaussian_field(ks, seed=1).dofs
    a = simulate_nonlinear(spec, x, 0.25, 1 / 128, seed=9)
    b = simulate_linear(spec, x, 0.25, 1 / 128, seed=9)
    assert np.array_equal(a.states, b.states)


def test_taylor_green_first_step_is_linear(ns2):
    x = _tg(ns2)
    a = simulate_nonlinear(ns2, x, 1 / 256, 1 / 256, seed=4)
    b = simulate_linear(ns2, x, 1 / 256, 1 / 256, seed=4)
    # B(x, x) vanishes to rounding, so the ETD1 drift term is at the 1e-17 level
    assert np.max(np.abs(a.states[1] - b.states[1])) < 1e-15


def test_step_matches_library_update(ks):
    x = sample_gaussian_field(ks, seed=2)
    db, I = rng.stream(0).standard_normal((2, 64)) * 0.01
    u1 = step_nonlinear(x, 0.01, (db, I))
    p = Propagator(ks, 0.01)
    assert np.allclose(u1.dofs, p.decay * x.dofs - p.phi * drift_dofs(ks, x.dofs) + p.sigma * I, rtol=1e-14)


def test_consistency_by_richardson(ks):
    # noise off: (u' - u)/dt -> -mu u - F(u); the O(dt) error is removed by
    # Richardson extrapolation from dt and dt/2
    spec = ks.replace(noise=False)
    u = SpectralField.from_function(spec, lambda x: np.sin(x) + 0.5 * np.cos(2 * x))
    zero = (np.zeros(64), np.zeros(64))
    mu = build_spectrum(spec).mu
    target = -mu * u.dofs - drift_dofs(spec, u.dofs)
    dt = 1e-6
    q = lambda h: (step_nonlinear(u, h, zero).dofs - u.dofs) / h
    rich = 2 * q(dt / 2) - q(dt)
    big = np.abs(target) > 1e-3 * np.max(np.abs(target))
    assert np.max(np.abs(rich[big] - target[big]) / np.abs(target[big])) < 1e-6


def _reference_solution(spec, u, T, n):
    v = u.dofs
    zero = (np.zeros_like(v), np.zeros_like(v))
    for _ in range(n):
        v = step_nonlinear(SpectralField.from_dofs(spec, v), T / n, zero).dofs
    return v


def test_one_step_error_is_second_order(ks):
    spec = ks.replace(noise=False)
    u = SpectralField.from_function(spec, np.sin)
    errs = []
    for dt in (0.02, 0.01, 0.005):
        ref = _reference_solution(spec, u, dt, 100)
        errs.append(np.linalg.norm(step_nonlinear(u, dt, (np.zeros(64), np.zeros(64))).dofs - ref))
    slopes = np.diff(np.log(errs)) / np.log(0.5)
    assert np.all(np.abs(slopes - 2) < 0.2)


@pytest.mark.slow
def test_refinement_ladder_is_first_order(ns2):
    # same Brownian paths at several resolutions: coarse increments are sums of
    # fine ones and the stochastic convolution is refined by exact OU recursion
    x = 20 * sample_gaussian_field(ns2, seed=7).dofs
    T, n_fine, paths = 0.25, 1024, 8
    ndof = basis(ns2).ndof
    lam = basis(ns2).lam
    dW = rng.stream(5).standard_normal((n_fine, paths, ndof)) * np.sqrt(T / n_fine)
    fine = Propagator(ns2, T / n_fine)

    def run(m):
        p = Propagator(ns2, T / (n_fine // m))
        u = np.tile(x, (paths, 1))
        for s in range(n_fine // m):
            I = np.zeros((paths, ndof))
            for w in dW[s * m:(s + 1) * m]:
                I = fine.decay * I + fine.reg * w
            u = p.step(u, I, drift_dofs(ns2, u))
        return u

    ref = run(1)
    # mean strong error in the H^1 norm
    e = [np.mean(np.sqrt(np.sum((lam * (run(m) - ref)) ** 2, axis=1))) for m in (32, 16, 8)]
    slopes = np.diff(np.log(e)) / np.log(0.5)
    assert np.all(np.abs(slopes - 1) < 0.3), (e, slopes)


def test_field_invariants_along_path(ns3):
    spec = ModelSpec.fracns(d=3, cutoff=2)
    rec = simulate_nonlinear(spec, sample_gaussian_field(spec, seed=1), 0.05, 0.01, seed=2)
    n = basis(spec).n
    k = np.fft.fftfreq(n, 1.0 / n)
    for s in rec.states:
        g = basis(spec).to_grid(s)
        div = sum(np.fft.ifftn(1j * k.reshape([n if j == i else 1 for j in range(3)]) * np.fft.fftn(g[i])).real
                  for i in range(3))
        assert np.max(np.abs(div)) < 1e-12 * max(1.0, np.max(np.abs(g)))
        # real fields: imaginary part of the synthesis is exactly absent by construction
        assert np.isrealobj(g)


def test_twin_identical_inputs(ns2):
    x = sample_gaussian_field(ns2, seed=3).dofs
    r = twin_path_divergence(ns2, x, x, 0.125, 1 / 256, seed=1)
    assert np.all(r.divergence == 0)
    assert np.all(np.diff(r.budget) > 0)


def test_twin_perturbation_is_linear(ns2):
    x = sample_gaussian_field(ns2, seed=3).dofs
    d = []
    for delta in (1e-3, 1e-4):
        y = x.copy()
        y[0] += delta
        d.append(twin_path_divergence(ns2, x, y, 0.125, 1 / 256, seed=1).divergence[-1])
    assert d[0] / d[1] == pytest.approx(10, rel=0.01)


def test_gronwall_constant_covers_its_inputs(ns2):
    runs = []
    for i in range(3):
        x = 300 * sample_gaussian_field(ns2, seed=10 + i).dofs
        y = x.copy()
        y[0] += 1e-3
        runs.append(twin_path_divergence(ns2, x, y, 1 / 16, 1 / 2048, seed=1, index=i))
    C = gronwall_constant(runs)
    for r in runs:
        assert np.all(r.log_growth()[1:] <= C * r.budget[1:] + 1e-12)


def test_blow_up_guard(ks):
    spec = ks.replace(noise=False)
    x = 1e3 * SpectralField.from_function(spec, lambda t: np.sin(t) + np.cos(3 * t)).dofs
    with pytest.raises(BlowUpError, match="guard|non-finite"):
        simulate_nonlinear(spec, x, 1.0, 0.05)


def test_guard_can_be_disabled_for_linear(ks):
    out = integrate(ks, np.zeros((2, 64)), 4, 0.01, [rng.stream(0), rng.stream(1)], guard=None)
    assert out["state"].shape == (2, 64)
