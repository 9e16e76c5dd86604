"""Invariant-measure statistics, ergodic time averages and mixing diagnostics."""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import rng as _rng
from .ensemble import initial_batch, integrate, run_chunks, step_count, terminal_states
from .linsim import simulate_linear
from .observables import Observable
from .spectral import basis, build_spectrum, fmt

MIN_SAMPLES = 1000
Z_FLAG = 4.0
KS_LEVEL = 0.01


@dataclass
class StationaryStats:
    labels: tuple
    var_theory: np.ndarray
    var_empirical: np.ndarray
    se: np.ndarray

    @property
    def zscore(self):
        return (self.var_empirical - self.var_theory) / self.se

    @property
    def flagged(self):
        return np.flatnonzero(np.abs(self.zscore) > Z_FLAG)

    @property
    def ok(self):
        return self.flagged.size == 0


def variance_with_se(samples):
    """Unbiased sample variance per column and its standard error
    sqrt((m4 - s^4 (n-3)/(n-1)) / n)."""
    x = np.asarray(samples, dtype=float)
    n = x.shape[0]
    c = x - x.mean(axis=0)
    s2 = np.sum(c**2, axis=0) / (n - 1)
    m4 = np.mean(c**4, axis=0)
    se = np.sqrt(np.maximum(m4 - s2**2 * (n - 3) / (n - 1), 0.0) / n)
    return s2, se


def mean_with_se(samples):
    x = np.asarray(samples, dtype=float)
    return x.mean(axis=0), x.std(axis=0, ddof=1) / math.sqrt(x.shape[0])


def stationary_stats(spec, samples):
    """Compare per-dof empirical variances of i.i.d. (or well-separated)
    samples (M, ndof) with sigma^2 / (2 mu)."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {samples.shape[0]}")
    sp = build_spectrum(spec)
    v, se = variance_with_se(samples)
    return StationaryStats(sp.labels, sp.stationary_variance, v, se)


def relaxation_time(spec):
    return 1.0 / float(np.min(build_spectrum(spec).mu))


def long_path_samples(spec, n_samples, seed=0, spacing=None, burn_in=None):
    """Samples from one long linear path, taken every ``spacing`` time units
    after ``burn_in`` (both default to 10 relaxation times of the slowest mode).
    The exact OU step makes the coarse step size legitimate."""
    tau = relaxation_time(spec)
    spacing = 10 * tau if spacing is None else spacing
    burn_in = 10 * tau if burn_in is None else burn_in
    x = np.zeros(basis(spec).ndof)
    warm = simulate_linear(spec, x, burn_in, burn_in, seed)
    rec = simulate_linear(spec, warm.states[-1], n_samples * spacing, spacing,
                          generator=warm.continued_stream())
    return rec.states[1:]


def running_average(times, values):
    """(1/t) int_0^t values dt by the trapezoidal rule; values[0] at t = 0."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    dt = np.diff(times)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * dt * (values[1:] + values[:-1]))])
    out = np.empty_like(values)
    out[0] = values[0]
    out[1:] = cum[1:] / (times[1:] - times[0])
    return out


def ergodic_average(path, phi):
    """Running time average of ``phi`` along a PathRecord and the linear-case
    reference value (None for nonlinear paths, whose invariant law has no
    closed form)."""
    phi = Observable.parse(phi) if isinstance(phi, str) else phi
    avg = running_average(path.times, phi(path.spec, path.states))
    ref = phi.invariant_mean(path.spec) if path.kind == "linear" else None
    return avg, ref


def ergodic_averages(spec, x, T, dt, M, seed, phi, *, nonlinear=False, chunk=1000, threads=1):
    """Time averages over [0, T] of ``phi`` for M independent paths."""
    phi = Observable.parse(phi) if isinstance(phi, str) else phi
    n = step_count(T, dt)

    def work(start, stop):
        acc = np.zeros(stop - start)
        prev = [None]

        def observe(i, u):
            v = phi(spec, u)
            if prev[0] is not None:
                acc[:] += 0.5 * dt * (v + prev[0])
            prev[0] = v

        x0 = initial_batch(spec, x, seed, start, stop)
        integrate(spec, x0, n, dt, _rng.streams(seed, start, stop), nonlinear=nonlinear, observe=observe)
        return acc / T

    return np.concatenate(run_chunks(M, work, chunk, threads))


# ---------------------------------------------------------------------------
# mixing


def ks_critical(M, level=KS_LEVEL, tests=1):
    """One-sample KS critical value; ``tests`` > 1 applies a Bonferroni split
    so that the family-wise level stays at ``level``."""
    return float(stats.kstwo.ppf(1.0 - level / tests, M))


@dataclass
class MixingResult:
    labels: tuple
    statistic: np.ndarray
    critical: float
    pvalue: np.ndarray

    @property
    def passed(self):
        return bool(np.all(self.statistic < self.critical))

    @property
    def failing(self):
        return np.flatnonzero(self.statistic >= self.critical)


def marginal_ks(spec, samples, level=KS_LEVEL):
    """Per-dof KS statistic of samples against the invariant Gaussian marginal."""
    samples = np.asarray(samples, dtype=float)
    sp = build_spectrum(spec)
    sd = np.sqrt(sp.stationary_variance)
    res = [stats.kstest(samples[:, j] / sd[j], "norm") for j in range(samples.shape[1])]
    return MixingResult(
        sp.labels,
        np.array([r.statistic for r in res]),
        ks_critical(samples.shape[0], level, samples.shape[1]),
        np.array([r.pvalue for r in res]),
    )


def mixing_test(spec, x, t_large, M, seed=0, *, nonlinear=False, dt=None, level=KS_LEVEL,
                chunk=1000, threads=1):
    """KS distance between the law of the state at ``t_large`` started from x
    and the invariant marginal of the linear equation, per dof.

    For the linear equation one exact step of length ``t_large`` is taken.
    """
    if dt is None:
        if nonlinear:
            raise ValueError("nonlinear mixing needs a time step")
        dt = t_large
    u = terminal_states(spec, x, t_large, dt, M, seed, nonlinear=nonlinear, chunk=chunk, threads=threads)
    return marginal_ks(spec, u, level)


def two_sample_mixing(spec, x1, x2, t, dt, M, seeds=(1, 2), *, level=KS_LEVEL, chunk=1000, threads=1):
    """Per-dof two-sample KS comparison of nonlinear terminal laws from two
    initial conditions, with independent noise for the two ensembles."""
    u1 = terminal_states(spec, x1, t, dt, M, seeds[0], nonlinear=True, chunk=chunk, threads=threads)
    u2 = terminal_states(spec, x2, t, dt, M, seeds[1], nonlinear=True, chunk=chunk, threads=threads)
    ndof = u1.shape[1]
    res = [stats.ks_2samp(u1[:, j], u2[:, j]) for j in range(ndof)]
    alpha = level / ndof
    # asymptotic two-sample critical value at the Bonferroni level
    crit = math.sqrt(-0.5 * math.log(alpha / 2)) * math.sqrt(2.0 / M)
    return MixingResult(build_spectrum(spec).labels, np.array([r.statistic for r in res]), crit,
                        np.array([r.pvalue for r in res])), (u1, u2)


def write_ergodics_csv(path, st, mix=None):
    """ergodics.csv: mode_label, var_theory, var_empirical, z_score, ks_statistic, ks_critical."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode_label", "var_theory", "var_empirical", "z_score", "ks_statistic", "ks_critical"])
        z = st.zscore
        for j, lab in enumerate(st.labels):
            ks = fmt(mix.statistic[j]) if mix is not None else ""
            kc = fmt(mix.critical) if mix is not None else ""
            w.writerow([lab, fmt(st.var_theory[j]), fmt(st.var_empirical[j]), fmt(z[j]), ks, kc])
