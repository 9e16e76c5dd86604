"""Truncated Girsanov exponents, their normalisation, and importance sampling.

With f = A^{-gamma} F(state) evaluated at the left endpoint of each step,

    S = sum chi f.db,   D = sum chi |f|^2 dt,   Q = sum |f|^2 dt,
    V = sign * S - D / 2,

where chi = 1 until the untruncated drift integral Q first exceeds N.

Sign convention.  Under dP* = e^V dP the process beta - int h dt is Brownian
when V = int h dbeta - 1/2 int |h|^2.  Reweighting linear paths z into the law
of u needs h = -A^{-gamma} F(z), hence ``FORWARD = -1``; reweighting nonlinear
paths u into the law of z needs h = +A^{-gamma} F(u), hence ``REVERSE = +1``.

Because f and chi are fixed before the step's increment is drawn, each factor
exp(sign chi f.db - chi |f|^2 dt / 2) has conditional mean one, so the discrete
weight is an exact martingale: E[e^V] = 1 holds for the simulated chain, not
just in the dt -> 0 limit.  Reweighting the exact OU chain this way reproduces
the law of the ETD1 nonlinear chain with the same dt.

The conditional expectation given the path sigma-algebra is never formed: for
functionals of the path, E[phi(z) E[e^V | z]] = E[phi(z) e^V] by the tower
property, so pathwise weights suffice.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .ensemble import initial_batch, integrate, run_chunks, step_count
from .observables import Observable
from .operators import scaled_drift_dofs
from .spectral import SpectralField, basis

FORWARD = -1
REVERSE = +1

PILOT_PATHS = 1000
PILOT_QUANTILE = 0.99
ESS_WARN_FRACTION = 0.01


class HeavyTailWarning(RuntimeWarning):
    """Importance weights collapsed: effective sample size below 1% of M."""


class GirsanovError(FloatingPointError):
    pass


class GirsanovLedger:
    """Running truncated exponent for one path or a batch of paths (``shape``)."""

    def __init__(self, N=math.inf, sign=FORWARD, shape=()):
        if sign not in (FORWARD, REVERSE):
            raise ValueError("sign must be FORWARD (-1) or REVERSE (+1)")
        if not N >= 0:
            raise ValueError(f"truncation level must be >= 0, got {N}")
        self.N = float(N)
        self.sign = sign
        self.S = np.zeros(shape)
        self.D = np.zeros(shape)
        self.Q = np.zeros(shape)
        self.active = np.ones(shape, dtype=bool)

    def copy(self):
        new = GirsanovLedger(self.N, self.sign, self.S.shape)
        new.S, new.D, new.Q, new.active = self.S.copy(), self.D.copy(), self.Q.copy(), self.active.copy()
        return new

    def update(self, f, db, dt):
        """Fold in one step: ``f`` and ``db`` are per-dof arrays (..., ndof)."""
        f = np.asarray(f, dtype=float)
        if not np.all(np.isfinite(f)):
            raise GirsanovError("non-finite drift coefficients")
        chi = self.active
        fdb = np.sum(f * db, axis=-1)
        f2 = np.sum(f * f, axis=-1) * dt
        self.S = self.S + np.where(chi, fdb, 0.0)
        self.D = self.D + np.where(chi, f2, 0.0)
        self.Q = self.Q + f2
        self.active = chi & (self.Q <= self.N)

    @property
    def V(self):
        return self.sign * self.S - 0.5 * self.D

    @property
    def density(self):
        return np.exp(self.V)

    @property
    def truncated(self):
        return ~self.active


def accumulate(ledger, drift_eval, increments, dt):
    """Functional single-step update from a :class:`DriftEvaluation`."""
    spec = drift_eval.F_field.spec
    f = drift_eval.F_field.dofs * basis(spec).lam ** (-spec.gamma)
    new = ledger.copy()
    new.update(f, np.asarray(increments[0]), dt)
    return new


def path_ledger(record, N=math.inf, sign=None):
    """Ledger accumulated along a stored :class:`PathRecord`.

    Linear records default to the forward sign, nonlinear ones to the reverse sign.
    """
    if sign is None:
        sign = FORWARD if record.kind == "linear" else REVERSE
    spec = record.spec
    led = GirsanovLedger(N, sign)
    f, _ = scaled_drift_dofs(spec, record.states[:-1])
    for fk, dbk in zip(f, record.brownian_increments):
        led.update(fk, dbk, record.dt)
    return led


def reverse_density(spec, record, N=math.inf):
    """V^- along a nonlinear path, for the density of the linear law w.r.t. the nonlinear one."""
    if record.kind != "nonlinear":
        raise ValueError("reverse_density needs a nonlinear PathRecord")
    if record.spec != spec:
        raise ValueError("record belongs to a different spec")
    return path_ledger(record, N, REVERSE)


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class WeightedEnsemble:
    V: np.ndarray
    Q: np.ndarray
    truncated: np.ndarray
    values: dict = field(default_factory=dict)

    @property
    def weights(self):
        return np.exp(self.V)


def weighted_ensemble(spec, x, T, dt, M, seed, *, N=math.inf, sign=FORWARD, nonlinear=False,
                      observables=(), chunk=1000, threads=1, purpose="path"):
    """Simulate M paths (linear for the forward weight, nonlinear for the
    reverse one), carrying a ledger, and evaluate observables at T."""
    n = step_count(T, dt)

    def work(start, stop):
        x0 = initial_batch(spec, x, seed, start, stop)
        gens = _rng.streams(seed, start, stop, purpose)
        led = GirsanovLedger(N, sign, (stop - start,))
        out = integrate(spec, x0, n, dt, gens, nonlinear=nonlinear, ledger=led)
        vals = {o.name: o(spec, out["state"]) for o in observables}
        return led.V, led.Q, led.truncated, vals

    parts = run_chunks(M, work, chunk, threads)
    return WeightedEnsemble(
        V=np.concatenate([p[0] for p in parts]),
        Q=np.concatenate([p[1] for p in parts]),
        truncated=np.concatenate([p[2] for p in parts]),
        values={o.name: np.concatenate([p[3][o.name] for p in parts]) for o in observables},
    )


def _default_x(spec, x):
    if x is None:
        return np.zeros(basis(spec).ndof)
    if isinstance(x, SpectralField):
        return x.dofs
    return x


def pilot_truncation_level(spec, T, dt, x=None, seed=0, paths=PILOT_PATHS, q=PILOT_QUANTILE,
                           chunk=1000, threads=1):
    """Empirical q-quantile of Q_T over pilot linear paths (independent streams)."""
    ens = weighted_ensemble(spec, _default_x(spec, x), T, dt, paths, seed, chunk=chunk,
                            threads=threads, purpose="pilot")
    return float(np.quantile(ens.Q, q))


def ess(w):
    w = np.asarray(w, dtype=float)
    s2 = np.sum(w**2)
    return float(np.sum(w) ** 2 / s2) if s2 > 0 else 0.0


def _check_ess(value, M):
    if value < ESS_WARN_FRACTION * M:
        warnings.warn(f"effective sample size {value:.1f} < {ESS_WARN_FRACTION:g} * M; "
                      "weighted estimates are unreliable", HeavyTailWarning, stacklevel=3)


@dataclass
class NormalizationResult:
    mean: float
    se: float
    ess: float
    truncation_frequency: float
    N: float
    M: int
    ensemble: WeightedEnsemble = field(repr=False)

    def zscore(self):
        return (self.mean - 1.0) / self.se if self.se > 0 else 0.0


def normalization_check(spec, T, dt, M, N=None, seed=0, x=None, *, sign=FORWARD,
                        chunk=1000, threads=1):
    """Monte Carlo estimate of E[e^{V^{T,N}}] over M linear paths (forward sign)
    or M nonlinear paths (reverse sign).  ``N=None`` takes the pilot 99th
    percentile of Q_T."""
    x = _default_x(spec, x)
    if N is None:
        N = pilot_truncation_level(spec, T, dt, x, seed, chunk=chunk, threads=threads)
    ens = weighted_ensemble(spec, x, T, dt, M, seed, N=N, sign=sign, nonlinear=(sign == REVERSE),
                            chunk=chunk, threads=threads)
    w = ens.weights
    e = ess(w)
    _check_ess(e, M)
    return NormalizationResult(
        mean=float(np.mean(w)),
        se=float(np.std(w, ddof=1) / math.sqrt(M)) if M > 1 else 0.0,
        ess=e,
        truncation_frequency=float(np.mean(ens.truncated)),
        N=float(N),
        M=M,
        ensemble=ens,
    )


@dataclass
class Estimate:
    observable: str
    unnormalized: float
    unnormalized_se: float
    self_normalized: float
    self_normalized_se: float
    plain: float
    plain_se: float
    ess: float


def _mean_se(v):
    v = np.asarray(v, dtype=float)
    return float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(len(v)))


def importance_estimate(spec, observables, T, dt, M, N=None, seed=0, x=None, *, chunk=1000, threads=1,
                        return_ensemble=False):
    """Estimate E[phi(u(T))] from weighted linear paths.

    Returns one :class:`Estimate` per observable with the unnormalised mean of
    phi(z(T)) e^V, the self-normalised ratio, and the plain linear Monte Carlo
    mean of phi(z(T)) for reference.  With ``return_ensemble`` the weighted
    ensemble and the truncation level used are returned as well.
    """
    observables = [Observable.parse(o) if isinstance(o, str) else o for o in observables]
    x = _default_x(spec, x)
    if N is None:
        N = pilot_truncation_level(spec, T, dt, x, seed, chunk=chunk, threads=threads)
    ens = weighted_ensemble(spec, x, T, dt, M, seed, N=N, observables=observables,
                            chunk=chunk, threads=threads)
    w = ens.weights
    e = ess(w)
    _check_ess(e, M)
    out = []
    for o in observables:
        phi = ens.values[o.name]
        un, un_se = _mean_se(phi * w)
        sw = np.sum(w)
        sn = float(np.sum(phi * w) / sw)
        sn_se = float(np.sqrt(np.sum(w**2 * (phi - sn) ** 2)) / sw)
        pl, pl_se = _mean_se(phi)
        out.append(Estimate(o.name, un, un_se, sn, sn_se, pl, pl_se, e))
    if return_ensemble:
        return out, ens, float(N)
    return out


def direct_estimate(spec, observables, T, dt, M, seed=0, x=None, *, chunk=1000, threads=1):
    """Plain Monte Carlo of E[phi(u(T))] over nonlinear paths: (mean, se) per observable."""
    from .ensemble import terminal_states

    observables = [Observable.parse(o) if isinstance(o, str) else o for o in observables]
    u = terminal_states(spec, _default_x(spec, x), T, dt, M, seed, nonlinear=True,
                        chunk=chunk, threads=threads)
    return {o.name: _mean_se(o(spec, u)) for o in observables}


def exponent_variance(spec, Ts, dt, M, seed=0, x=None, chunk=1000, threads=1):
    """Var(V^T) of the untruncated forward exponent at each horizon in ``Ts``."""
    return [float(np.var(weighted_ensemble(spec, _default_x(spec, x), T, dt, M, seed,
                                           chunk=chunk, threads=threads).V, ddof=1))
            for T in Ts]
