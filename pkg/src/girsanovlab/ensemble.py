"""Batched exponential integrator shared by the linear, nonlinear and Girsanov code.

Per dof and step of length dt the driving noise is the exact Gaussian pair

    db = beta(t+dt) - beta(t),     I = int_t^{t+dt} exp(-mu (t+dt-s)) dbeta(s),

generated from two standard normals per dof.  The linear update
``z' = e^{-mu dt} z + sigma I`` is exact; the nonlinear update adds the ETD1
drift term ``-(1 - e^{-mu dt})/mu * F(u)`` with F frozen at the left endpoint.

Each path draws ``standard_normal((2, ndof))`` per step from its own stream,
so a path is reproducible from (seed, path index) alone, whatever the chunking,
and a run split in two with a continued stream reproduces the one-shot run.
"""

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import rng as _rng
from .operators import scaled_drift_dofs
from .spectral import basis, build_spectrum, norm_dofs

GUARD_FACTOR = 1e6
DRAW_BLOCK = 64


class BlowUpError(FloatingPointError):
    """A trajectory left the configured norm guard or produced non-finite values."""


def step_count(T, dt):
    if not (T > 0 and dt > 0):
        raise ValueError(f"T and dt must be positive, got T={T}, dt={dt}")
    n = round(T / dt)
    if n < 1 or abs(n * dt - T) > 1e-9 * T:
        raise ValueError(f"dt = {dt} does not divide T = {T}")
    return int(n)


def conditional_residual(mu, dt):
    """Var(I | db) = Var(I) - Cov(I, db)^2 / dt, stable for small mu*dt."""
    mu = np.asarray(mu, dtype=float)
    x = mu * dt
    small = x < 1e-3
    xs = np.where(small, x, 1.0)
    series = dt * (xs**2 / 12 - xs**3 / 12 + 17 * xs**4 / 360 - 7 * xs**5 / 360)
    mus = np.where(small, 1.0, mu)
    var_i = -np.expm1(-2 * x) / (2 * mus)
    cov = -np.expm1(-x) / mus
    direct = var_i - cov**2 / dt
    return np.maximum(np.where(small, series, direct), 0.0)


def increment_moments(mu, dt):
    """(Var db, Var I, Cov(db, I)) for drift rate mu > 0 and step dt > 0."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise ValueError("drift rate mu must be > 0")
    if not dt > 0:
        raise ValueError("dt must be > 0")
    var_i = -np.expm1(-2 * mu * dt) / (2 * mu)
    cov = -np.expm1(-mu * dt) / mu
    return np.full_like(mu, dt), var_i, cov


class Propagator:
    """Per-dof coefficients of the exact OU step and the ETD1 drift term."""

    def __init__(self, spec, dt):
        sp = build_spectrum(spec)
        mu = sp.mu
        self.spec = spec
        self.dt = dt
        self.decay = np.exp(-mu * dt)
        self.phi = -np.expm1(-mu * dt) / mu
        self.reg = self.phi / dt
        self.resid = np.sqrt(conditional_residual(mu, dt))
        self.sigma = sp.sigma
        self.sqdt = math.sqrt(dt)

    def increments(self, xi):
        """Map standard normals (..., 2, ndof) to (db, I)."""
        db = self.sqdt * xi[..., 0, :]
        return db, self.reg * db + self.resid * xi[..., 1, :]

    def step(self, u, I, F=None):
        out = self.decay * u + self.sigma * I
        if F is not None:
            out = out - self.phi * F
        return out


def guard_reference(spec, x):
    sp = build_spectrum(spec)
    lam = basis(spec).lam
    floor = math.sqrt(float(np.sum(lam ** (2 * spec.theta) * sp.stationary_variance)))
    return np.maximum(norm_dofs(spec, x, spec.theta), floor)


def integrate(spec, x, nsteps, dt, generators, *, nonlinear=False, ledger=None,
              record=False, observe=None, guard=GUARD_FACTOR):
    """Advance a batch of paths.

    ``x`` has shape (B, ndof) and ``generators`` holds one stream per path.
    ``ledger`` (anything with ``update(f, db, dt)``) receives the scaled drift
    A^{-gamma}F at the left endpoint of every step, evaluated on the path being
    simulated.  ``observe(step, state)`` is called for steps 0..nsteps.
    Returns a dict with the terminal ``state`` and, if ``record``, the full
    ``states`` (nsteps+1, B, ndof), ``db`` and ``conv`` (nsteps, B, ndof).
    """
    prop = Propagator(spec, dt)
    ndof = basis(spec).ndof
    u = np.array(x, dtype=float, copy=True)
    if u.ndim != 2 or u.shape[1] != ndof or len(generators) != u.shape[0]:
        raise ValueError("x must have shape (len(generators), ndof)")
    need_drift = (nonlinear and spec.nonlinear) or ledger is not None
    limit = guard * guard_reference(spec, u) if guard else None
    if record:
        states = [u.copy()]
        dbs, convs = [], []
    if observe is not None:
        observe(0, u)
    done = 0
    while done < nsteps:
        nb = min(DRAW_BLOCK, nsteps - done)
        xi = np.stack([g.standard_normal((nb, 2, ndof)) for g in generators], axis=1)
        for s in range(nb):
            db, I = prop.increments(xi[s])
            F = None
            if need_drift:
                f, F = scaled_drift_dofs(spec, u)
                if not np.all(np.isfinite(f)):
                    bad = int(np.flatnonzero(~np.all(np.isfinite(f), axis=1))[0])
                    raise BlowUpError(f"non-finite drift on path {bad} at t = {(done + s) * dt:.6g}")
                if ledger is not None:
                    ledger.update(f, db, dt)
            u = prop.step(u, I, F if nonlinear else None)
            if limit is not None:
                nrm = norm_dofs(spec, u, spec.theta)
                over = ~(nrm <= limit)
                if np.any(over):
                    i = int(np.flatnonzero(over)[0])
                    raise BlowUpError(
                        f"path {i}: |A^theta u| = {nrm[i]:.4g} exceeds guard {limit[i]:.4g} "
                        f"at t = {(done + s + 1) * dt:.6g}"
                    )
            if record:
                states.append(u.copy())
                dbs.append(db)
                convs.append(I)
            if observe is not None:
                observe(done + s + 1, u)
        done += nb
    out = {"state": u}
    if record:
        out["states"] = np.stack(states)
        out["db"] = np.stack(dbs)
        out["conv"] = np.stack(convs)
    return out


def chunks(M, size):
    return [(s, min(s + size, M)) for s in range(0, M, size)]


def run_chunks(M, work, chunk=1000, threads=1):
    """Apply ``work(start, stop)`` to consecutive path ranges; results come back
    in path order regardless of ``threads``."""
    ranges = chunks(M, chunk)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda r: work(*r), ranges))
    return [work(*r) for r in ranges]


def initial_batch(spec, x, seed, start, stop, covariance="invariant"):
    """Initial dofs for paths start..stop: a fixed vector broadcast, or, for
    ``x == 'invariant'``, per-path draws from the invariant Gaussian measure."""
    from .spectral import gaussian_dofs

    if isinstance(x, str):
        if x != "invariant":
            raise ValueError(f"unknown initial condition {x!r}")
        return np.stack([gaussian_dofs(spec, g, covariance=covariance)
                         for g in _rng.streams(seed, start, stop, "initial")])
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(x, (stop - start, x.shape[-1])).copy()


def terminal_states(spec, x, T, dt, M, seed, *, nonlinear=False, chunk=1000, threads=1):
    """Terminal dofs (M, ndof) of M independent paths (path i uses stream i)."""
    n = step_count(T, dt)

    def work(start, stop):
        x0 = initial_batch(spec, x, seed, start, stop)
        gens = _rng.streams(seed, start, stop)
        return integrate(spec, x0, n, dt, gens, nonlinear=nonlinear)["state"]

    return np.concatenate(run_chunks(M, work, chunk, threads))
