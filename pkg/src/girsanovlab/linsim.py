"""Exact simulation of the linear (Ornstein-Uhlenbeck) equations.

Every dof obeys dz + mu z dt = sigma dbeta, so z(t + dt) = e^{-mu dt} z(t) + sigma I
holds exactly with I the stochastic-convolution increment.  The Brownian
increments are drawn jointly with I and stored, so stochastic integrals
against the same noise can be evaluated afterwards.
"""

import csv
import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .ensemble import Propagator, conditional_residual, increment_moments, integrate, step_count
from .spectral import SpectralField, basis, build_spectrum, fmt


def joint_increment(mu, dt, generator):
    """One exact draw of (db, I) for scalar or array drift rates ``mu``."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise ValueError(f"drift rate must be > 0, got {mu}")
    _, _, cov = increment_moments(mu, dt)
    xi = generator.standard_normal((2,) + mu.shape)
    db = np.sqrt(dt) * xi[0]
    I = (cov / dt) * db + np.sqrt(conditional_residual(mu, dt)) * xi[1]
    return db, I


def increment_correlation(mu, dt):
    _, var_i, cov = increment_moments(mu, dt)
    return cov / np.sqrt(dt * var_i)


@dataclass(frozen=True, eq=False)
class PathRecord:
    """One trajectory on the uniform grid 0, dt, ..., T together with the
    per-dof noise increments that produced it."""

    spec: object
    times: np.ndarray
    states: np.ndarray = field(repr=False)
    brownian_increments: np.ndarray = field(repr=False)
    conv_increments: np.ndarray = field(repr=False)
    seed: int
    kind: str
    rng_state: dict = field(repr=False, default=None)

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    @property
    def T(self):
        return float(self.times[-1])

    def field(self, i):
        return SpectralField.from_dofs(self.spec, self.states[i])

    @property
    def terminal(self):
        return self.field(-1)

    def increment_hash(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.brownian_increments, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.conv_increments, dtype="<f8").tobytes())
        return h.hexdigest()

    def continued_stream(self):
        """Generator positioned right after this path's last draw."""
        g = _rng.stream(0)
        g.bit_generator.state = self.rng_state
        return g


def _as_dofs(spec, x):
    if isinstance(x, SpectralField):
        if x.spec != spec:
            raise ValueError("initial field belongs to a different spec")
        return x.dofs
    x = np.asarray(x, dtype=float)
    if x.shape != (basis(spec).ndof,):
        raise ValueError(f"initial dofs must have shape ({basis(spec).ndof},)")
    return x


def simulate_path(spec, x, T, dt, seed=0, *, nonlinear, generator=None, t0=0.0):
    build_spectrum(spec)
    n = step_count(T, dt)
    g = _rng.stream(seed) if generator is None else generator
    x = _as_dofs(spec, x)
    out = integrate(spec, x[None, :], n, dt, [g], nonlinear=nonlinear, record=True)
    return PathRecord(
        spec=spec,
        times=t0 + dt * np.arange(n + 1),
        states=out["states"][:, 0, :],
        brownian_increments=out["db"][:, 0, :],
        conv_increments=out["conv"][:, 0, :],
        seed=seed,
        kind="nonlinear" if nonlinear else "linear",
        rng_state=g.bit_generator.state,
    )


def simulate_linear(spec, x, T, dt, seed=0, generator=None):
    """Exact-in-law OU path from ``x`` on [0, T] with step ``dt``.

    Path 0 of master ``seed`` is used unless an explicit ``generator`` is given
    (e.g. :meth:`PathRecord.continued_stream` to extend a run).
    """
    return simulate_path(spec, x, T, dt, seed, nonlinear=False, generator=generator)


def transition_moments(spec, x, t):
    """Per-dof mean e^{-mu t} x and variance sigma^2 (1 - e^{-2 mu t}) / (2 mu)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    sp = build_spectrum(spec)
    x = _as_dofs(spec, x)
    mean = np.exp(-sp.mu * t) * x
    var = sp.sigma**2 * (-np.expm1(-2 * sp.mu * t)) / (2 * sp.mu)
    return mean, var


def reconstruct_states(spec, x, dt, conv_increments):
    """Rebuild z from x and the stored stochastic-convolution increments."""
    prop = Propagator(spec, dt)
    z = [_as_dofs(spec, x)]
    for I in conv_increments:
        z.append(prop.step(z[-1], I))
    return np.stack(z)


# ---------------------------------------------------------------------------
# path dumps

MAGIC = b"GLPATH1\x00"


def write_path_csv(record, path):
    """Rows (time, mode_label, re, im) of the complex amplitudes."""
    b = basis(record.spec)
    labels = b.mode_labels()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "mode_label", "re", "im"])
        for t, dofs in zip(record.times, record.states):
            amp = b.amplitudes(dofs).ravel()
            for lab, c in zip(labels, amp):
                w.writerow([fmt(t), lab, fmt(c.real), fmt(c.imag)])


def write_paths_binary(records, path):
    """Binary dump of one or more paths sharing a spec and time grid.

    Layout: 8-byte magic ``GLPATH1\\0``; uint64 LE header length h; h bytes of
    UTF-8 JSON (spec, spec_hash, npaths, ntimes, nmodes, labels, seeds, kind);
    float64 LE times[ntimes]; float64 LE data[npaths, ntimes, nmodes, 2] holding
    (re, im) of every complex amplitude.
    """
    records = [records] if isinstance(records, PathRecord) else list(records)
    spec = records[0].spec
    b = basis(spec)
    times = records[0].times
    for r in records:
        if r.spec != spec or not np.array_equal(r.times, times):
            raise ValueError("all records must share spec and time grid")
    header = {
        "spec": spec.to_dict(),
        "spec_hash": spec.spec_hash(),
        "npaths": len(records),
        "ntimes": len(times),
        "nmodes": b.nk * b.ntan,
        "labels": b.mode_labels(),
        "seeds": [r.seed for r in records],
        "kind": records[0].kind,
    }
    hb = json.dumps(header, sort_keys=True).encode()
    data = np.stack([b.amplitudes(r.states).reshape(len(times), -1) for r in records])
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hb)))
        fh.write(hb)
        fh.write(np.asarray(times, dtype="<f8").tobytes())
        fh.write(np.stack([data.real, data.imag], axis=-1).astype("<f8").tobytes())


def read_paths_binary(path):
    """Returns (header, times, amplitudes[npaths, ntimes, nmodes])."""
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path} is not a path dump")
        (h,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(h))
        nt, npaths, nm = header["ntimes"], header["npaths"], header["nmodes"]
        times = np.frombuffer(fh.read(8 * nt), dtype="<f8")
        raw = np.frombuffer(fh.read(), dtype="<f8").reshape(npaths, nt, nm, 2)
    return header, times, raw[..., 0] + 1j * raw[..., 1]
