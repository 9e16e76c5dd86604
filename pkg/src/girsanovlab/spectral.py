"""Fourier-Galerkin bases for the periodic KS equation and fractional NS on the torus.

State vectors are stored two ways:

* ``SpectralField.coeffs`` -- complex amplitudes ``a[k, t]`` on the half
  spectrum, so that the physical field is
  ``u(x) = sum_k sum_t a[k, t] tau_t(k) exp(i kappa(k).x) + c.c.``;
* real "dof" coordinates along an orthonormal basis of H (plain L^2 inner
  product over the domain, no 1/volume factor).  Each (k, t) pair contributes a
  cosine dof ``sqrt(2V) Re a`` and a sine dof ``-sqrt(2V) Im a``.

The noise, the OU dynamics and the Girsanov integrals all act per dof, so the
simulation code works on batched dof arrays of shape ``(..., ndof)``; the FFT
machinery in :class:`Basis` converts to physical grids for the quadratic terms.
"""

import csv
import functools
import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.fft as sfft

from . import rng as _rng

KINDS = ("KS", "FracNS")
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of one model.

    ``kind='KS'``: du + [nu A^2 u - A u + B(u,u)] dt = A^gamma dw, linear
    comparison equation with the extra damping ``a``.
    ``kind='FracNS'``: du + [nu A^alpha u + B(u,u)] dt = A^gamma dw on the
    2pi-periodic torus in dimension ``d``.

    ``cutoff`` is the largest |j| (KS) or the largest ||k||_inf (FracNS).
    ``nonlinear`` and ``noise`` are switches that zero the drift F and the
    noise operator respectively.
    """

    kind: str = "KS"
    nu: float = 1.0
    a: float = 2.0
    gamma: float = 0.0
    theta: float = 0.7
    alpha: float = 1.0
    d: int = 1
    length: float = TWO_PI
    cutoff: int = 32
    p: float = 2.0
    nonlinear: bool = True
    noise: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.nu > 0:
            raise ValueError(f"nu must be > 0, got {self.nu}")
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise ValueError(f"cutoff must be an integer >= 1, got {self.cutoff}")
        if self.p != 2.0:
            raise ValueError("growth exponent p is fixed at 2")
        if not self.theta >= 0:
            raise ValueError(f"theta must be >= 0, got {self.theta}")
        if self.kind == "KS":
            if self.d != 1:
                raise ValueError("KS requires d = 1")
            if not self.a >= 0:
                raise ValueError(f"a must be >= 0, got {self.a}")
            if not self.length > 0:
                raise ValueError(f"length must be > 0, got {self.length}")
        else:
            if self.d not in (2, 3):
                raise ValueError("FracNS requires d in {2, 3}")
            if self.a != 0:
                raise ValueError("the damping shift a is a KS parameter; set a = 0 for FracNS")
            if not self.alpha >= 1:
                raise ValueError(f"alpha must be >= 1, got {self.alpha}")
            if self.length != TWO_PI:
                raise ValueError("FracNS lives on the 2pi torus; length must be 2*pi")

    @classmethod
    def ks(cls, **kw):
        return cls(kind="KS", d=1, **kw)

    @classmethod
    def fracns(cls, d=2, **kw):
        kw.setdefault("a", 0.0)
        kw.setdefault("alpha", 3.0)
        kw.setdefault("gamma", -0.5)
        kw.setdefault("theta", 1.0)
        kw.setdefault("cutoff", 8 if d == 2 else 4)
        return cls(kind="FracNS", d=d, **kw)

    def replace(self, **kw):
        return ModelSpec(**{**asdict(self), **kw})

    def to_dict(self):
        return asdict(self)

    def spec_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# basis and transforms


def _tangent_frame(k, d):
    k = np.asarray(k, dtype=float)
    if d == 1:
        return np.ones((1, 1))
    if d == 2:
        t = np.array([-k[1], k[0]])
        return (t / np.linalg.norm(t))[None, :]
    r = np.array([0.0, 0.0, 1.0])
    if np.linalg.norm(np.cross(k, r)) == 0.0:
        r = np.array([1.0, 0.0, 0.0])
    t1 = np.cross(k, r)
    t2 = np.cross(k, t1)
    return np.stack([t1 / np.linalg.norm(t1), t2 / np.linalg.norm(t2)])


def _half_spectrum(d, K):
    """Wavevectors with 0 < ||k||_inf <= K whose first nonzero entry is positive,
    in lexicographic order."""
    if d == 1:
        return np.arange(1, K + 1)[:, None]
    rng1 = np.arange(-K, K + 1)
    grid = np.stack(np.meshgrid(*([rng1] * d), indexing="ij"), axis=-1).reshape(-1, d)
    keep = []
    for k in grid:
        nz = np.flatnonzero(k)
        if nz.size and k[nz[0]] > 0:
            keep.append(k)
    return np.array(keep)


def grid_size(cutoff):
    """Smallest power of two >= 3*cutoff; always > 3*cutoff, so quadratic
    products of retained modes never alias onto retained modes."""
    n = 1
    while n < 3 * cutoff:
        n *= 2
    return n


class Basis:
    """Mode tables and physical-grid transforms for one :class:`ModelSpec`.

    Obtain instances through :func:`basis` (cached per spec).
    """

    def __init__(self, spec):
        self.spec = spec
        d = spec.d
        self.d = d
        self.kvecs = _half_spectrum(d, spec.cutoff)
        self.nk = len(self.kvecs)
        self.ntan = 1 if d < 3 else 2
        self.tangents = np.stack([_tangent_frame(k, d) for k in self.kvecs])
        self.kappa = self.kvecs * (TWO_PI / spec.length)
        self.volume = spec.length**d
        self.lam_k = np.sum(self.kappa**2, axis=1)
        self.ndof = self.nk * self.ntan * 2
        self.lam = np.repeat(self.lam_k, self.ntan * 2)
        self.labels = self._labels()
        self.n = grid_size(spec.cutoff)
        self.grid_shape = (self.n,) * d
        self._build_index_maps()

    def _labels(self):
        out = []
        for k in self.kvecs:
            for t in range(self.ntan):
                for part in ("cos", "sin"):
                    if self.d == 1:
                        out.append(f"j{k[0]}.{part}")
                    else:
                        kk = ",".join(str(c) for c in k)
                        out.append(f"k({kk}).t{t}.{part}")
        return out

    def mode_labels(self):
        """One label per complex (k, tangent) amplitude."""
        out = []
        for k in self.kvecs:
            for t in range(self.ntan):
                if self.d == 1:
                    out.append(f"j{k[0]}")
                else:
                    out.append("k(" + ",".join(str(c) for c in k) + f").t{t}")
        return out

    def _build_index_maps(self):
        n, d = self.n, self.d
        rshape = (n,) * (d - 1) + (n // 2 + 1,)
        self.rshape = rshape

        def flat(k):
            idx = [int(c) % n for c in k[:-1]] + [int(k[-1])]
            return np.ravel_multi_index(idx, rshape)

        put_pos, put_src, put_conj = [], [], []
        get_pos, get_conj = [], []
        for i, k in enumerate(self.kvecs):
            if k[-1] > 0:
                put_pos.append(flat(k)); put_src.append(i); put_conj.append(False)
                get_pos.append(flat(k)); get_conj.append(False)
            elif k[-1] < 0:
                put_pos.append(flat(-k)); put_src.append(i); put_conj.append(True)
                get_pos.append(flat(-k)); get_conj.append(True)
            else:
                # k_last == 0: the rfft plane stores both k and -k
                put_pos.append(flat(k)); put_src.append(i); put_conj.append(False)
                put_pos.append(flat(-k)); put_src.append(i); put_conj.append(True)
                get_pos.append(flat(k)); get_conj.append(False)
        put_pos, put_src, put_conj = map(np.array, (put_pos, put_src, put_conj))
        self._put_plain = (put_pos[~put_conj], put_src[~put_conj])
        self._put_conj = (put_pos[put_conj], put_src[put_conj])
        self._get_pos = np.array(get_pos)
        self._get_conj = np.array(get_conj)
        self._rsize = int(np.prod(rshape))
        self._axes = tuple(range(-d, 0))

    # -- dof <-> complex amplitude -----------------------------------------

    def amplitudes(self, dofs):
        dofs = np.asarray(dofs, dtype=float)
        p = dofs.reshape(dofs.shape[:-1] + (self.nk, self.ntan, 2))
        return (p[..., 0] - 1j * p[..., 1]) / math.sqrt(2.0 * self.volume)

    def dofs_from_amplitudes(self, amp):
        amp = np.asarray(amp)
        s = math.sqrt(2.0 * self.volume)
        p = np.stack([s * amp.real, -s * amp.imag], axis=-1)
        return p.reshape(amp.shape[:-2] + (self.ndof,))

    def vector_hat(self, dofs):
        """Fourier coefficient vectors u_hat(k) on the half spectrum, shape (..., nk, d)."""
        amp = self.amplitudes(dofs)
        return np.einsum("...kt,ktc->...kc", amp, self.tangents)

    def project(self, what):
        """Leray projection of coefficient vectors (..., nk, d) onto the tangent
        frame, returned as dofs; also discards everything outside the basis."""
        amp = np.einsum("...kc,ktc->...kt", what, self.tangents)
        return self.dofs_from_amplitudes(amp)

    # -- half spectrum <-> physical grid -----------------------------------

    def synth(self, coef):
        """Real grid values of sum_k coef[k] e^{i kappa.x} + c.c. for coef (..., nk)."""
        coef = np.asarray(coef)
        batch = coef.shape[:-1]
        arr = np.zeros(batch + (self._rsize,), dtype=complex)
        pos, src = self._put_plain
        arr[..., pos] = coef[..., src]
        pos, src = self._put_conj
        arr[..., pos] = np.conj(coef[..., src])
        arr = arr.reshape(batch + self.rshape)
        return sfft.irfftn(arr, s=self.grid_shape, axes=self._axes) * self.n**self.d

    def analyze(self, grid):
        """Half-spectrum Fourier coefficients of a real grid field, shape (..., nk)."""
        grid = np.asarray(grid)
        batch = grid.shape[: grid.ndim - self.d]
        spec = sfft.rfftn(grid, axes=self._axes).reshape(batch + (self._rsize,))
        out = spec[..., self._get_pos] / self.n**self.d
        return np.where(self._get_conj, np.conj(out), out)

    def to_grid(self, dofs):
        """Physical velocity grid, shape (..., d, n, ..., n)."""
        vh = self.vector_hat(dofs)
        return self.synth(np.moveaxis(vh, -1, -2))

    def grid_points(self):
        x = np.arange(self.n) * (self.spec.length / self.n)
        return np.meshgrid(*([x] * self.d), indexing="ij")

    def from_grid(self, grid):
        """Galerkin (and, for NS, Leray) projection of a physical grid field with
        shape (..., d, n, ..., n) onto the retained basis."""
        coef = self.analyze(grid)
        return self.project(np.moveaxis(coef, -2, -1))


@functools.lru_cache(maxsize=32)
def basis(spec):
    return Basis(spec)


# ---------------------------------------------------------------------------
# spectrum


@dataclass(frozen=True, eq=False)
class OperatorSpectrum:
    """Per-dof eigenvalue lambda, drift rate mu and noise scale sigma = lambda^gamma."""

    labels: tuple
    lam: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    dof_per_mode: int

    @property
    def stationary_variance(self):
        return self.sigma**2 / (2.0 * self.mu)

    def __len__(self):
        return len(self.labels)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mode_label", "lambda", "mu", "sigma", "stationary_variance"])
            for row in zip(self.labels, self.lam, self.mu, self.sigma, self.stationary_variance):
                w.writerow([row[0]] + [fmt(v) for v in row[1:]])


def fmt(x):
    return f"{float(x):.17g}"


def drift_rates(spec, lam):
    lam = np.asarray(lam, dtype=float)
    if spec.kind == "KS":
        return spec.nu * lam**2 - lam + spec.a
    return spec.nu * lam**spec.alpha


@functools.lru_cache(maxsize=32)
def build_spectrum(spec):
    """Mode table for ``spec``.

    KS modes are ordered by |j| with the cosine dof first; NS modes
    lexicographically by wavevector, then tangent index, cosine before sine.
    Raises ``ValueError`` if some retained KS mode has a non-positive drift rate.
    """
    b = basis(spec)
    mu = drift_rates(spec, b.lam)
    if spec.kind == "KS":
        bad = np.flatnonzero(mu <= 0)
        if bad.size:
            i = bad[0]
            raise ValueError(
                f"drift rate mu = {mu[i]:.6g} <= 0 for mode {b.labels[i]} "
                f"(lambda = {b.lam[i]:.6g}); increase a"
            )
        if spec.a <= 1.0 / (4.0 * spec.nu):
            warnings.warn(
                f"a = {spec.a} <= 1/(4 nu) = {1 / (4 * spec.nu)}: positivity of nu l^2 - l + a "
                "is not guaranteed for every l > 0",
                stacklevel=2,
            )
    sigma = b.lam**spec.gamma if spec.noise else np.zeros_like(b.lam)
    for arr in (b.lam, mu, sigma):
        arr.setflags(write=False)
    return OperatorSpectrum(tuple(b.labels), b.lam, mu, sigma, b.ntan * 2)


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Immutable truncated field: complex amplitudes of shape (nk, ntan)."""

    spec: ModelSpec
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        b = basis(self.spec)
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != (b.nk, b.ntan):
            raise ValueError(f"coeffs must have shape {(b.nk, b.ntan)}, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, spec):
        b = basis(spec)
        return cls(spec, np.zeros((b.nk, b.ntan), dtype=complex))

    @classmethod
    def from_dofs(cls, spec, dofs):
        dofs = np.asarray(dofs, dtype=float)
        if dofs.shape != (basis(spec).ndof,):
            raise ValueError(f"expected {basis(spec).ndof} dofs, got shape {dofs.shape}")
        return cls(spec, basis(spec).amplitudes(dofs))

    @classmethod
    def from_function(cls, spec, func):
        """Project a physical field onto the basis.

        ``func`` receives the grid coordinates (arrays ``x`` or ``x, y[, z]``)
        and returns a scalar grid (KS) or a sequence of d component grids (NS).
        Exact for trigonometric polynomials of degree below n/2.
        """
        b = basis(spec)
        vals = np.asarray(func(*b.grid_points()), dtype=float)
        if spec.d == 1:
            vals = vals[None, ...]
        return cls.from_dofs(spec, b.from_grid(vals))

    @property
    def dofs(self):
        return basis(self.spec).dofs_from_amplitudes(self.coeffs)

    def vector_hat(self):
        return basis(self.spec).vector_hat(self.dofs)

    def to_grid(self):
        return basis(self.spec).to_grid(self.dofs)

    def _check(self, other):
        if not isinstance(other, SpectralField) or other.spec != self.spec:
            raise ValueError("fields belong to different model specs")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.spec, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.spec, self.coeffs - other.coeffs)

    def __neg__(self):
        return SpectralField(self.spec, -self.coeffs)

    def __mul__(self, s):
        return SpectralField(self.spec, self.coeffs * float(s))

    __rmul__ = __mul__


def apply_power(v, s):
    """A^s v: every dof multiplied by lambda^s."""
    b = basis(v.spec)
    return SpectralField.from_dofs(v.spec, v.dofs * b.lam**s)


def sobolev_norm(v, theta):
    """|A^theta v|_H."""
    return float(norm_dofs(v.spec, v.dofs, theta))


def norm_dofs(spec, dofs, theta=0.0):
    lam = basis(spec).lam
    return np.sqrt(np.sum(lam ** (2 * theta) * np.asarray(dofs) ** 2, axis=-1))


def _variance_scale(covariance):
    if covariance == "invariant":
        return 1.0
    if isinstance(covariance, tuple) and len(covariance) == 2 and covariance[0] == "scaled":
        beta = float(covariance[1])
    else:
        beta = float(covariance)
    if not beta >= 0:
        raise ValueError(f"covariance scale must be >= 0, got {beta}")
    return beta


def gaussian_dofs(spec, generator, size=None, covariance="invariant"):
    """Centered Gaussian dofs with variance beta * lambda^{2 gamma} / (2 mu)."""
    sd = np.sqrt(_variance_scale(covariance) * build_spectrum(spec).stationary_variance)
    shape = (basis(spec).ndof,) if size is None else (size, basis(spec).ndof)
    return sd * generator.standard_normal(shape)


def sample_gaussian_field(spec, covariance="invariant", seed=0):
    """One draw from the invariant Gaussian measure of the linear equation.

    ``covariance`` is ``"invariant"`` or ``("scaled", beta)`` (variance times beta).
    """
    g = _rng.stream(seed, 0, "field")
    return SpectralField.from_dofs(spec, gaussian_dofs(spec, g, covariance=covariance))
