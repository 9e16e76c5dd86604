"""Bilinear terms and nonlinear drifts, evaluated pseudospectrally.

Quadratic products are formed on a grid with n > 3*cutoff points per axis, so
the Galerkin-truncated product is exact up to rounding (2/3-rule padding).
Both models share one kernel: the projected convective term P[(u.grad) v],
which in one dimension is the KS term u v'.
"""

from dataclasses import dataclass

import numpy as np

from .spectral import SpectralField, basis, norm_dofs


def convective(spec, u, v):
    """Batched B(u, v) on dof arrays of shape (..., ndof).

    KS: u v'.  NS: u is divergence free, so (u.grad) v = div(u (x) v) and only
    the d(d+1)/2 distinct products are needed when v is u.
    """
    b = basis(spec)
    d = b.d
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if d == 1:
        ug = b.synth(b.vector_hat(u)[..., 0])
        vx = b.synth(1j * b.kappa[:, 0] * b.vector_hat(v)[..., 0])
        return b.project(b.analyze(ug * vx)[..., None])
    same = u is v or np.array_equal(u, v)
    ug = b.synth(np.moveaxis(b.vector_hat(u), -1, -2))
    vg = ug if same else b.synth(np.moveaxis(b.vector_hat(v), -1, -2))
    w = np.zeros(u.shape[:-1] + (b.nk, d), dtype=complex)
    for i in range(d):
        for j in range(i if same else 0, d):
            c = b.analyze(_take(vg, i, d) * _take(ug, j, d))
            w[..., i] += 1j * b.kappa[:, j] * c
            if same and j != i:
                w[..., j] += 1j * b.kappa[:, i] * c
    return b.project(w)


def _take(g, i, d):
    # component i of a grid vector field laid out (..., d, n, ..., n)
    return g[(Ellipsis, i) + (slice(None),) * d]


def drift_dofs(spec, u):
    """F(u) on dofs: B(u,u) - a u (KS) or B(u,u) (FracNS); zero when the
    nonlinearity switch is off."""
    u = np.asarray(u, dtype=float)
    if not spec.nonlinear:
        return np.zeros_like(u)
    out = convective(spec, u, u)
    if spec.kind == "KS" and spec.a:
        out = out - spec.a * u
    return out


def scaled_drift_dofs(spec, u):
    """Coefficients of A^{-gamma} F(u), the Girsanov integrand, and F(u) itself."""
    F = drift_dofs(spec, u)
    return F * basis(spec).lam ** (-spec.gamma), F


def _check_same(u, v):
    if u.spec != v.spec:
        raise ValueError("fields belong to different model specs")


def b_ks(u, v):
    """Zero-mean projection of u v' for two fields on the same KS spec."""
    _check_same(u, v)
    if u.spec.kind != "KS":
        raise ValueError("b_ks needs a KS spec")
    return SpectralField.from_dofs(u.spec, convective(u.spec, u.dofs, v.dofs))


def b_ns(u, v):
    """Leray-projected (u.grad) v for two divergence-free fields on the same NS spec."""
    _check_same(u, v)
    if u.spec.kind != "FracNS":
        raise ValueError("b_ns needs a FracNS spec")
    return SpectralField.from_dofs(u.spec, convective(u.spec, u.dofs, v.dofs))


@dataclass(frozen=True)
class DriftEvaluation:
    F_field: SpectralField
    scaled_norm: float
    input_norm_theta: float


def drift(u, spec=None):
    spec = u.spec if spec is None else spec
    if spec != u.spec:
        raise ValueError("field does not belong to spec")
    f, F = scaled_drift_dofs(spec, u.dofs)
    return DriftEvaluation(
        F_field=SpectralField.from_dofs(spec, F),
        scaled_norm=float(np.sqrt(np.sum(f**2))),
        input_norm_theta=float(norm_dofs(spec, u.dofs, spec.theta)),
    )


def growth_ratio(u):
    """|A^{-gamma} F(u)|_H / (1 + |A^theta u|_H^2): the empirical constant in
    the polynomial growth bound with p = 2."""
    ev = drift(u)
    return ev.scaled_norm / (1.0 + ev.input_norm_theta**2)


def growth_ratios(spec, dofs):
    """Vectorised :func:`growth_ratio` over a batch of dof vectors."""
    f, _ = scaled_drift_dofs(spec, dofs)
    return np.sqrt(np.sum(f**2, axis=-1)) / (1.0 + norm_dofs(spec, dofs, spec.theta) ** 2)
