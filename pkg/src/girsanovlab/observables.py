"""The supported observable family: constants, single dofs, squared dofs and
truncated Sobolev energies |A^theta u|^2."""

from dataclasses import dataclass

import numpy as np

from .spectral import basis, build_spectrum

KINDS = ("one", "mode", "mode_sq", "sobolev_sq")


@dataclass(frozen=True)
class Observable:
    kind: str
    index: int = 0
    theta: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"observable kind must be one of {KINDS}, got {self.kind!r}")

    @classmethod
    def parse(cls, text):
        """``one``, ``mode:3``, ``mode_sq:1`` or ``sobolev_sq:0.7``."""
        kind, _, arg = text.partition(":")
        if kind in ("mode", "mode_sq"):
            return cls(kind, index=int(arg or 0))
        if kind == "sobolev_sq":
            return cls(kind, theta=float(arg or 0.0))
        return cls(kind)

    @property
    def name(self):
        if self.kind in ("mode", "mode_sq"):
            return f"{self.kind}:{self.index}"
        if self.kind == "sobolev_sq":
            return f"sobolev_sq:{self.theta:g}"
        return "one"

    def __call__(self, spec, dofs):
        dofs = np.asarray(dofs, dtype=float)
        if self.kind == "one":
            return np.ones(dofs.shape[:-1])
        if self.kind == "mode":
            return dofs[..., self.index]
        if self.kind == "mode_sq":
            return dofs[..., self.index] ** 2
        lam = basis(spec).lam
        return np.sum(lam ** (2 * self.theta) * dofs**2, axis=-1)

    def invariant_mean(self, spec):
        """Expectation under the invariant Gaussian measure of the linear equation."""
        var = build_spectrum(spec).stationary_variance
        if self.kind == "one":
            return 1.0
        if self.kind == "mode":
            return 0.0
        if self.kind == "mode_sq":
            return float(var[self.index])
        return float(np.sum(basis(spec).lam ** (2 * self.theta) * var))
