"""Parameter admissibility conditions and series-convergence diagnostics."""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .spectral import ModelSpec

SERIES_CUTOFFS = (100, 1000, 10000)
# verdict "convergent" needs a fitted term exponent below -1 - EXPONENT_TOL;
# finite-size corrections at the boundary are O(j^-2) and far smaller
EXPONENT_TOL = 0.01
PAIRING_TOL = 1e-12

THETA_ZERO_NOTE = ("case theta=0 is not included: |A^-gamma B(v,v)| <= c|v|^2 needs gamma > 3/4, "
          "incompatible with theta + gamma < 3/4")
ALPHA_ONE = "alpha = 1 is not allowed: the Girsanov argument needs alpha > d/2 + 1"
BURGERS = "1D Burgers equation: absolute continuity holds for alpha > 3/2 (informational only)"


@dataclass
class Condition:
    name: str
    text: str
    passed: bool
    margin: float


@dataclass
class SeriesDiagnostics:
    exponent: float
    cutoffs: tuple
    partial_sums: tuple
    decay_exponent: float
    verdict: str


@dataclass
class RegimeReport:
    model: str
    params: dict
    conditions: list
    series: SeriesDiagnostics = None
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.conditions)

    def condition(self, name):
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        d = asdict(self, dict_factory=lambda kv: {k: list(v) if isinstance(v, tuple) else v for k, v in kv})
        d["passed"] = self.passed
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self):
        lines = [f"{self.model} regime check  " + "  ".join(f"{k}={v}" for k, v in self.params.items())]
        w = max(len(c.text) for c in self.conditions)
        for c in self.conditions:
            lines.append(f"  [{'PASS' if c.passed else 'FAIL'}] {c.text:<{w}}  margin {c.margin:+.6g}")
        if self.series is not None:
            s = self.series
            sums = ", ".join(f"J={j}: {v:.6g}" for j, v in zip(s.cutoffs, s.partial_sums))
            lines.append(f"  series exponent 2(theta+gamma)={s.exponent:.6g}; {sums}; "
                         f"term decay j^{s.decay_exponent:.4f} -> {s.verdict}")
        lines += [f"  note: {n}" for n in self.notes]
        lines.append(f"  overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _lt(name, text, lhs, rhs):
    return Condition(name, text, bool(lhs < rhs), float(rhs - lhs))


def _le(name, text, lhs, rhs):
    return Condition(name, text, bool(lhs <= rhs), float(rhs - lhs))


def ks_lower_bound(gamma):
    """Smallest admissible theta for the growth estimate, or None if gamma >= 3/4."""
    if gamma < 0:
        return 0.5 - gamma
    if gamma <= 0.25:
        return 0.625 - gamma
    if gamma < 0.75:
        return 0.375 - gamma / 2
    return None


def check_ks(gamma, theta, spec=None, series=True):
    """Conditions under which the growth bound |A^-gamma F(v)| <= c(1 + |A^theta v|^2)
    and the pathwise regularity of the OU process hold for KS."""
    conds = []
    lo = ks_lower_bound(gamma)
    if lo is None:
        conds.append(Condition("theta_lower", "gamma in a branch of the growth estimate (gamma < 3/4)",
                               False, float(0.75 - gamma)))
    else:
        branch = ("gamma < 0: theta >= 1/2 - gamma" if gamma < 0 else
                  "0 <= gamma <= 1/4: theta >= 5/8 - gamma" if gamma <= 0.25 else
                  "1/4 < gamma < 3/4: theta >= 3/8 - gamma/2")
        conds.append(_le("theta_lower", branch, lo, theta))
    conds.append(_lt("theta_plus_gamma", "theta + gamma < 3/4", theta + gamma, 0.75))
    conds.append(_lt("gamma", "gamma < 3/4", gamma, 0.75))
    conds.append(_lt("theta_positive", "theta > 0", 0.0, theta))
    notes = [THETA_ZERO_NOTE] if theta == 0 else []
    diag = None
    if series:
        spec = ModelSpec.ks() if spec is None else spec
        diag = series_tail(spec, theta, gamma)
    return RegimeReport("KS", {"gamma": gamma, "theta": theta}, conds, diag, notes)


def check_ns(alpha, gamma, theta, d, spec=None, series=True):
    """Conditions for the fractional NS model.  ``gamma=None`` with theta = 0
    means the canonical choice gamma = 1/2 + d/4 + eps."""
    if d not in (1, 2, 3):
        raise ValueError("d must be 1, 2 or 3")
    conds = [_le("alpha_at_least_one", "alpha >= 1", 1.0, alpha)]
    notes = []
    if gamma is not None:
        conds.append(_lt("conv_z", "alpha - 2(theta + gamma) > d/2", d / 2, alpha - 2 * (theta + gamma)))
    if theta >= 1:
        if gamma is None:
            raise ValueError("gamma is required when theta >= 1")
        gap = abs(gamma + theta - 0.5)
        conds.append(Condition("pairing", "-gamma = theta - 1/2", bool(gap <= PAIRING_TOL), 0.0 - gap))
        conds.append(_lt("alpha_min", "alpha > d/2 + 1", d / 2 + 1, alpha))
    elif theta == 0:
        if gamma is not None:
            conds.append(_lt("gamma_theta0", "gamma > 1/2 + d/4", 0.5 + d / 4, gamma))
        else:
            notes.append("theta = 0 with gamma = 1/2 + d/4 + eps: conv_z reduces to alpha > 1 + d + 2 eps")
        conds.append(_lt("alpha_theta0", "alpha > 1 + d (theta = 0 branch)", 1 + d, alpha))
    else:
        conds.append(Condition("theta_range", "theta >= 1 or theta = 0 (growth estimate available)",
                               False, -min(theta, 1 - theta)))
    if alpha == 1:
        notes.append(ALPHA_ONE)
    if d == 1:
        notes.append(BURGERS + (" - satisfied" if alpha > 1.5 else " - not satisfied"))
    diag = None
    if series and gamma is not None and d in (2, 3):
        spec = ModelSpec.fracns(d=d, alpha=max(alpha, 1.0)) if spec is None else spec
        diag = series_tail(spec.replace(alpha=alpha) if spec.alpha != alpha else spec, theta, gamma)
    return RegimeReport("FracNS", {"alpha": alpha, "gamma": gamma, "theta": theta, "d": d}, conds, diag, notes)


# ---------------------------------------------------------------------------
# series


def eigenvalue_sequence(spec, count):
    """First ``count`` eigenvalues of A in increasing order, one per real dof
    (KS: (2 pi j / L)^2 twice each; NS: |k|^2 for every nonzero k in Z^d,
    (d - 1) times each)."""
    if spec.kind == "KS":
        j = np.arange(1, count // 2 + 2)
        lam = np.repeat((2 * math.pi * j / spec.length) ** 2, 2)
        return lam[:count]
    d = spec.d
    per = d - 1
    radius = 2
    while True:
        r = np.arange(-radius, radius + 1)
        k = np.stack(np.meshgrid(*([r] * d), indexing="ij"), axis=-1).reshape(-1, d)
        m = np.sum(k**2, axis=1)
        m = np.sort(m[(m > 0) & (m <= radius**2)])
        if per * m.size >= count:
            return np.repeat(m.astype(float), per)[:count]
        radius *= 2


def series_tail(spec, theta=None, gamma=None, cutoffs=SERIES_CUTOFFS):
    """Partial sums of sum_j lambda_j^{2(theta+gamma)} / (2 mu_j) and the term
    decay exponent fitted over the last decade of indices."""
    theta = spec.theta if theta is None else theta
    gamma = spec.gamma if gamma is None else gamma
    J = max(cutoffs)
    lam = eigenvalue_sequence(spec, J)
    if spec.kind == "KS":
        mu = spec.nu * lam**2 - lam + spec.a
    else:
        mu = spec.nu * lam**spec.alpha
    terms = lam ** (2 * (theta + gamma)) / (2 * mu)
    csum = np.cumsum(terms)
    j = np.arange(1, J + 1)
    tail = slice(J // 10 - 1, J)
    slope = float(np.polyfit(np.log(j[tail]), np.log(terms[tail]), 1)[0])
    verdict = "convergent" if slope < -1 - EXPONENT_TOL else "divergent"
    return SeriesDiagnostics(
        exponent=2 * (theta + gamma),
        cutoffs=tuple(cutoffs),
        partial_sums=tuple(float(csum[c - 1]) for c in cutoffs),
        decay_exponent=slope,
        verdict=verdict,
    )
