"""Multi-run protocols shared by the CLI, the acceptance suite and scripts/."""

from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .nonlinsim import gronwall_constant, twin_path_divergence
from .operators import growth_ratios
from .spectral import basis, gaussian_dofs


def _twin_start(spec, seed, trial, beta):
    return gaussian_dofs(spec, _rng.stream(seed, trial, "field"), covariance=("scaled", beta))


@dataclass
class TwinStudy:
    deltas: list
    terminal_divergence: list
    ratios: list
    C_fit: float
    C_audit: float
    audit_margins: list
    example: object = field(repr=False, default=None)

    @property
    def ratios_ok(self):
        return all(8.0 <= r <= 12.0 for r in self.ratios)

    @property
    def audit_passed(self):
        return sum(m >= 0 for m in self.audit_margins)

    def summary(self):
        return {
            "deltas": self.deltas,
            "terminal_divergence": self.terminal_divergence,
            "ratios": self.ratios,
            "ratios_within_10pm20pct": self.ratios_ok,
            "gronwall_C_fit": self.C_fit,
            "gronwall_C_audit": self.C_audit,
            "audit_trials": len(self.audit_margins),
            "audit_passed": self.audit_passed,
            "audit_min_margin": min(self.audit_margins) if self.audit_margins else None,
        }


def twin_study(spec, T, dt, seed=0, beta=1.0, deltas=(1e-3, 1e-4, 1e-5), calibration=10, trials=20,
               safety=2.0, index=0):
    """Perturbation-linearity ladder and Gronwall-budget audit.

    x2 = x1 + delta e_index with x1 an invariant draw (variance times beta).
    The ladder uses trial 0.  C is the largest ratio log(|AU(t)|/|AU(0)|) /
    budget(t) seen on ``calibration`` trials (delta = deltas[0]); the audit
    checks log growth <= safety * C * budget on ``trials`` fresh trials, each
    with its own initial draw and noise stream.
    """
    deltas = [float(d) for d in deltas]
    x1 = _twin_start(spec, seed, 0, beta)
    ladder = []
    example = None
    for d in deltas:
        x2 = x1.copy()
        x2[index] += d
        r = twin_path_divergence(spec, x1, x2, T, dt, seed, index=0)
        example = r if example is None else example
        ladder.append(float(r.divergence[-1]))
    ratios = [ladder[i] / ladder[i + 1] for i in range(len(ladder) - 1)]

    def run(trial):
        a = _twin_start(spec, seed, trial, beta)
        b = a.copy()
        b[index] += deltas[0]
        return twin_path_divergence(spec, a, b, T, dt, seed, index=trial)

    C = gronwall_constant([run(1 + i) for i in range(calibration)])
    Ca = safety * C
    margins = []
    for i in range(trials):
        r = run(1 + calibration + i)
        lg = r.log_growth()[1:]
        margins.append(float(np.min(Ca * r.budget[1:] - lg)))
    return TwinStudy(deltas, ladder, ratios, C, Ca, margins, example)


def growth_audit(spec, samples=1000, seed=0, beta=1.0, head=100):
    """Max of |A^-gamma F(u)| / (1 + |A^theta u|^2) over invariant draws:
    over the first ``head`` samples and over all of them."""
    g = _rng.stream(seed, 0, "field")
    x = gaussian_dofs(spec, g, samples, covariance=("scaled", beta))
    r = growth_ratios(spec, x)
    m_head, m_all = float(np.max(r[:head])), float(np.max(r))
    return {
        "samples": samples,
        "beta": beta,
        "max_first": m_head,
        "max_all": m_all,
        "growth": m_all / m_head,
        "stable": bool(m_all <= 1.2 * m_head),
        "mean": float(np.mean(r)),
        "ndof": basis(spec).ndof,
    }
