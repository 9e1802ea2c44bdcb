"""Recurrence classification and mean return times.

Decision procedure for a state ``x`` (orders doubled up to ``max_order``):

1. transient, if a rigorous certificate shows ``F(x,x|1) < 1 - delta_F``
   (finite chains: exact linear solve; infinite chains: partial sum plus a
   geometric tail bound on ``f^(n)``);
2. positive recurrent, if ``sum_n n f^(n)(x,x)`` has converged, or directly
   for a finite irreducible chain, whose mean return time is ``1/pi(x)``;
3. null recurrent (heuristic), if the extrapolated return probability is
   within ``delta_F`` of 1 and the partial means keep growing;
4. inconclusive otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .chain import DEFAULT_POLICY, Kernel, TruncationPolicy, is_irreducible
from .errors import DomainError, PreconditionError
from .passage import FirstReturnTable, first_return_probs
from .series import DEFAULT_ORDER, AbelianEstimate, abelian_limit, series_eval


class Verdict(str, Enum):
    TRANSIENT = "Transient"
    NULL_RECURRENT = "NullRecurrent"
    POSITIVE_RECURRENT = "PositiveRecurrent"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class Thresholds:
    delta_F: float = 1e-4
    # successive-ratio bound needed for a geometric tail: rho < 1 - ratio_margin
    ratio_margin: float = 1e-3
    tau_rtol: float = 1e-6
    max_order: int = 8192
    # growth ratio of successive partial-mean increments read as divergence
    divergence_ratio: float = 0.9


@dataclass
class ClassificationReport:
    state: int
    verdict: Verdict
    F1_estimate: float
    F1_extrapolated: float
    tau_estimate: float
    tau_converged: bool
    tau_infinite: bool
    abelian_tau: AbelianEstimate
    order_used: int
    defect: float
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "state": self.state,
            "verdict": self.verdict.value,
            "F1_estimate": self.F1_estimate,
            "F1_extrapolated": self.F1_extrapolated,
            "tau_estimate": None if self.tau_infinite else self.tau_estimate,
            "tau_converged": self.tau_converged,
            "tau_infinite": self.tau_infinite,
            "abelian_tau": self.abelian_tau.to_dict(),
            "order_used": self.order_used,
            "defect": self.defect,
            "notes": list(self.notes),
        }


def _tau_partial(table: FirstReturnTable, rtol: float) -> tuple[float, bool]:
    w = np.arange(1, table.order + 1) * table.f
    partial = math.fsum(w)
    tail = math.fsum(w[table.order - max(1, table.order // 4) :])
    # a finite mean needs the return probability itself to have reached 1
    converged = (
        partial > 0.0 and tail < rtol * partial and table.defect <= rtol and table.total >= 1.0 - rtol
    )
    return partial, converged


def mean_return_time(
    k: Kernel, x: int, N: int = DEFAULT_ORDER, policy: TruncationPolicy = DEFAULT_POLICY, rtol: float = 1e-6
) -> tuple[float, bool]:
    """Partial mean return time ``sum_{n<=N} n f^(n)(x,x)`` and a convergence flag.

    The partial sum is a lower bound for the mean return time. It counts as
    converged when the last quarter of the terms adds less than ``rtol`` of the
    total, the return probabilities sum to within ``rtol`` of 1 and the
    truncation defect is below ``rtol``.
    """
    return _tau_partial(first_return_probs(k, x, x, N, policy), rtol)


def exact_return_probability(k: Kernel, x: int) -> float:
    """``F(x, x | 1)`` of a finite chain by a linear solve for hitting probabilities."""
    P = k.dense
    n = P.shape[0]
    x = k.validate_state(x)
    others = [i for i in range(n) if i != x]
    if not others:
        return float(P[x, x])
    Q = P[np.ix_(others, others)]
    h = np.linalg.solve(np.eye(n - 1) - Q, P[others, x])
    return float(P[x, x] + P[x, others] @ h)


def _geometric_tail_bound(f: np.ndarray, margin: float) -> float | None:
    """Upper bound on ``sum_{n>N} f^(n)`` assuming the terms decay geometrically.

    Ratios of successive non-zero terms over the last quarter are fitted as
    ``rho + c/n``; the bound is returned only when both the fitted limit and
    every observed ratio stay below ``1 - margin``.
    """
    start = f.size - max(4, f.size // 4)
    idx = np.arange(max(start, 0), f.size)
    idx = idx[f[idx] > 0.0]
    if idx.size == 0:
        return 0.0 if np.any(f > 0.0) else None
    if idx.size < 4:
        return None
    r = f[idx[1:]] / f[idx[:-1]]
    design = np.column_stack([np.ones(r.size), 1.0 / (idx[1:] + 1.0)])
    rho_fit = float(np.linalg.lstsq(design, r, rcond=None)[0][0])
    rho = max(rho_fit, float(r[-1]))
    if rho >= 1.0 - margin or r.max() >= 1.0 - margin:
        return None
    return float(f[idx[-1]] * rho / (1.0 - rho))


def _aitken(s1: float, s2: float, s3: float) -> float:
    d1, d2 = s2 - s1, s3 - s2
    if d2 == 0.0:
        return s3
    if d1 <= d2:
        return math.nan
    return s3 + d2 * d2 / (d1 - d2)


def classify(
    k: Kernel,
    x: int,
    N: int = DEFAULT_ORDER,
    policy: TruncationPolicy = DEFAULT_POLICY,
    thresholds: Thresholds = Thresholds(),
) -> ClassificationReport:
    """Classify state ``x`` (hence, for irreducible chains, the whole chain)."""
    x = k.validate_state(x)
    if N < 4:
        raise DomainError("classification needs N >= 4")
    notes: list[str] = []
    exact_F1 = None
    if k.is_finite:
        if not is_irreducible(k):
            raise PreconditionError(f"{k.name} is reducible")
        exact_F1 = exact_return_probability(k, x)

    order = N
    while True:
        table = first_return_probs(k, x, x, order, policy)
        F1 = table.total
        tau, tau_conv = _tau_partial(table, thresholds.tau_rtol)
        verdict = None
        if exact_F1 is not None:
            if exact_F1 < 1.0 - thresholds.delta_F:
                verdict = Verdict.TRANSIENT
                notes.append(f"exact return probability {exact_F1:.12g}")
            else:
                # finite irreducible: tau = 1/pi(x) even when returns are too rare for the series
                notes.append(f"mean return time from the stationary solver; series partial sum {tau:.12g}")
                tau, tau_conv = 1.0 / stationary_measure_finite(k)[x], True
                verdict = Verdict.POSITIVE_RECURRENT
        else:
            tail = _geometric_tail_bound(table.f, thresholds.ratio_margin)
            if tail is not None and F1 + tail + table.defect < 1.0 - thresholds.delta_F:
                verdict = Verdict.TRANSIENT
                notes.append(f"return probability <= {F1 + tail + table.defect:.12g} (geometric tail bound {tail:.3g})")
        if verdict is None and tau_conv:
            verdict = Verdict.POSITIVE_RECURRENT
        if verdict is not None or order >= thresholds.max_order:
            break
        order = min(2 * order, thresholds.max_order)

    cum = table.cumulative
    q = order // 4
    F1_extrap = _aitken(cum[q - 1], cum[2 * q - 1], cum[-1]) if exact_F1 is None else exact_F1
    tau_infinite = False
    if verdict is None:
        w = np.cumsum(np.arange(1, order + 1) * table.f)
        e1, e2 = w[2 * q - 1] - w[q - 1], w[-1] - w[2 * q - 1]
        diverging = e1 > 0.0 and e2 > 0.0 and e2 / e1 >= thresholds.divergence_ratio
        if diverging and F1_extrap >= 1.0 - thresholds.delta_F:
            verdict = Verdict.NULL_RECURRENT
            tau_infinite = True
            notes.append(
                "null recurrence is a heuristic verdict: finitely many coefficients cannot certify it "
                f"(extrapolated return probability {F1_extrap:.6g}, partial means still growing)"
            )
        else:
            verdict = Verdict.INCONCLUSIVE
            notes.append(f"no criterion fired up to order {order}")

    Fz = table.as_series()
    abel = abelian_limit(lambda z: (1.0 - series_eval(Fz, z)) / (1.0 - z))
    if table.defect > 0.0:
        notes.append(f"truncation defect {table.defect:.3g}: series values are lower bounds")
    return ClassificationReport(
        state=x,
        verdict=verdict,
        F1_estimate=F1,
        F1_extrapolated=F1_extrap,
        tau_estimate=math.inf if tau_infinite else tau,
        tau_converged=tau_conv,
        tau_infinite=tau_infinite,
        abelian_tau=abel,
        order_used=order,
        defect=table.defect,
        notes=notes,
    )


@dataclass
class StationaryMeasure:
    probabilities: dict[int, float]

    def __getitem__(self, x: int) -> float:
        return self.probabilities[x]

    def as_array(self) -> np.ndarray:
        return np.array([self.probabilities[i] for i in range(len(self.probabilities))])


def stationary_measure_finite(k: Kernel) -> StationaryMeasure:
    """Stationary distribution of a finite irreducible chain.

    Uses Grassmann-Taksar-Heyman elimination, which avoids subtractions and so
    keeps high relative accuracy even for states of tiny probability.
    """
    if not is_irreducible(k):
        raise PreconditionError(f"{k.name} is reducible")
    P = k.dense
    A = P.copy()
    n = A.shape[0]
    for m in range(n - 1, 0, -1):
        s = A[m, :m].sum()
        if s <= 0.0:
            raise PreconditionError("singular elimination step; chain is reducible")
        A[:m, m] /= s
        A[:m, :m] += np.outer(A[:m, m], A[m, :m])
    pi = np.zeros(n)
    pi[0] = 1.0
    for m in range(1, n):
        pi[m] = pi[:m] @ A[:m, m]
    pi /= pi.sum()
    residual = np.abs(pi @ P - pi).max()
    if residual > 1e-9:
        raise PreconditionError(f"stationary residual {residual:.3g} exceeds 1e-9")
    return StationaryMeasure({i: float(v) for i, v in enumerate(pi)})
