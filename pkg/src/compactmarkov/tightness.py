"""Finite-set tightness of a chain: ``sup_x sum_{y not in A} p(x, y) < eps``.

For finite chains the supremum is computed exactly. For infinite chains it is
certified only through a family's structural bound
(:attr:`Kernel.noncompact_floor`); otherwise it is a lower bound over the
explored states and marked non-exhaustive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .chain import DEFAULT_POLICY, Kernel, MassFlow, TruncationPolicy
from .errors import DomainError, PreconditionError

DEFAULT_BUDGET = 500
DEFAULT_EPSILON_GRID = (0.5, 0.2, 0.1, 0.05, 0.01)


class TailSup(NamedTuple):
    value: float
    exhaustive: bool


class TailCheck(NamedTuple):
    n: int
    value: float
    passed: bool


@dataclass(frozen=True)
class TightnessCertificate:
    """A finite set ``A`` (in the order it was built) with certified tail below ``epsilon``."""

    A: tuple[int, ...]
    epsilon: float
    achieved_tail: float
    exhaustive: bool
    states_explored: int

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError("epsilon must lie in (0, 1)")
        if not 0.0 <= self.achieved_tail <= 1.0:
            raise DomainError("achieved_tail must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "A": list(self.A),
            "epsilon": self.epsilon,
            "achieved_tail": self.achieved_tail,
            "exhaustive": self.exhaustive,
            "states_explored": self.states_explored,
        }


@dataclass
class TightSearch:
    """Outcome of :func:`find_tight_set`; ``certificate`` is None when not found."""

    epsilon: float
    certificate: TightnessCertificate | None
    best_set: tuple[int, ...]
    best_tail: float
    exhaustive: bool
    refuted: bool
    states_explored: int
    reason: str = ""

    @property
    def found(self) -> bool:
        return self.certificate is not None

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "found": self.found,
            "certificate": None if self.certificate is None else self.certificate.to_dict(),
            "best_set": list(self.best_set),
            "best_tail": self.best_tail,
            "exhaustive": self.exhaustive,
            "refuted": self.refuted,
            "states_explored": self.states_explored,
            "reason": self.reason,
        }


def _as_set(k: Kernel, A: Iterable[int]) -> frozenset[int]:
    A = frozenset(k.validate_state(a) for a in A)
    if not A:
        raise DomainError("A must be a non-empty finite set")
    return A


def _row_tail(k: Kernel, x: int, A: frozenset[int]) -> float:
    # summing the escaping weights avoids the cancellation in 1 - p(x, A)
    return min(1.0, math.fsum(w for y, w in k.row(x) if y not in A))


def tail_sup(k: Kernel, A: Iterable[int], budget: int = DEFAULT_BUDGET) -> TailSup:
    """``sup_x sum_{y not in A} p(x, y)``.

    Exact for finite chains. For infinite chains the maximum over the first
    ``budget`` states, raised to the family's structural floor when it has
    one; the value is certified (``exhaustive``) only when it reaches 1, the
    largest possible tail.
    """
    A = _as_set(k, A)
    if k.is_finite:
        return TailSup(max(_row_tail(k, x, A) for x in k.states()), True)
    value = max(_row_tail(k, x, A) for x in k.states(budget))
    if k.noncompact_floor is not None:
        value = max(value, k.noncompact_floor)
    return TailSup(value, value >= 1.0)


def find_tight_set(k: Kernel, epsilon: float, budget: int = DEFAULT_BUDGET) -> TightSearch:
    """Greedy search for a finite ``A`` with certified tail supremum below ``epsilon``.

    ``A`` grows one state at a time over the first ``budget`` states, each time
    adding the state that lowers the explored supremum most; ties go to the
    state receiving most mass, then to the lower index. Success needs an
    exhaustive supremum, so chains without a structural bound never succeed.
    When the family's floor already reaches ``epsilon`` no finite set can work
    and the search is reported as refuted without growing anything.
    """
    if not 0.0 < epsilon < 1.0:
        raise DomainError("epsilon must lie in (0, 1)")
    if k.noncompact_floor is not None and k.noncompact_floor >= epsilon:
        return TightSearch(
            epsilon, None, (), 1.0, True, True, 0,
            f"every finite set leaves tail >= {k.noncompact_floor:g} on some state",
        )

    rows = list(k.states() if k.is_finite else k.states(budget))
    cands = rows[: min(budget, len(rows))]
    col = {y: j for j, y in enumerate(cands)}
    P = np.zeros((len(rows), len(cands)))
    beyond = np.zeros(len(rows))  # mass sent past the candidate states
    for i, x in enumerate(rows):
        for y, w in k.row(x):
            j = col.get(y)
            if j is not None:
                P[i, j] += w
            else:
                beyond[i] += w
    incoming = P.sum(axis=0)
    tails = beyond + P.sum(axis=1)
    chosen: list[int] = []
    in_A = np.zeros(len(cands), dtype=bool)

    while tails.max() >= epsilon and len(chosen) < len(cands):
        new_sup = (tails[:, None] - P).max(axis=0)
        new_sup[in_A] = np.inf
        # primary: lowest new sup; then most incoming mass; then lowest index
        order = np.lexsort((np.arange(len(cands)), -incoming, new_sup))
        j = int(order[0])
        chosen.append(cands[j])
        in_A[j] = True
        # re-summed rather than decremented, so ties at epsilon are not lost to rounding
        tails = beyond + P[:, ~in_A].sum(axis=1)

    A = tuple(chosen)
    if not A:
        return TightSearch(epsilon, None, (), 1.0, False, False, len(rows), "no candidate states")
    value, exhaustive = tail_sup(k, A, budget)
    if value < epsilon and exhaustive:
        cert = TightnessCertificate(A, epsilon, value, True, len(rows))
        return TightSearch(epsilon, cert, A, value, True, False, len(rows), "certified")
    reason = (
        f"explored tail {value:.6g} below epsilon but the supremum is not certified"
        if value < epsilon
        else f"budget of {budget} states exhausted with tail {value:.6g}"
    )
    return TightSearch(epsilon, None, A, value, exhaustive, False, len(rows), reason)


def n_step_tail_check(
    k: Kernel,
    A: Iterable[int],
    epsilon: float,
    n_max: int,
    policy: TruncationPolicy = DEFAULT_POLICY,
    budget: int = DEFAULT_BUDGET,
) -> list[TailCheck]:
    """Check ``sup_x sum_{y not in A} p^(n)(x, y) < epsilon`` for ``n = 1..n_max``.

    Requires a certified one-step bound. Truncation defect counts against the
    check (an upper bound on the tail is compared with ``epsilon``).
    """
    A = _as_set(k, A)
    one = tail_sup(k, A, budget)
    if not (one.exhaustive and one.value < epsilon):
        raise PreconditionError(f"tail_sup(A) = {one.value:g} is not certified below {epsilon:g}")
    out = []
    if k.is_finite:
        P = k.dense
        u = np.zeros(P.shape[0])
        u[list(A)] = 1.0
        for n in range(1, n_max + 1):
            u = P @ u  # u = P^n 1_A
            value = float(np.clip(1.0 - u, 0.0, 1.0).max())
            out.append(TailCheck(n, value, value < epsilon))
        return out
    flows = [MassFlow(k, x, n_max, policy) for x in k.states(budget)]
    for n in range(1, n_max + 1):
        value = 0.0
        for fl in flows:
            fl.step()
            value = max(value, fl.alive() - fl.mass_on(A) + fl.defect)
        out.append(TailCheck(n, value, value < epsilon))
    return out


@dataclass
class CompactnessReport:
    verdict: str
    searches: list[TightSearch] = field(default_factory=list)

    def status(self, s: TightSearch) -> str:
        return "satisfied" if s.found else ("refuted" if s.refuted else "inconclusive")

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "grid": [dict(s.to_dict(), status=self.status(s)) for s in self.searches],
        }


def compactness_verdict(
    k: Kernel, epsilon_grid: Iterable[float] = DEFAULT_EPSILON_GRID, budget: int = DEFAULT_BUDGET
) -> CompactnessReport:
    searches = [find_tight_set(k, eps, budget) for eps in sorted(epsilon_grid, reverse=True)]
    sat = [s.epsilon for s in searches if s.found]
    ref = [s.epsilon for s in searches if s.refuted]
    if len(sat) == len(searches):
        verdict = f"criterion satisfied down to eps={min(sat):g}"
    elif ref:
        verdict = f"refuted at eps={max(ref):g}"
        if sat:
            verdict = f"criterion satisfied down to eps={min(sat):g}; " + verdict
    elif sat:
        verdict = f"criterion satisfied down to eps={min(sat):g}; inconclusive within budget below"
    else:
        verdict = "inconclusive within budget"
    return CompactnessReport(verdict, searches)
