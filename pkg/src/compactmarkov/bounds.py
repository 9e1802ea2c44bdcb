"""Numerical checks of return-time, hitting-time and reversible lower bounds.

Every check produces a :class:`BoundCheck` with both sides of the inequality
and a status: ``pass``, ``fail`` or ``inconclusive`` (truncation or
non-convergence prevents a decision). One-sided slack is graded by how much
arithmetic feeds each side: 1e-12 for single probabilities, 1e-9 for
accumulated sums, 1e-6 relative for series-based mean return times.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .chain import DEFAULT_POLICY, Kernel, MassFlow, TruncationPolicy, explore
from .classify import Thresholds, _tau_partial, stationary_measure_finite
from .errors import DomainError, PreconditionError
from .passage import first_return_probs
from .series import DEFAULT_ORDER, TruncatedSeries, series_eval
from .tightness import TightnessCertificate, tail_sup

BALANCE_TOL = 1e-9


@dataclass
class BoundCheck:
    name: str
    lhs: float
    relation: str
    rhs: float
    status: str
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "relation": self.relation,
            "rhs": self.rhs,
            "status": self.status,
            "detail": self.detail,
        }


@dataclass
class ReversibilityMeasure:
    """Detailed-balance weights ``m`` normalized by ``m(anchor) = 1``."""

    m: dict[int, float]
    anchor: int
    residual: float

    def __getitem__(self, x: int) -> float:
        try:
            return self.m[x]
        except KeyError:
            raise DomainError(f"state {x} is outside the computed reversibility measure") from None

    def mass(self, A: Iterable[int]) -> float:
        return math.fsum(self[a] for a in A)


def compute_reversibility_measure(
    k: Kernel, anchor: int = 0, radius: int = 200, policy: TruncationPolicy = DEFAULT_POLICY
) -> ReversibilityMeasure | None:
    """Solve detailed balance ``m(x)p(x,y) = m(y)p(y,x)``, or return None.

    Weights are propagated along a breadth-first spanning tree of the
    transition graph; every remaining edge then closes a fundamental cycle,
    so checking balance on all edges is Kolmogorov's cycle criterion on a
    cycle basis. Infinite chains are handled on the region within ``radius``
    of the anchor (states whose weight underflows are left out).
    """
    nb = explore(k, anchor, radius, policy.max_states)
    p: dict[tuple[int, int], float] = {}
    for i, j, w in zip(nb.rows.tolist(), nb.cols.tolist(), nb.weights.tolist()):
        p[i, j] = p.get((i, j), 0.0) + w
    adj: dict[int, list[int]] = {}
    for i, j in p:
        if i != j:
            adj.setdefault(i, []).append(j)

    for (i, j), w in p.items():
        if i != j and nb.expanded[j] and p.get((j, i), 0.0) == 0.0:
            return None

    start = nb.index[anchor]
    m = {start: 1.0}
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j in adj.get(i, ()):
            if j in m or not nb.expanded[j]:
                continue
            mj = m[i] * p[i, j] / p[j, i]
            if mj > 0.0 and math.isfinite(mj):
                m[j] = mj
                queue.append(j)

    residual = 0.0
    for (i, j), w in p.items():
        if i == j or i not in m or j not in m:
            continue
        a, b = m[i] * w, m[j] * p[j, i]
        residual = max(residual, abs(a - b) / max(a, b))
    if residual > BALANCE_TOL:
        return None
    return ReversibilityMeasure({nb.states[i]: v for i, v in sorted(m.items())}, anchor, residual)


def _require_measure(m) -> ReversibilityMeasure:
    if not isinstance(m, ReversibilityMeasure) or m.residual > BALANCE_TOL:
        raise PreconditionError("a verified reversibility measure is required")
    return m


def _mean_return_time(k, x, N, policy, max_order=Thresholds().max_order, rtol=1e-6):
    order = N
    while True:
        tau, conv = _tau_partial(first_return_probs(k, x, x, order, policy), rtol)
        if conv or order >= max_order:
            return tau, conv
        order = min(2 * order, max_order)


def _certified(k: Kernel, cert: TightnessCertificate, budget: int) -> None:
    ts = tail_sup(k, cert.A, budget)
    if not (ts.exhaustive and ts.value < cert.epsilon):
        raise PreconditionError(f"certificate not valid: tail_sup = {ts.value:g}, epsilon = {cert.epsilon:g}")


@dataclass
class ReturnTimeBounds:
    taus: dict[int, float]
    converged: dict[int, bool]
    checks: list[BoundCheck]

    def to_dict(self) -> dict:
        return {
            "tau": {str(x): t for x, t in self.taus.items()},
            "converged": {str(x): c for x, c in self.converged.items()},
            "checks": [c.to_dict() for c in self.checks],
        }


def check_return_time_bounds(
    k: Kernel,
    cert: TightnessCertificate,
    N: int = DEFAULT_ORDER,
    policy: TruncationPolicy = DEFAULT_POLICY,
    budget: int = 500,
) -> ReturnTimeBounds:
    """Check ``1 >= sum_{x in A} 1/tau_x >= 1 - eps`` and ``min_A tau <= |A|/(1 - eps)``.

    Finite chains take ``tau_x = 1/pi(x)`` from the stationary solver, which
    stays exact for states whose returns are far too rare for any truncated
    series. Infinite chains use the first-return series; a non-converged
    mean return time is still a lower bound, so its reciprocal can certify
    the upper side of the window, while the lower side and the min-bound are
    then inconclusive unless decided by converged terms.
    """
    _certified(k, cert, budget)
    eps = cert.epsilon
    taus, conv = {}, {}
    if k.is_finite:
        pi = stationary_measure_finite(k)
        for x in cert.A:
            taus[x], conv[x] = 1.0 / pi[x], True
    else:
        for x in cert.A:
            taus[x], conv[x] = _mean_return_time(k, x, N, policy)
    recip = math.fsum(1.0 / t for t in taus.values())
    all_conv = all(conv.values())
    checks = []

    lower = 1.0 - eps
    if recip > 1.0 + 1e-6:
        st = "fail" if all_conv else "inconclusive"
    elif recip >= lower - 1e-9:
        st = "pass" if all_conv else "inconclusive"
    else:
        # non-converged terms only overestimate 1/tau, so a shortfall is real
        st = "fail"
    checks.append(BoundCheck("sum_inverse_tau", recip, "in", lower, st, f"window [{lower:.12g}, 1]"))

    bound = len(cert.A) / (1.0 - eps)
    conv_taus = [taus[x] for x in cert.A if conv[x]]
    best = min(taus.values())
    if conv_taus and min(conv_taus) <= bound * (1 + 1e-6):
        st = "pass"
    elif all_conv:
        st = "fail"
    else:
        st = "inconclusive"
    checks.append(BoundCheck("min_tau", min(conv_taus) if conv_taus else best, "<=", bound, st))
    return ReturnTimeBounds(taus, conv, checks)


@dataclass
class HittingTimeDistribution:
    """Law of ``T_A = inf{n > 0 : Z_n in A}`` started from ``source``.

    ``pmf[n-1] = P(T_A = n)``; ``survival[n-1]`` is an upper bound for
    ``P(T_A >= n)`` (exact when ``defect`` is 0); ``tail = P(T_A > n_max)``
    restricted to the explored region.
    """

    A: tuple[int, ...]
    source: int
    pmf: np.ndarray
    survival: np.ndarray
    tail: float
    defect: float
    partial_expectation: float
    expectation_lower: float
    expectation_upper: float
    checks: list[BoundCheck] = field(default_factory=list)

    @property
    def n_max(self) -> int:
        return self.pmf.size

    def to_dict(self) -> dict:
        return {
            "A": list(self.A),
            "source": self.source,
            "pmf": self.pmf.tolist(),
            "survival": self.survival.tolist(),
            "tail": self.tail,
            "defect": self.defect,
            "partial_expectation": self.partial_expectation,
            "expectation_interval": [self.expectation_lower, self.expectation_upper],
            "checks": [c.to_dict() for c in self.checks],
        }


def hitting_time_distribution(
    k: Kernel,
    A: Iterable[int],
    x: int,
    n_max: int,
    policy: TruncationPolicy = DEFAULT_POLICY,
    cert: TightnessCertificate | None = None,
) -> HittingTimeDistribution:
    """Exact forward computation of the entrance time into ``A`` from ``x``.

    With a certificate ``(A, eps)`` the survival bound ``P(T_A >= n) <= eps^(n-1)``
    and the mean bound ``E[T_A] <= 1/(1 - eps)`` are checked; the mean is
    bounded above by ``sum_{n <= n_max} P(T_A >= n) + eps^n_max / (1 - eps)``.
    """
    A = tuple(sorted({k.validate_state(a) for a in A}))
    if not A:
        raise DomainError("A must be non-empty")
    x = k.validate_state(x)
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    flow = MassFlow(k, x, n_max, policy, taboo=A)
    pmf = np.empty(n_max)
    surv = np.empty(n_max)
    for n in range(n_max):
        surv[n] = min(1.0, flow.alive() + flow.defect)
        pmf[n] = flow.step()
    tail = flow.alive()
    partial = math.fsum(np.arange(1, n_max + 1) * pmf)
    lower = partial + (n_max + 1) * tail
    upper = partial if tail == 0.0 and flow.defect == 0.0 else math.inf

    checks = []
    if cert is not None:
        if set(cert.A) != set(A):
            raise DomainError("certificate is for a different set")
        eps = cert.epsilon
        bound = eps ** np.arange(n_max)
        ok = surv <= bound * (1 + 1e-9) + 1e-15
        worst = int(np.argmin(ok)) if not ok.all() else int(np.argmax(surv / bound))
        checks.append(
            BoundCheck(
                "survival",
                float(surv[worst]),
                "<=",
                float(bound[worst]),
                "pass" if ok.all() else "fail",
                f"worst n = {worst + 1} from x = {x}",
            )
        )
        upper = min(upper, math.fsum(surv) + eps**n_max / (1.0 - eps))
        cap = 1.0 / (1.0 - eps)
        checks.append(
            BoundCheck("expectation", upper, "<=", cap, "pass" if upper <= cap * (1 + 1e-6) else "fail", f"x = {x}")
        )
    return HittingTimeDistribution(A, x, pmf, surv, tail, flow.defect, partial, lower, upper, checks)


def check_certified_bounds(
    k: Kernel,
    cert: TightnessCertificate,
    n_max: int = 50,
    N: int = DEFAULT_ORDER,
    policy: TruncationPolicy = DEFAULT_POLICY,
    budget: int = 500,
) -> list[BoundCheck]:
    """All four estimates implied by a certificate: the two return-time bounds,
    and the worst survival and mean-entrance-time checks over explored sources."""
    rt = check_return_time_bounds(k, cert, N, policy, budget)
    sources = k.states() if k.is_finite else k.states(budget)
    worst: dict[str, BoundCheck] = {}
    for x in sources:
        h = hitting_time_distribution(k, cert.A, x, n_max, policy, cert)
        for c in h.checks:
            cur = worst.get(c.name)
            if cur is None or (c.status != "pass", c.lhs / c.rhs) > (cur.status != "pass", cur.lhs / cur.rhs):
                worst[c.name] = c
    return rt.checks + [worst["survival"], worst["expectation"]]


@dataclass
class ReturnBoundCheck:
    x: int
    A: tuple[int, ...]
    n: int
    eps_n: float
    lhs: float
    rhs: float
    passed: bool

    @property
    def vacuous(self) -> bool:
        return self.eps_n >= 1.0


def _p2n_check(m: ReversibilityMeasure, x, A, n, eps_n, p2n) -> ReturnBoundCheck:
    eps_n = min(eps_n, 1.0)
    rhs = (1.0 - eps_n) ** 2 * m[x] / m.mass(A)
    return ReturnBoundCheck(x, tuple(A), n, eps_n, p2n, rhs, p2n >= rhs - 1e-12)


def reversible_lower_bound(
    k: Kernel,
    m: ReversibilityMeasure,
    A: Iterable[int],
    x: int,
    n: int,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> ReturnBoundCheck:
    """``p^(2n)(x,x) >= (1 - eps_n)^2 m(x)/m(A)`` with ``eps_n = sum_{y not in A} p^(n)(x,y)``.

    The hypothesis is taken per ``(x, n)``: ``eps_n`` is computed (truncation
    defect added, so it is an upper bound) rather than supplied.
    """
    m = _require_measure(m)
    A = tuple(sorted({k.validate_state(a) for a in A}))
    if not A:
        raise DomainError("A must be non-empty")
    if n < 1:
        raise DomainError("n must be >= 1")
    x = k.validate_state(x)
    flow = MassFlow(k, x, 2 * n, policy)
    for _ in range(n):
        flow.step()
    eps_n = flow.alive() - flow.mass_on(A) + flow.defect
    for _ in range(n):
        flow.step()
    return _p2n_check(m, x, A, n, eps_n, flow.mass_at(x))


def reversible_lower_bound_sweep(
    k: Kernel,
    m: ReversibilityMeasure,
    sources: Iterable[int],
    sets: Iterable[Iterable[int]],
    n_max: int,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> list[ReturnBoundCheck]:
    """:func:`reversible_lower_bound` over all ``(x, A, n <= n_max)``, sharing the walks."""
    m = _require_measure(m)
    sets = [tuple(sorted(set(A))) for A in sets]
    out = []
    for x in sources:
        flow = MassFlow(k, x, 2 * n_max, policy)
        rows = []
        for _ in range(2 * n_max):
            flow.step()
            rows.append((flow.v.copy(), flow.defect, flow.mass_at(x)))
        idx = flow.nb.index
        for A in sets:
            cols = [idx[a] for a in A if a in idx]
            for n in range(1, n_max + 1):
                v, defect, _ = rows[n - 1]
                eps_n = float(v.sum() - v[cols].sum()) + defect
                out.append(_p2n_check(m, x, A, n, eps_n, rows[2 * n - 1][2]))
    return out


def small_subsets(states: Iterable[int], max_size: int) -> list[tuple[int, ...]]:
    states = list(states)
    return [c for r in range(1, max_size + 1) for c in itertools.combinations(states, r)]


@dataclass
class GreenCheck:
    eps: float
    lhs: float
    rhs: float
    status: str


def green_lower_bound(
    k: Kernel,
    m: ReversibilityMeasure,
    A: Iterable[int],
    x: int,
    z: float,
    N: int = DEFAULT_ORDER,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> GreenCheck:
    """``G(x,x|z) >= (1 - eps)^2 / (1 - z^2) * m(x)/m(A)``, eps the worst tail over ``n <= N``.

    The left side is the order-``N`` partial sum. A shortfall smaller than a
    geometric estimate of the neglected terms is reported as inconclusive.
    """
    m = _require_measure(m)
    if not 0.0 <= z < 1.0:
        raise DomainError("z must lie in [0, 1)")
    A = tuple(sorted({k.validate_state(a) for a in A}))
    x = k.validate_state(x)
    flow = MassFlow(k, x, N, policy)
    coeffs = [flow.mass_at(x)]
    eps = 0.0
    for _ in range(N):
        flow.step()
        coeffs.append(flow.mass_at(x))
        eps = max(eps, flow.alive() - flow.mass_on(A) + flow.defect)
    eps = min(eps, 1.0)
    lhs = series_eval(TruncatedSeries(coeffs), z)
    rhs = (1.0 - eps) ** 2 / (1.0 - z * z) * m[x] / m.mass(A)
    if lhs >= rhs - 1e-9:
        status = "pass"
    else:
        neglected = max(coeffs[-2:]) * z ** (N + 1) / (1.0 - z) if N >= 1 else math.inf
        status = "inconclusive" if neglected >= rhs - lhs else "fail"
    return GreenCheck(eps, lhs, rhs, status)


@dataclass
class ProportionalityReport:
    products: dict[int, float]
    ratio: float
    method: str
    passed: bool


def check_m_tau_proportionality(
    k: Kernel,
    m: ReversibilityMeasure,
    method: str = "kac",
    rtol: float = 1e-6,
    N: int = DEFAULT_ORDER,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> ProportionalityReport:
    """Check that ``m(x) * tau_x`` is constant over a finite reversible chain.

    ``method="kac"`` takes ``tau_x = 1/pi(x)`` from the stationary solver;
    ``method="series"`` uses the first-return series (slow-returning states
    may then fail to converge and make the check fail).
    """
    m = _require_measure(m)
    if not k.is_finite:
        raise DomainError("proportionality is checked on finite chains")
    if method == "kac":
        pi = stationary_measure_finite(k)
        taus = {x: 1.0 / pi[x] for x in k.states()}
        ok = True
    elif method == "series":
        taus, ok = {}, True
        for x in k.states():
            taus[x], conv = _mean_return_time(k, x, N, policy)
            ok &= conv
    else:
        raise DomainError(f"unknown method {method!r}")
    products = {x: m[x] * taus[x] for x in k.states()}
    ratio = max(products.values()) / min(products.values())
    return ProportionalityReport(products, ratio, method, ok and ratio <= 1.0 + rtol)
