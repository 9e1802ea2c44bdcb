"""Seeded trajectory simulation.

Random numbers come from numpy's ``Philox`` generator, a 64-bit
counter-based bit generator, keyed through ``SeedSequence``. Single paths use
``SeedSequence(seed)``. Ensembles of trials are cut into fixed blocks of
``BLOCK`` trials and block ``b`` uses ``SeedSequence([seed, b])``, so a result
depends only on ``(chain, start, seed, trials, cap)`` and not on how blocks
are scheduled. Each transition is drawn by inverse CDF over the row's own
entry order: the first entry whose cumulative weight exceeds ``u``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .chain import DEFAULT_POLICY, Kernel, TruncationPolicy, explore
from .errors import DomainError, MarkovError
from .tightness import TightnessCertificate

BLOCK = 4096
Z95 = 1.959963984540054


def generator(seed: int, *stream: int) -> np.random.Generator:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise DomainError(f"seed must be a non-negative integer, got {seed!r}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *stream])))


@dataclass
class Path:
    states: np.ndarray
    seed: int
    chain: str


@dataclass
class EstimateWithCI:
    mean: float
    half_width: float
    trials: int

    @property
    def sigma(self) -> float:
        return self.half_width / Z95

    def to_dict(self) -> dict:
        return {"mean": self.mean, "half_width": self.half_width, "trials": self.trials}


def _mean_ci(x: np.ndarray) -> EstimateWithCI:
    n = x.size
    if n == 0:
        return EstimateWithCI(math.nan, math.inf, 0)
    sd = float(x.std(ddof=1)) if n > 1 else 0.0
    return EstimateWithCI(float(x.mean()), Z95 * sd / math.sqrt(n), n)


class _RowTable:
    """Per-state cumulative rows for scalar sampling."""

    def __init__(self, k: Kernel):
        self.k = k
        self.cache: dict[int, tuple[list[int], list[float]]] = {}

    def step(self, x: int, u: float) -> int:
        entry = self.cache.get(x)
        if entry is None:
            row = self.k.row(x)
            targets = [y for y, _ in row]
            cum = list(np.cumsum([w for _, w in row]))
            cum[-1] = 1.0
            entry = self.cache[x] = (targets, cum)
        targets, cum = entry
        return targets[min(bisect.bisect_right(cum, u), len(targets) - 1)]


class _VectorSampler:
    """Steps many walkers at once on an explored region that grows on demand.

    Breadth-first indices are prefix stable, so deepening the region keeps the
    index of every walker valid.
    """

    def __init__(self, k: Kernel, start: int, policy: TruncationPolicy):
        self.k = k
        self.start = start
        self.policy = policy
        self.depth = 64
        self._build()

    def _build(self):
        nb = explore(self.k, self.start, self.depth, self.policy.max_states)
        order = np.argsort(nb.rows, kind="stable")
        rows, cols, w = nb.rows[order], nb.cols[order], nb.weights[order]
        counts = np.bincount(rows, minlength=nb.size)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        local = np.empty_like(w)
        for i in np.flatnonzero(counts):
            a, b = indptr[i], indptr[i + 1]
            c = np.cumsum(w[a:b])
            c[-1] = 1.0
            local[a:b] = c
        self.nb = nb
        self.cols = cols
        self.indptr = indptr
        self.cum = rows + local
        self.start_index = nb.index[self.start]

    def ensure(self, idx: np.ndarray) -> None:
        while not self.nb.expanded[idx].all():
            if self.nb.size >= self.policy.max_states or self.depth >= self.policy.max_states:
                raise MarkovError(f"walk left the region of {self.nb.size} explored states")
            self.depth *= 2
            self._build()

    def step(self, idx: np.ndarray, u: np.ndarray) -> np.ndarray:
        pos = np.searchsorted(self.cum, idx + u, side="right")
        pos = np.minimum(pos, self.indptr[idx + 1] - 1)
        return self.cols[pos]

    def indices(self, states: Iterable[int]) -> np.ndarray:
        return np.array(sorted({self.nb.index[s] for s in states if s in self.nb.index}), dtype=np.int64)


def simulate_path(k: Kernel, x0: int, steps: int, seed: int) -> Path:
    """Trajectory ``Z_0 = x0, ..., Z_steps``; identical inputs give identical paths."""
    if steps < 0:
        raise DomainError("steps must be >= 0")
    x = k.validate_state(x0)
    u = generator(seed).random(steps)
    table = _RowTable(k)
    out = np.empty(steps + 1, dtype=np.int64)
    out[0] = x
    for i in range(steps):
        x = table.step(x, u[i])
        out[i + 1] = x
    return Path(out, seed, k.name)


def occupation_fraction(
    k: Kernel, A: Iterable[int], x0: int, steps: int, seed: int, batches: int = 100
) -> EstimateWithCI:
    """Fraction of ``i = 1..steps`` with ``Z_i`` in ``A`` along one path.

    The interval uses batch means over ``batches`` contiguous blocks, which
    accounts for the correlation along the path.
    """
    if steps < 1:
        raise DomainError("steps must be >= 1")
    A = {k.validate_state(a) for a in A}
    path = simulate_path(k, x0, steps, seed)
    hits = np.isin(path.states[1:], list(A)).astype(float)
    nb = max(1, min(batches, steps))
    usable = steps - steps % nb
    means = hits[:usable].reshape(nb, -1).mean(axis=1)
    hw = Z95 * float(means.std(ddof=1)) / math.sqrt(nb) if nb > 1 else math.inf
    return EstimateWithCI(float(hits.mean()), hw, steps)


def _first_entrance(
    k: Kernel, target: Iterable[int], x0: int, trials: int, cap: int, seed: int, policy: TruncationPolicy
) -> np.ndarray:
    """Samples of ``inf{n > 0 : Z_n in target}``, censored samples set to ``cap + 1``."""
    if trials < 1 or cap < 1:
        raise DomainError("trials and cap must be >= 1")
    x0 = k.validate_state(x0)
    target = {k.validate_state(a) for a in target}
    sampler = _VectorSampler(k, x0, policy)
    out = np.empty(trials, dtype=np.int64)
    for b, lo in enumerate(range(0, trials, BLOCK)):
        n = min(BLOCK, trials - lo)
        gen = generator(seed, b)
        idx = np.full(n, sampler.start_index, dtype=np.int64)
        T = np.full(n, cap + 1, dtype=np.int64)
        active = np.arange(n)
        for t in range(1, cap + 1):
            if active.size == 0:
                break
            cur = idx[active]
            sampler.ensure(cur)
            cur = sampler.step(cur, gen.random(active.size))
            idx[active] = cur
            hit = np.isin(cur, sampler.indices(target))
            T[active[hit]] = t
            active = active[~hit]
        out[lo : lo + n] = T
    return out


@dataclass
class ReturnTimeEstimate:
    estimate: EstimateWithCI
    censored: int

    def to_dict(self) -> dict:
        return dict(self.estimate.to_dict(), censored=self.censored)


def estimate_return_time(
    k: Kernel, x: int, trials: int, cap: int, seed: int, policy: TruncationPolicy = DEFAULT_POLICY
) -> ReturnTimeEstimate:
    """Monte Carlo mean of ``T_x`` from ``x``, censored at ``cap``.

    The mean is over uncensored samples; with censoring it underestimates the
    mean return time, and ``censored`` says by how many samples.
    """
    T = _first_entrance(k, [x], x, trials, cap, seed, policy)
    ok = T <= cap
    return ReturnTimeEstimate(_mean_ci(T[ok].astype(float)), int((~ok).sum()))


@dataclass
class SurvivalCurve:
    """Empirical ``P(T_A >= n)`` for ``n = 1..cap``."""

    A: tuple[int, ...]
    source: int
    survival: np.ndarray
    sigma: np.ndarray
    samples: np.ndarray
    bound: np.ndarray | None = None
    passed: np.ndarray | None = None
    checks: list = field(default_factory=list)

    @property
    def trials(self) -> int:
        return self.samples.size

    def mean(self) -> EstimateWithCI:
        cap = self.survival.size
        return _mean_ci(self.samples[self.samples <= cap].astype(float))


def hitting_time_samples(
    k: Kernel,
    A: Iterable[int],
    x0: int,
    trials: int,
    cap: int,
    seed: int,
    cert: TightnessCertificate | None = None,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> SurvivalCurve:
    """Empirical survival curve of the entrance time into ``A``.

    With a certificate ``(A, eps)``, each point is checked against
    ``eps^(n-1) + 3 sigma``, sigma the binomial deviation at the bound.
    """
    A = tuple(sorted({k.validate_state(a) for a in A}))
    if not A:
        raise DomainError("A must be non-empty")
    T = _first_entrance(k, A, x0, trials, cap, seed, policy)
    n = np.arange(1, cap + 1)
    surv = (T[None, :] >= n[:, None]).mean(axis=1)
    sigma = np.sqrt(surv * (1.0 - surv) / trials)
    curve = SurvivalCurve(A, int(x0), surv, sigma, T)
    if cert is not None:
        if set(cert.A) != set(A):
            raise DomainError("certificate is for a different set")
        b = cert.epsilon ** (n - 1.0)
        curve.bound = b
        curve.passed = surv <= b + 3.0 * np.sqrt(b * (1.0 - b) / trials)
    return curve
