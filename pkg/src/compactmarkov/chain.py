"""Countable-state Markov kernels, the Markov operator and distribution evolution.

States are non-negative integers. A :class:`Kernel` is a pure row oracle,
``row(x)`` returns the outgoing distribution of ``x`` as a tuple of
``(state, weight)`` pairs with strictly positive weights. Infinite chains are
explored lazily, breadth first from a start state, inside a
:class:`Neighborhood`; probability mass that leaves the explored region (or
falls below a :class:`TruncationPolicy` floor) is moved into an explicit
``defect`` so that every quantity computed from it is a one-sided bound.
"""

from __future__ import annotations

import functools
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import ChainSpecError, DomainError

Row = tuple[tuple[int, float], ...]

STOCHASTIC_TOL = 1e-9
# below this many states the explored block is stored densely
DENSE_LIMIT = 256

CHAIN_TYPES = ("finite", "paper_bd", "birth_death", "funnel", "swap", "lazy")


@dataclass(frozen=True)
class TruncationPolicy:
    """How far infinite chains are explored.

    Parameters
    ----------
    max_states : int
        Cap on the number of distinct states held in an explored region.
    mass_floor : float
        Entries of an evolving distribution smaller than this are swept into
        the truncation defect after every step. ``0`` disables sweeping.
    """

    max_states: int = 10_000
    mass_floor: float = 0.0

    def __post_init__(self):
        if self.max_states < 1:
            raise DomainError("max_states must be >= 1")
        if not 0.0 <= self.mass_floor <= 1e-3:
            raise DomainError("mass_floor must lie in [0, 1e-3]")


DEFAULT_POLICY = TruncationPolicy()


@dataclass
class MassVector:
    """Sparse sub-probability distribution with an explicit truncation defect."""

    entries: dict[int, float] = field(default_factory=dict)
    defect: float = 0.0

    @classmethod
    def delta(cls, x: int) -> MassVector:
        return cls({x: 1.0}, 0.0)

    def __getitem__(self, x: int) -> float:
        return self.entries.get(x, 0.0)

    def mass(self) -> float:
        return math.fsum(self.entries.values())

    def total(self) -> float:
        return self.mass() + self.defect

    def mass_on(self, states: Iterable[int]) -> float:
        return math.fsum(self.entries.get(s, 0.0) for s in states)


@dataclass
class BoundedFunction:
    """A function in l^inf: listed values plus a default for every other state."""

    values: dict[int, float] = field(default_factory=dict)
    default: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in [self.default, *self.values.values()]):
            raise DomainError("bounded functions must take finite values")

    @classmethod
    def indicator(cls, states: Iterable[int]) -> BoundedFunction:
        return cls({s: 1.0 for s in states}, 0.0)

    def __call__(self, x: int) -> float:
        return self.values.get(x, self.default)

    def sup_norm(self) -> float:
        return max([abs(self.default), *(abs(v) for v in self.values.values())])


class Kernel:
    """Transition kernel given by a row oracle.

    Parameters
    ----------
    row_fn : callable
        ``row_fn(x)`` returns the outgoing distribution of state ``x``.
        It must be pure; results are cached.
    state_count : int or None
        Number of states for a finite chain (states ``0..state_count-1``),
        ``None`` for an unbounded chain on the naturals.
    name : str
        Human readable family name with parameters.
    spec : dict, optional
        JSON description the kernel was built from (kept for reports).
    noncompact_floor : float, optional
        Certified lower bound on ``sup_x sum_{y not in A} p(x,y)`` valid for
        every finite ``A``. Families whose rows escape any finite set provide it.
    """

    def __init__(
        self,
        row_fn: Callable[[int], Row],
        state_count: int | None = None,
        name: str = "chain",
        spec: Mapping | None = None,
        noncompact_floor: float | None = None,
    ):
        self.state_count = state_count
        self.name = name
        self.spec = dict(spec) if spec is not None else None
        self.noncompact_floor = noncompact_floor
        self._row_fn = row_fn
        self._row_cached = functools.lru_cache(maxsize=1 << 16)(self._checked_row)

    def __repr__(self):
        return f"Kernel({self.name})"

    @property
    def is_finite(self) -> bool:
        return self.state_count is not None

    def validate_state(self, x) -> int:
        if isinstance(x, bool) or not isinstance(x, (int, np.integer)):
            raise DomainError(f"state ids are integers, got {x!r}")
        x = int(x)
        if x < 0 or (self.state_count is not None and x >= self.state_count):
            raise DomainError(f"state {x} is not a state of {self.name}")
        return x

    def _checked_row(self, x: int) -> Row:
        row = tuple((int(y), float(w)) for y, w in self._row_fn(x))
        total = math.fsum(w for _, w in row)
        if abs(total - 1.0) > STOCHASTIC_TOL:
            raise ChainSpecError(f"row({x})", f"weights sum to {total!r}, not 1")
        return row

    def row(self, x: int) -> Row:
        return self._row_cached(self.validate_state(x))

    def states(self, limit: int | None = None) -> range:
        """Enumerate states in canonical order, at most ``limit`` of them."""
        if self.state_count is None:
            if limit is None:
                raise DomainError("an unbounded chain needs an enumeration limit")
            return range(limit)
        return range(self.state_count if limit is None else min(limit, self.state_count))

    @functools.cached_property
    def dense(self) -> np.ndarray:
        """Full transition matrix of a finite chain."""
        if not self.is_finite:
            raise DomainError(f"{self.name} has no finite transition matrix")
        P = np.zeros((self.state_count, self.state_count))
        for x in range(self.state_count):
            for y, w in self.row(x):
                P[x, y] += w
        return P

    @functools.cached_property
    def _full_neighborhood(self) -> Neighborhood:
        states = list(range(self.state_count))
        rows, cols, vals = [], [], []
        for x in states:
            for y, w in self.row(x):
                rows.append(x)
                cols.append(y)
                vals.append(w)
        n = self.state_count
        return Neighborhood(
            states=states,
            index={s: s for s in states},
            depth=np.zeros(n, dtype=int),
            expanded=np.ones(n, dtype=bool),
            leak=np.zeros(n),
            rows=np.asarray(rows, dtype=np.int64),
            cols=np.asarray(cols, dtype=np.int64),
            weights=np.asarray(vals, dtype=float),
        )


def is_irreducible(k: Kernel) -> bool:
    if not k.is_finite:
        raise DomainError("irreducibility is only decided for finite chains")
    n_comp, _ = connected_components(sparse.csr_matrix(k.dense > 0), directed=True, connection="strong")
    return n_comp == 1


@dataclass
class Neighborhood:
    """A finite explored region of a chain, indexed in breadth-first order.

    ``rows/cols/weights`` hold the transitions between explored states (in each
    row's own entry order). ``leak[i]`` is the part of row ``i`` that is not
    represented: mass to states beyond the cap, or the whole row for frontier
    states whose rows were never read. Breadth-first order is prefix stable, so
    re-exploring deeper keeps every existing index.
    """

    states: list[int]
    index: dict[int, int]
    depth: np.ndarray
    expanded: np.ndarray
    leak: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def complete(self) -> bool:
        return bool(self.expanded.all())

    @functools.cached_property
    def _push_op(self):
        n = self.size
        if n <= DENSE_LIMIT:
            P = np.zeros((n, n))
            np.add.at(P, (self.rows, self.cols), self.weights)
            return P.T.copy()
        return sparse.csr_matrix((self.weights, (self.cols, self.rows)), shape=(n, n))

    def push(self, v: np.ndarray) -> np.ndarray:
        """One step of ``v -> vP`` inside the region (leaked mass is dropped)."""
        return self._push_op @ v


def explore(k: Kernel, start: int, depth: int, max_states: int) -> Neighborhood:
    """Breadth-first exploration from ``start`` up to graph distance ``depth``.

    Finite chains small enough for ``max_states`` are returned whole.
    """
    start = k.validate_state(start)
    if k.is_finite and k.state_count <= max_states:
        return k._full_neighborhood

    states = [start]
    index = {start: 0}
    depths = [0]
    leak: list[float] = []
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    head = 0
    while head < len(states):
        d = depths[head]
        if d >= depth:
            leak.append(1.0)
            head += 1
            continue
        lost = 0.0
        for y, w in k.row(states[head]):
            j = index.get(y)
            if j is None:
                if len(states) >= max_states:
                    lost += w
                    continue
                j = len(states)
                index[y] = j
                states.append(y)
                depths.append(d + 1)
            rows.append(head)
            cols.append(j)
            vals.append(w)
        leak.append(lost)
        head += 1
    leak_arr = np.asarray(leak)
    depth_arr = np.asarray(depths, dtype=int)
    return Neighborhood(
        states=states,
        index=index,
        depth=depth_arr,
        expanded=(depth_arr < depth) & (leak_arr == 0.0),
        leak=leak_arr,
        rows=np.asarray(rows, dtype=np.int64),
        cols=np.asarray(cols, dtype=np.int64),
        weights=np.asarray(vals, dtype=float),
    )


class MassFlow:
    """Forward evolution ``nu -> nu P`` of a point mass on an explored region.

    States listed in ``taboo`` are absorbing: after each step the mass that
    arrived there is recorded and removed. This single engine gives n-step
    probabilities (no taboo), first-passage probabilities (``taboo={y}``) and
    hitting-time distributions (``taboo=A``).
    """

    def __init__(
        self,
        k: Kernel,
        start: int,
        horizon: int,
        policy: TruncationPolicy = DEFAULT_POLICY,
        taboo: Iterable[int] = (),
    ):
        self.kernel = k
        self.nb = explore(k, start, horizon, policy.max_states)
        self.floor = policy.mass_floor
        self.v = np.zeros(self.nb.size)
        self.v[self.nb.index[start]] = 1.0
        self.defect = 0.0
        self.steps = 0
        self._taboo = np.asarray(sorted({self.nb.index[s] for s in taboo if s in self.nb.index}), dtype=np.int64)

    def step(self) -> float:
        """Advance one step; return the mass absorbed by taboo states."""
        v = self.v
        self.defect += float(v @ self.nb.leak)
        v = self.nb.push(v)
        absorbed = 0.0
        if self._taboo.size:
            absorbed = float(v[self._taboo].sum())
            v[self._taboo] = 0.0
        if self.floor > 0.0:
            small = (v > 0.0) & (v < self.floor)
            if small.any():
                self.defect += float(v[small].sum())
                v[small] = 0.0
        self.v = v
        self.steps += 1
        return absorbed

    def mass_at(self, x: int) -> float:
        i = self.nb.index.get(x)
        return 0.0 if i is None else float(self.v[i])

    def mass_on(self, states: Iterable[int]) -> float:
        return math.fsum(self.mass_at(s) for s in states)

    def alive(self) -> float:
        return float(self.v.sum())

    def to_mass_vector(self) -> MassVector:
        nz = np.flatnonzero(self.v)
        return MassVector({self.nb.states[i]: float(self.v[i]) for i in nz}, self.defect)


def apply_operator(k: Kernel, f: BoundedFunction, x: int) -> float:
    """``(Pf)(x) = sum_y p(x, y) f(y)``."""
    return math.fsum(w * f(y) for y, w in k.row(x))


def evolve_distribution(k: Kernel, nu: MassVector, policy: TruncationPolicy = DEFAULT_POLICY) -> MassVector:
    """Push a distribution one step forward, ``nu -> nu P``.

    Total mass (entries plus defect) is preserved; mass swept by the policy
    only moves from the entries into the defect.
    """
    out: dict[int, float] = defaultdict(float)
    for x, m in nu.entries.items():
        for y, w in k.row(x):
            out[y] += m * w
    defect = nu.defect
    if policy.mass_floor > 0.0:
        for y in [y for y, m in out.items() if m < policy.mass_floor]:
            defect += out.pop(y)
    if len(out) > policy.max_states:
        keep = sorted(out, key=lambda y: (-out[y], y))[: policy.max_states]
        dropped = set(out) - set(keep)
        defect += math.fsum(out[y] for y in dropped)
        out = {y: out[y] for y in keep}
    return MassVector({y: m for y, m in sorted(out.items()) if m > 0.0}, defect)


def n_step(k: Kernel, x: int, n: int, policy: TruncationPolicy = DEFAULT_POLICY) -> MassVector:
    """Row ``p^(n)(x, .)``; entries are exact when the returned defect is 0."""
    if n < 0:
        raise DomainError("n must be non-negative")
    flow = MassFlow(k, k.validate_state(x), n, policy)
    for _ in range(n):
        flow.step()
    return flow.to_mass_vector()


# ---------------------------------------------------------------------------
# chain families


def _finite_kernel(rows: list[list[float]], name: str, spec: Mapping) -> Kernel:
    table: list[Row] = []
    for i, r in enumerate(rows):
        total = math.fsum(r)
        # renormalize inside the tolerance so evolution conserves mass to rounding
        table.append(tuple((j, w / total) for j, w in enumerate(r) if w > 0.0))
    return Kernel(table.__getitem__, len(table), name, spec)


def finite(rows) -> Kernel:
    return make_chain({"type": "finite", "rows": rows})


def swap() -> Kernel:
    return make_chain({"type": "swap"})


def lazy(a: float) -> Kernel:
    return make_chain({"type": "lazy", "p": a})


def paper_bd(p: float) -> Kernel:
    return make_chain({"type": "paper_bd", "p": p})


def funnel(eps: float, M: int = 50) -> Kernel:
    return make_chain({"type": "funnel", "eps": eps, "M": M})


def birth_death(up, down) -> Kernel:
    return make_chain({"type": "birth_death", "up": list(up), "down": list(down)})


def paper_bd_truncated(p: float, n_states: int) -> Kernel:
    """The reflecting birth-death chain of ``paper_bd(p)`` cut to ``n_states`` states.

    The top state keeps its downward probability and holds the rest.
    """
    up = [1.0] + [1.0 - p] * (n_states - 2) + [0.0]
    down = [0.0] + [p] * (n_states - 1)
    return birth_death(up, down)


def _number(spec: Mapping, key: str) -> float:
    if key not in spec:
        raise ChainSpecError(key, "missing")
    v = spec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ChainSpecError(key, f"expected a finite number, got {v!r}")
    return float(v)


def _open_unit(spec: Mapping, key: str) -> float:
    v = _number(spec, key)
    if not 0.0 < v < 1.0:
        raise ChainSpecError(key, f"must lie in (0, 1), got {v!r}")
    return v


def _prob_array(spec: Mapping, key: str) -> list[float]:
    arr = spec.get(key)
    if not isinstance(arr, list) or not arr:
        raise ChainSpecError(key, "expected a non-empty array of numbers")
    out = []
    for i, v in enumerate(arr):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
            raise ChainSpecError(f"{key}[{i}]", f"expected a probability, got {v!r}")
        out.append(float(v))
    return out


def make_chain(spec: Mapping) -> Kernel:
    """Build a kernel from its JSON description (see README for the schema)."""
    if not isinstance(spec, Mapping):
        raise ChainSpecError("<document>", "chain spec must be a JSON object")
    kind = spec.get("type")
    if kind not in CHAIN_TYPES:
        raise ChainSpecError("type", f"expected one of {', '.join(CHAIN_TYPES)}, got {kind!r}")
    spec = dict(spec)

    if kind == "finite":
        rows = spec.get("rows")
        if not isinstance(rows, list) or not rows:
            raise ChainSpecError("rows", "expected a non-empty array of arrays")
        n = len(rows)
        clean = []
        for i, r in enumerate(rows):
            if not isinstance(r, list) or len(r) != n:
                raise ChainSpecError(f"rows[{i}]", f"expected an array of {n} numbers")
            vals = []
            for j, w in enumerate(r):
                if isinstance(w, bool) or not isinstance(w, (int, float)) or not math.isfinite(w) or w < 0:
                    raise ChainSpecError(f"rows[{i}][{j}]", f"expected a non-negative number, got {w!r}")
                vals.append(float(w))
            s = math.fsum(vals)
            if abs(s - 1.0) > STOCHASTIC_TOL:
                raise ChainSpecError(f"rows[{i}]", f"row sums to {s!r}, not 1")
            clean.append(vals)
        return _finite_kernel(clean, f"finite({n})", spec)

    if kind == "swap":
        return _finite_kernel([[0.0, 1.0], [1.0, 0.0]], "swap", spec)

    if kind == "lazy":
        a = _open_unit(spec, "p")
        return _finite_kernel([[a, 1.0 - a], [1.0 - a, a]], f"lazy(p={a:g})", spec)

    if kind == "funnel":
        eps = _open_unit(spec, "eps")
        M = spec.get("M", 50)
        if isinstance(M, bool) or not isinstance(M, int) or M < 1:
            raise ChainSpecError("M", f"expected an integer >= 1, got {M!r}")
        # entry order: the reset to 0 first, then the forward move (M holds)
        table = [((0, 1.0 - eps), (min(x + 1, M), eps)) for x in range(M + 1)]
        return Kernel(table.__getitem__, M + 1, f"funnel(eps={eps:g}, M={M})", spec)

    if kind == "birth_death":
        up = _prob_array(spec, "up")
        down = _prob_array(spec, "down")
        if len(up) != len(down):
            raise ChainSpecError("down", f"length {len(down)} differs from up ({len(up)})")
        n = len(up)
        if down[0] != 0.0:
            raise ChainSpecError("down[0]", "state 0 cannot move down")
        if up[-1] != 0.0:
            raise ChainSpecError(f"up[{n - 1}]", "the top state cannot move up")
        rows = []
        for x in range(n):
            hold = 1.0 - up[x] - down[x]
            if hold < -STOCHASTIC_TOL:
                raise ChainSpecError(f"up[{x}]", "up + down exceeds 1")
            r = [0.0] * n
            if x > 0:
                r[x - 1] = down[x]
            r[x] = max(hold, 0.0)
            if x < n - 1:
                r[x + 1] = up[x]
            rows.append(r)
        return _finite_kernel(rows, f"birth_death({n})", spec)

    # paper_bd: reflecting walk on the naturals, p(0,1)=1, p(n,n-1)=p, p(n,n+1)=1-p
    p = _open_unit(spec, "p")

    def bd_row(x: int) -> Row:
        if x == 0:
            return ((1, 1.0),)
        return ((x - 1, p), (x + 1, 1.0 - p))

    return Kernel(bd_row, None, f"paper_bd(p={p:g})", spec, noncompact_floor=1.0)


def load_chain(path) -> Kernel:
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ChainSpecError("<document>", f"invalid JSON ({exc})") from exc
    return make_chain(spec)
