"""First-passage probabilities and the generating functions G and F.

``f^(n)(x, y)`` is computed by forward taboo recursion: a point mass at ``x``
is pushed through the chain with ``y`` absorbing, and the mass absorbed at
step ``n`` is ``f^(n)``. The identity ``G(x,y|z) = delta + F(x,y|z) G(y,y|z)``
is kept as an independent route (:func:`f_series_from_g`) and used as a check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .chain import DEFAULT_POLICY, Kernel, MassFlow, TruncationPolicy, explore
from .errors import DomainError
from .series import TruncatedSeries, series_div


@dataclass
class FirstReturnTable:
    """``f[n-1] = f^(n)(source, target)`` for ``n = 1..N``.

    ``defect`` is the truncation defect accumulated by step N; when it is
    positive every entry, and every partial sum, is a lower bound.
    """

    source: int
    target: int
    f: np.ndarray
    defect: float = 0.0

    @property
    def order(self) -> int:
        return self.f.size

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.f)

    @property
    def total(self) -> float:
        return math.fsum(self.f)

    def as_series(self) -> TruncatedSeries:
        """``F(source, target | z)`` with ``f^(0) = 0``."""
        return TruncatedSeries(np.concatenate([[0.0], self.f]))

    def moment(self) -> float:
        """Partial mean ``sum_n n f^(n)``."""
        return math.fsum(np.arange(1, self.order + 1) * self.f)


def first_return_probs(
    k: Kernel, x: int, y: int, N: int, policy: TruncationPolicy = DEFAULT_POLICY
) -> FirstReturnTable:
    """First-passage probabilities ``f^(1..N)(x, y)`` (first return when ``x == y``)."""
    if N < 1:
        raise DomainError("N must be >= 1")
    x, y = k.validate_state(x), k.validate_state(y)
    flow = MassFlow(k, x, N, policy, taboo=(y,))
    f = np.array([flow.step() for _ in range(N)])
    return FirstReturnTable(x, y, f, flow.defect)


def green_series(
    k: Kernel, x: int, y: int, N: int, policy: TruncationPolicy = DEFAULT_POLICY
) -> TruncatedSeries:
    """``G(x, y | z)`` to order ``N``: coefficient n is ``p^(n)(x, y)``."""
    if N < 0:
        raise DomainError("N must be >= 0")
    x, y = k.validate_state(x), k.validate_state(y)
    flow = MassFlow(k, x, N, policy)
    c = [flow.mass_at(y)]
    for _ in range(N):
        flow.step()
        c.append(flow.mass_at(y))
    return TruncatedSeries(c)


def f_series_from_g(Gxy: TruncatedSeries, Gyy: TruncatedSeries, x_equals_y: bool) -> TruncatedSeries:
    """``F(x, y | z) = (G(x, y | z) - delta_xy) / G(y, y | z)``."""
    if abs(Gyy[0] - 1.0) > 1e-12:
        raise DomainError("G(y, y | z) must start with coefficient 1")
    num = TruncatedSeries(Gxy.coeffs.copy())
    if x_equals_y:
        num.coeffs[0] -= 1.0
    return series_div(num, Gyy)


def closed_form_F00(p: float, z: float) -> float:
    """Generating function of first returns to 0 for ``paper_bd(p)``:
    ``2 p z^2 / (1 + sqrt(1 - 4 z^2 p (1 - p)))``."""
    if not 0.0 < p < 1.0:
        raise DomainError("p must lie in (0, 1)")
    if not 0.0 <= z <= 1.0:
        raise DomainError("z must lie in [0, 1]")
    disc = max(1.0 - 4.0 * z * z * p * (1.0 - p), 0.0)
    return 2.0 * p * z * z / (1.0 + math.sqrt(disc))


def green_resolvent(
    k: Kernel, x: int, y: int, z: float, policy: TruncationPolicy = DEFAULT_POLICY, radius: int = 512
) -> float:
    """``G(x, y | z)`` for ``0 <= z < 1`` from the resolvent ``(I - zP)^{-1}``.

    Unlike :func:`green_series` this is not truncated in time, so it stays
    accurate as ``z -> 1``. Infinite chains are cut to the region within graph
    distance ``radius`` of ``x``; mass leaving it is lost, which gives a lower
    bound.
    """
    if not 0.0 <= z < 1.0:
        raise DomainError("the resolvent needs 0 <= z < 1")
    x, y = k.validate_state(x), k.validate_state(y)
    nb = explore(k, x, radius, policy.max_states)
    j = nb.index.get(y)
    if j is None:
        return 0.0
    n = nb.size
    # solve (I - z P^T) u = e_x, then G(x, y) = u_y
    A = sparse.identity(n, format="csr") - z * sparse.csr_matrix((nb.weights, (nb.cols, nb.rows)), shape=(n, n))
    rhs = np.zeros(n)
    rhs[nb.index[x]] = 1.0
    if n <= 512:
        u = np.linalg.solve(A.toarray(), rhs)
    else:
        u = spsolve(A.tocsc(), rhs)
    return float(u[j])
