"""CES demand, the detailed-balance fixed-point solver, and residual diagnostics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.special import logsumexp

from .errors import EquilibriumError
from .market import Market, Potentials, _frozen, potentials as compute_potentials


#: Cap on extra iterations spent polishing a converged solution.
POLISH_MAX_ITER = 200


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Equilibrium:
    """Equilibrium prices ``r`` (geometric mean 1) and ``R_i = sum_k C_ik / r_k**delta``."""

    r: NDArray
    R: NDArray
    clearing_residual: float
    balance_residual: float
    iterations: int
    converged: bool = True
    tol: float = 1e-12

    def to_dict(self) -> dict:
        return {
            "r": self.r.tolist(),
            "R": self.R.tolist(),
            "clearing_residual": self.clearing_residual,
            "balance_residual": self.balance_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "tol": self.tol,
        }


def _check_prices(m: Market, p: NDArray, operation: str) -> NDArray:
    p = np.asarray(p, dtype=float)
    if p.shape != (m.n,):
        raise EquilibriumError(f"price vector must have shape ({m.n},), got {p.shape}",
                               operation=operation)
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        k = int(np.flatnonzero(~(np.isfinite(p) & (p > 0)))[0])
        raise EquilibriumError(f"prices must be finite and positive; p[{k}] = {p[k]!r}",
                               operation=operation, witness=[k])
    return p


def price_index(m: Market, p: NDArray) -> NDArray:
    """``P_i(p) = sum_k C_ik / p_k**delta``."""
    return m.C @ p ** (-m.delta)


def demand(m: Market, p: NDArray) -> NDArray:
    """Matrix of CES demands ``d[i, j]`` of participant ``i`` for good ``j`` at prices ``p``.

    Each participant spends exactly its income ``p_i``:
    ``sum_j d[i, j] * p[j] == p[i]``.
    """
    p = _check_prices(m, p, "demand")
    P = price_index(m, p)
    return (p / P)[:, None] * m.C * p[None, :] ** (-(1.0 + m.delta))


def total_demand(m: Market, p: NDArray) -> NDArray:
    """Column sums of :func:`demand`; the market clears iff this is all ones."""
    p = _check_prices(m, p, "total_demand")
    return ((p / price_index(m, p)) @ m.C) * p ** (-(1.0 + m.delta))


def excess_demand(m: Market, p: NDArray) -> NDArray:
    """``d_j(p) - 1``; the right-hand side of proportional tatonnement."""
    return total_demand(m, p) - 1.0


def detailed_balance_residual(m: Market, r: NDArray) -> float:
    """Largest relative mismatch between payments ``i -> j`` and ``j -> i`` over edges."""
    r = _check_prices(m, r, "detailed_balance_residual")
    pay = demand(m, r) * r[None, :]
    i, j = np.nonzero(np.triu(m.C > 0, k=1))
    if i.size == 0:
        return 0.0
    a, b = pay[i, j], pay[j, i]
    return float(np.max(np.abs(a - b) / np.maximum(a, b)))


def clearing_residual(m: Market, r: NDArray) -> float:
    return float(np.max(np.abs(excess_demand(m, r))))


def default_max_iter(delta: float, tol: float) -> int:
    # the log-coordinate map contracts the oscillation seminorm by delta/(1+delta)
    per_digit = math.log((1.0 + delta) / delta)
    return max(10_000, 10 * math.ceil(math.log(1.0 / tol) / per_digit))


def random_start(pot: Potentials, n: int, rng: np.random.Generator) -> NDArray:
    """Random price vector in ``K = {p : |p| = 1, max(p)/min(p) <= gamma * psi_tilde}``."""
    x = rng.uniform(-1.0, 1.0, size=n)
    span = x.max() - x.min()
    limit = math.log(pot.gamma * pot.psi_tilde)
    if span > 0:
        x *= rng.uniform(0.0, 1.0) * limit / span
    x -= x.mean()
    return np.exp(x)


def solve_equilibrium(
    m: Market,
    pot: Potentials | None = None,
    tol: float = 1e-12,
    max_iter: int | None = None,
    p0: NDArray | None = None,
    polish: bool = True,
) -> Equilibrium:
    """Detailed-balance equilibrium by fixed-point iteration.

    Iterates ``x_j <- (log psi_j + log P_j(exp(x))) / (1 + delta)`` on
    log-prices, re-centred to geometric mean 1, until the sup-norm step is
    at most ``tol``.  A fixed point satisfies detailed balance and therefore
    clears the market.  On hitting ``max_iter`` a :class:`ConvergenceWarning`
    is issued and the last iterate is returned with ``converged=False``.

    With ``polish`` (the default) iteration continues after reaching ``tol``
    for as long as the step keeps shrinking, which drives the residuals to
    the rounding floor.
    """
    if not tol > 0:
        raise EquilibriumError("tol must be positive", operation="solve_equilibrium")
    if pot is None:
        pot = compute_potentials(m)
    delta = m.delta
    if max_iter is None:
        max_iter = default_max_iter(delta, tol)

    logC = np.full(m.C.shape, -np.inf)
    np.log(m.C, out=logC, where=m.C > 0)
    logpsi = np.log(pot.psi)

    x = np.zeros(m.n) if p0 is None else np.log(_check_prices(m, p0, "solve_equilibrium"))
    x = x - x.mean()

    def update(x: NDArray) -> tuple[NDArray, float]:
        logP = logsumexp(logC - delta * x[None, :], axis=1)
        x_new = (logpsi + logP) / (1.0 + delta)
        x_new -= x_new.mean()
        return x_new, float(np.max(np.abs(x_new - x)))

    converged = False
    it = 0
    step = np.inf
    for it in range(1, max_iter + 1):
        x, step = update(x)
        if step <= tol:
            converged = True
            break
    if converged and polish:
        # keep contracting down to the rounding floor; stop once the step stalls
        for _ in range(POLISH_MAX_ITER):
            if step == 0.0:
                break
            x_new, step_new = update(x)
            if step_new >= step:
                break
            x, step = x_new, step_new
            it += 1

    r = np.exp(x - x.mean())
    R = price_index(m, r)
    eq = Equilibrium(
        r=_frozen(r),
        R=_frozen(R),
        clearing_residual=clearing_residual(m, r),
        balance_residual=detailed_balance_residual(m, r),
        iterations=it,
        converged=converged,
        tol=tol,
    )
    if not converged:
        warnings.warn(
            f"fixed-point iteration did not reach tol={tol:g} in {max_iter} iterations "
            f"(clearing residual {eq.clearing_residual:.3g}, balance residual {eq.balance_residual:.3g})",
            ConvergenceWarning,
            stacklevel=2,
        )
    return eq


def equilibrium_from_prices(m: Market, r: NDArray, tol: float = 1e-12) -> Equilibrium:
    """Wrap externally supplied prices (any positive scaling) as an Equilibrium record."""
    r = _check_prices(m, r, "equilibrium_from_prices")
    return Equilibrium(
        r=_frozen(r),
        R=_frozen(price_index(m, r)),
        clearing_residual=clearing_residual(m, r),
        balance_residual=detailed_balance_residual(m, r),
        iterations=0,
        converged=True,
        tol=tol,
    )
