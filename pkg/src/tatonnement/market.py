"""Market data model: CES coefficients, structural checks, node potentials.

A market on ``n`` participants is the matrix ``C`` of CES coefficients (already
raised to the power ``delta`` and with unit supplies) together with the
elasticity parameter ``delta = rho / (1 - rho)``.  Participant ``i`` wants good
``j`` iff ``C[i, j] > 0``; the undirected graph of these relations is the
market graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import MarketError

#: Tolerance on log cycle products for the circulation-free condition.
CIRCULATION_TOL = 1e-9
#: Tolerance on row minima for the normalization condition.
NORMALIZATION_TOL = 1e-12


def _frozen(a: NDArray) -> NDArray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Market:
    """CES market ``C`` with elasticity parameter ``delta``.

    The constructor only coerces types; use :func:`normalize_market` or
    :func:`market_from_coefficients` to obtain a checked, normalized market.
    """

    C: NDArray
    delta: float

    def __post_init__(self) -> None:
        C = np.asarray(self.C, dtype=float)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise MarketError(f"C must be square, got shape {C.shape}", operation="Market")
        if C.shape[0] < 2:
            raise MarketError("a market needs at least 2 participants", operation="Market")
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def n(self) -> int:
        return self.C.shape[0]

    @property
    def support(self) -> NDArray:
        """Boolean adjacency ``U`` of the market graph (self-loops included)."""
        return self.C > 0

    def edges(self) -> list[tuple[int, int]]:
        """Undirected edges ``i <= j`` with ``C[i, j] > 0``."""
        i, j = np.nonzero(np.triu(self.C > 0))
        return list(zip(i.tolist(), j.tolist()))


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    message: str = ""
    witness: Any = None


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def first_failure(self) -> Check | None:
        for c in self.checks:
            if not c.passed:
                return c
        return None

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "message": c.message, "witness": c.witness}
                for c in self.checks
            ],
        }


@dataclass(frozen=True)
class Potentials:
    """Node potentials ``psi`` with ``psi[i] C[i, j] == psi[j] C[j, i]`` on every edge.

    ``psi`` is scaled so that its minimum, attained at ``base_vertex``, is 1.
    ``psi_tilde`` is the global price-disparity measure ``max(psi)``;
    ``gamma`` the local diversity measure ``max_i sum_j C[i, j]``.
    """

    psi: NDArray
    psi_tilde: float
    gamma: float
    base_vertex: int


# -- spanning-tree machinery ------------------------------------------------


def _undirected_offdiag(C: NDArray) -> NDArray:
    A = (C > 0) | (C.T > 0)
    np.fill_diagonal(A, False)
    return A


def _tree(C: NDArray, root: int = 0) -> tuple[NDArray, NDArray]:
    """BFS order and predecessor array of a spanning tree of the market graph."""
    order, pred = breadth_first_order(
        _undirected_offdiag(C).astype(float), root, directed=False, return_predecessors=True
    )
    return order, pred


def _path_to_root(pred: NDArray, v: int) -> list[int]:
    path = [v]
    while pred[path[-1]] >= 0:
        path.append(int(pred[path[-1]]))
    return path


def _tree_log_potentials(C: NDArray) -> tuple[NDArray, NDArray]:
    """Log path products from vertex 0 along a BFS tree; requires weak undirectedness."""
    order, pred = _tree(C)
    logC = np.full(C.shape, -np.inf)
    np.log(C, out=logC, where=C > 0)
    logpsi = np.zeros(C.shape[0])
    for v in order[1:]:
        u = pred[v]
        logpsi[v] = logpsi[u] + logC[u, v] - logC[v, u]
    return logpsi, pred


def _fundamental_cycle(pred: NDArray, i: int, j: int) -> list[int]:
    """Closed walk lca -> ... -> i -> j -> ... -> lca through the non-tree edge (i, j)."""
    pi = _path_to_root(pred, i)[::-1]  # root ... i
    pj = _path_to_root(pred, j)[::-1]  # root ... j
    k = 0
    while k < min(len(pi), len(pj)) and pi[k] == pj[k]:
        k += 1
    lca = pi[k - 1]
    return [lca] + pi[k:] + pj[k:][::-1] + [lca]


def _circulation_violations(C: NDArray) -> tuple[NDArray, list[dict]]:
    logpsi, pred = _tree_log_potentials(C)
    bad = []
    n = C.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if C[i, j] <= 0 or pred[j] == i or pred[i] == j:
                continue
            mismatch = logpsi[i] + np.log(C[i, j]) - logpsi[j] - np.log(C[j, i])
            if abs(mismatch) > CIRCULATION_TOL:
                cycle = _fundamental_cycle(pred, i, j)
                fwd = float(np.prod([C[a, b] for a, b in zip(cycle, cycle[1:])]))
                bwd = float(np.prod([C[b, a] for a, b in zip(cycle, cycle[1:])]))
                bad.append(
                    {
                        "edge": [i, j],
                        "cycle": cycle,
                        "forward_product": fwd,
                        "backward_product": bwd,
                        "log_mismatch": float(mismatch),
                    }
                )
    return logpsi, bad


# -- operations -------------------------------------------------------------


def validate(m: Market) -> ValidationReport:
    """Check conditions (a) nonnegativity, weak undirectedness, (b) connectedness,
    (c) circulation-freeness and row normalization. Never raises."""
    C = np.asarray(m.C)
    checks: list[Check] = []

    neg = np.argwhere(C < 0)
    if not np.all(np.isfinite(C)):
        checks.append(Check("nonnegativity", False, "non-finite coefficient",
                            np.argwhere(~np.isfinite(C))[0].tolist()))
    elif len(neg):
        i, j = neg[0].tolist()
        checks.append(Check("nonnegativity", False, f"C[{i},{j}] = {float(C[i, j])!r} < 0", [i, j]))
    else:
        checks.append(Check("nonnegativity", True))

    asym = np.argwhere((C > 0) != (C.T > 0))
    undirected = len(asym) == 0
    if undirected:
        checks.append(Check("weak_undirectedness", True))
    else:
        i, j = asym[0].tolist()
        checks.append(Check("weak_undirectedness", False,
                            f"C[{i},{j}] = {float(C[i, j])!r} but C[{j},{i}] = {float(C[j, i])!r}", [i, j]))

    ncomp, labels = connected_components(_undirected_offdiag(C).astype(float), directed=False)
    if ncomp == 1:
        checks.append(Check("connectedness", True))
    else:
        other = int(np.flatnonzero(labels != labels[0])[0])
        checks.append(Check("connectedness", False,
                            f"market graph has {ncomp} components; 0 and {other} are not connected",
                            [0, other]))

    if not undirected:
        checks.append(Check("circulation_free", False, "not evaluated: support is not weakly undirected"))
    elif ncomp != 1:
        checks.append(Check("circulation_free", False, "not evaluated: market graph is disconnected"))
    else:
        _, bad = _circulation_violations(np.clip(C, 0, None))
        if bad:
            w = bad[0]
            checks.append(Check("circulation_free", False,
                                f"cycle {w['cycle']}: forward product {w['forward_product']:.17g} "
                                f"!= backward product {w['backward_product']:.17g}", w))
        else:
            checks.append(Check("circulation_free", True))

    row_ok = True
    for i in range(C.shape[0]):
        pos = C[i][C[i] > 0]
        if pos.size == 0:
            checks.append(Check("row_normalization", False, f"row {i} has no positive entry", [i]))
            row_ok = False
            break
        if abs(pos.min() - 1.0) > NORMALIZATION_TOL:
            checks.append(Check("row_normalization", False,
                                f"row {i} minimum positive entry is {float(pos.min())!r}, not 1", [i]))
            row_ok = False
            break
    if row_ok:
        checks.append(Check("row_normalization", True))

    return ValidationReport(tuple(checks))


def _raise_first(report: ValidationReport, operation: str) -> None:
    bad = report.first_failure
    if bad is not None:
        raise MarketError(f"{bad.name} violated: {bad.message}", condition=bad.name,
                          operation=operation, witness=bad.witness)


def row_normalize(C: NDArray) -> NDArray:
    """Scale each row so its smallest positive entry is exactly 1."""
    C = np.array(C, dtype=float)
    for i in range(C.shape[0]):
        pos = C[i][C[i] > 0]
        if pos.size == 0:
            raise MarketError(f"row {i} is all zero", condition="connectedness",
                              operation="row_normalize", witness=[i])
        C[i] /= pos.min()
    return C


def market_from_coefficients(C: NDArray, delta: float) -> Market:
    """Row-normalize already-exponentiated coefficients ``C`` and validate."""
    _check_delta(delta)
    C = np.asarray(C, dtype=float)
    if np.any(C < 0):
        i, j = np.argwhere(C < 0)[0].tolist()
        raise MarketError(f"C[{i},{j}] < 0", condition="nonnegativity",
                          operation="market_from_coefficients", witness=[i, j])
    m = Market(row_normalize(C), delta)
    _raise_first(validate(m), "market_from_coefficients")
    return m


def normalize_market(c_raw: NDArray, s: NDArray | None, delta: float) -> Market:
    """Build the normalized market from raw CES coefficients and supplies.

    Supplies are folded into the coefficients (``c_ij * s_j``), the result is
    raised to the power ``delta`` and each row is rescaled so that its
    smallest positive entry is 1.
    """
    _check_delta(delta)
    c_raw = np.asarray(c_raw, dtype=float)
    n = c_raw.shape[0]
    s = np.ones(n) if s is None else np.asarray(s, dtype=float)
    if s.shape != (n,) or np.any(~(s > 0)) or not np.all(np.isfinite(s)):
        raise MarketError("supplies must be a strictly positive vector of length n",
                          operation="normalize_market")
    if np.any(c_raw < 0):
        i, j = np.argwhere(c_raw < 0)[0].tolist()
        raise MarketError(f"c_raw[{i},{j}] < 0", condition="nonnegativity",
                          operation="normalize_market", witness=[i, j])
    zero_rows = np.flatnonzero(~np.any(c_raw > 0, axis=1))
    if zero_rows.size:
        raise MarketError(f"row {int(zero_rows[0])} of c_raw is all zero", condition="connectedness",
                          operation="normalize_market", witness=[int(zero_rows[0])])
    C = (c_raw * s[None, :]) ** delta
    return market_from_coefficients(C, delta)


def _check_delta(delta: float) -> None:
    if not (0 < delta < np.inf):
        raise MarketError(f"delta must lie in (0, inf), got {delta!r}", operation="normalize_market")


def potentials(m: Market) -> Potentials:
    """Node potentials from coefficient-ratio path products along a spanning tree.

    Raises MarketError if a non-tree edge is inconsistent with the tree
    potentials (a circulation) or if the market graph is disconnected.
    """
    C = np.asarray(m.C)
    if np.any((C > 0) != (C.T > 0)):
        i, j = np.argwhere((C > 0) != (C.T > 0))[0].tolist()
        raise MarketError("support is not weakly undirected", condition="weak_undirectedness",
                          operation="potentials", witness=[i, j])
    ncomp, _ = connected_components(_undirected_offdiag(C).astype(float), directed=False)
    if ncomp != 1:
        raise MarketError("market graph is disconnected", condition="connectedness",
                          operation="potentials")
    logpsi, bad = _circulation_violations(C)
    if bad:
        raise MarketError(f"circulation through edge {bad[0]['edge']}", condition="circulation_free",
                          operation="potentials", witness=bad[0])
    base = int(np.argmin(logpsi))
    psi = np.exp(logpsi - logpsi[base])
    psi[base] = 1.0
    return Potentials(
        psi=_frozen(psi),
        psi_tilde=float(psi.max()),
        gamma=float(C.sum(axis=1).max()),
        base_vertex=base,
    )
