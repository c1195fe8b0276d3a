"""Deterministic market constructors.

Covers the uniform circulant markets, the geometric price chain, the
exponential-gap chain whose equilibrium prices are exactly ``A**|i|``, the
three-edge tightness pair for the Laplacian stability inequality, and a
random circulation-free market generator for property tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy.sparse.csgraph import connected_components

from .market import Market, market_from_coefficients

KINDS = ("uniform_circulant", "price_chain", "exp_gap_chain", "tightness_pair", "random_db")


def gen_uniform_circulant(n: int, half_degree: int, self_loop: bool = False, delta: float = 1.0) -> Market:
    """0/1 circulant market: ``C_ij = 1`` iff ``(j - i) mod n`` is in ``±1..±half_degree``."""
    if n < 3:
        raise ValueError("uniform circulant needs n >= 3")
    if not 1 <= half_degree <= (n - 1) // 2:
        raise ValueError(f"half_degree must lie in [1, {(n - 1) // 2}] for n={n}")
    C = np.zeros((n, n))
    idx = np.arange(n)
    for k in range(1, half_degree + 1):
        C[idx, (idx + k) % n] = 1.0
        C[idx, (idx - k) % n] = 1.0
    if self_loop:
        np.fill_diagonal(C, 1.0)
    return market_from_coefficients(C, delta)


def gen_price_chain(n: int, a: float, delta: float = 1.0) -> Market:
    """Chain ``1..n`` with ``C_ij = a**(j - i)`` for ``|i - j| <= 1`` (self-loops included)."""
    if n < 3:
        raise ValueError("price chain needs n >= 3")
    if not a > 1:
        raise ValueError("price chain needs a > 1")
    C = np.zeros((n, n))
    for i in range(n):
        for j in (i - 1, i, i + 1):
            if 0 <= j < n:
                C[i, j] = a ** (j - i)
    return market_from_coefficients(C, delta)


def exp_gap_backward_coefficients(n: int, A: float) -> NDArray:
    """Backward coefficients ``c_i = C_{i,i-1}`` for ``i = 1..n`` of the exponential-gap chain.

    With ``C_{i,i+1} = A`` and unit self-loops, detailed balance at prices
    ``A**|i|`` fixes ``c_1 = 2/(3A^2 - A)``, then
    ``c_{i+1} = 2/(A^3 c_i + 2A^2 - A)`` in the interior and
    ``c_n = 1/(A^3 c_{n-1} + 2A^2 - A)`` at the end of the chain.
    """
    c = np.empty(n + 1)
    c[0] = np.nan
    c[1] = 2.0 / (3.0 * A * A - A)
    for i in range(1, n - 1):
        c[i + 1] = 2.0 / (A**3 * c[i] + 2.0 * A * A - A)
    if n >= 2:
        c[n] = 1.0 / (A**3 * c[n - 1] + 2.0 * A * A - A)
    return c[1:]


def exp_gap_raw_coefficients(n: int, A: float) -> NDArray:
    """Un-normalized coefficients on vertices ``-n..n`` (row/column ``i + n``)."""
    N = 2 * n + 1
    C = np.eye(N)
    back = exp_gap_backward_coefficients(n, A)
    for i in range(n):
        for sgn in (1, -1):
            u, v = sgn * i + n, sgn * (i + 1) + n
            C[u, v] = A
            C[v, u] = back[i]
    return C


def gen_exp_gap_chain(n: int, A: float) -> Market:
    """Chain on ``-n..n`` at ``delta = 1`` whose equilibrium prices are ``A**|i|``."""
    if n < 2:
        raise ValueError("exponential-gap chain needs n >= 2")
    if not A > 1:
        raise ValueError("exponential-gap chain needs A > 1")
    return market_from_coefficients(exp_gap_raw_coefficients(n, A), 1.0)


def exp_gap_prices(n: int, A: float) -> NDArray:
    return A ** np.abs(np.arange(-n, n + 1)).astype(float)


def path_adjacency(weights) -> NDArray:
    """Weighted path graph with the given consecutive edge weights."""
    w = np.asarray(weights, dtype=float)
    W = np.zeros((len(w) + 1, len(w) + 1))
    idx = np.arange(len(w))
    W[idx, idx + 1] = w
    W[idx + 1, idx] = w
    return W


def gen_tightness_pair(x: float, nu0: float) -> tuple[NDArray, NDArray]:
    """Three-edge paths with weights ``(x, 1, x)`` and ``(x/nu0, 1, x/nu0)``."""
    if not x > 0:
        raise ValueError("x must be positive")
    if not nu0 >= 1:
        raise ValueError("nu0 must be at least 1")
    return path_adjacency([x, 1.0, x]), path_adjacency([x / nu0, 1.0, x / nu0])


def random_connected_support(n: int, density: float, rng: np.random.Generator,
                             max_tries: int = 1000) -> NDArray:
    """Symmetric boolean adjacency (no diagonal) of a connected G(n, density) sample."""
    for _ in range(max_tries):
        upper = np.triu(rng.random((n, n)) < density, k=1)
        A = upper | upper.T
        if connected_components(A.astype(float), directed=False)[0] == 1:
            return A
    raise RuntimeError(f"no connected graph in {max_tries} draws (n={n}, density={density})")


def random_db_coefficients(n: int, density: float, rng: np.random.Generator,
                           phi_spread: float = 1.0, loop_prob: float = 0.3,
                           weight_range: tuple[float, float] = (1.0, 3.0)) -> tuple[NDArray, NDArray]:
    """Un-normalized circulation-free coefficients ``C_ij = S_ij / phi_i`` and the potentials ``phi``.

    ``S`` is symmetric positive on a random connected support (plus random
    self-loops) and ``log phi`` is uniform on ``[-phi_spread, phi_spread]``.
    """
    A = random_connected_support(n, density, rng)
    A |= np.diag(rng.random(n) < loop_prob)
    S = np.triu(rng.uniform(*weight_range, size=(n, n)))
    S = np.where(A, S + np.triu(S, k=1).T, 0.0)
    phi = np.exp(rng.uniform(-phi_spread, phi_spread, size=n))
    return S / phi[:, None], phi


def gen_random_db(n: int, density: float = 0.4, seed: int = 0, delta: float = 1.0,
                  phi_spread: float = 1.0) -> Market:
    """Random connected circulation-free market, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    C, _ = random_db_coefficients(n, density, rng, phi_spread=phi_spread)
    return market_from_coefficients(C, delta)


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    parameters: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}; expected one of {KINDS}")

    def build(self):
        p = self.parameters
        if self.kind == "uniform_circulant":
            return gen_uniform_circulant(p["n"], p.get("half_degree", 1), p.get("self_loop", False),
                                         p.get("delta", 1.0))
        if self.kind == "price_chain":
            return gen_price_chain(p["n"], p.get("a", 2.0), p.get("delta", 1.0))
        if self.kind == "exp_gap_chain":
            return gen_exp_gap_chain(p["n"], p.get("A", 2.0))
        if self.kind == "tightness_pair":
            return gen_tightness_pair(p.get("x", 1.0), p.get("nu", 1.0))
        return gen_random_db(p["n"], p.get("density", 0.4), p.get("seed", 0), p.get("delta", 1.0),
                             p.get("phi_spread", 1.0))
