"""Linearised tatonnement kernel and nonlinear trajectory simulation.

Near equilibrium write ``p_j = r_j exp(alpha_j)``; proportional tatonnement
``dp_j/dt = (d_j - 1) p_j`` becomes ``dalpha/dt = d(r e^alpha) - 1`` whose
Jacobian at ``alpha = 0`` is the kernel ``D``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .equilibrium import Equilibrium, total_demand
from .errors import DynamicsError
from .market import Market, Potentials, _frozen, potentials as compute_potentials
from .spectral import KERNEL_ALIGNMENT, _require_solved, build_B, eigh_sorted


@dataclass(frozen=True)
class DynamicsKernel:
    D: NDArray
    symmetrized: NDArray
    B_diag: NDArray

    def spectrum(self) -> tuple[NDArray, NDArray]:
        """Descending eigenvalues and eigenvectors (beta basis) of ``B D B^-1``."""
        w, V = eigh_sorted(self.symmetrized)
        return w[::-1], V[:, ::-1]

    def kernel_index(self) -> int:
        """Index, in :meth:`spectrum` order, of the mode aligned with B·1."""
        _, V = self.spectrum()
        u = self.B_diag / np.linalg.norm(self.B_diag)
        cos = np.abs(V.T @ u)
        k = int(np.argmax(cos))
        if cos[k] <= KERNEL_ALIGNMENT:
            raise DynamicsError("kernel mode not found", operation="kernel_index")
        return k

    def modes(self) -> tuple[NDArray, NDArray]:
        """Non-kernel eigenvalues (descending, so ``[0]`` is the damping rate) and beta-basis eigenvectors."""
        w, V = self.spectrum()
        keep = np.arange(len(w)) != self.kernel_index()
        return w[keep], V[:, keep]

    @property
    def damping_rate(self) -> float:
        return float(self.modes()[0][0])

    @property
    def fastest_rate(self) -> float:
        return float(self.modes()[0][-1])


def build_D_analytic(m: Market, eq: Equilibrium, pot: Potentials | None = None) -> DynamicsKernel:
    """Kernel ``D_jk = d(d_j)/d(alpha_k)`` from the closed-form entry formulas."""
    _require_solved(eq, "build_D_analytic")
    if pot is None:
        pot = compute_potentials(m)
    C, r, R, d = m.C, eq.r, eq.R, m.delta
    s = R * r**d
    rj = r ** (1.0 + d)

    # off-diagonal: direct income effect of k, then substitution through every P_i;
    # the i = k term of the sum is the self-loop contribution
    M = C.T @ ((r / R**2)[:, None] * C)
    D = (C.T * (r / R)[None, :] + d * M * r[None, :] ** (-d)) / rj[:, None]

    diag = np.diag(C) / s - (1.0 + d) + d * np.sum(C * C.T / np.outer(s, s), axis=0)
    np.fill_diagonal(D, diag)

    B = build_B(m, eq, pot)
    S = B[:, None] * D / B[None, :]
    return DynamicsKernel(D=_frozen(D), symmetrized=_frozen(S), B_diag=_frozen(B))


def build_D_numeric(m: Market, eq: Equilibrium, h: float = 1e-5) -> NDArray:
    """Central finite differences of total demand in log-price coordinates."""
    if not 1e-7 <= h <= 1e-3:
        raise DynamicsError(f"step h={h!r} outside [1e-7, 1e-3]", operation="build_D_numeric")
    n = m.n
    D = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        D[:, i] = (total_demand(m, eq.r * np.exp(e)) - total_demand(m, eq.r * np.exp(-e))) / (2 * h)
    return D


def excess_increment(m: Market, eq: Equilibrium):
    """Return ``f(alpha) = d(r e^alpha) - d(r)`` evaluated in increment form.

    With ``T0_ij = r_i C_ij / (R_i r_j^(1+delta))`` and
    ``u_i = sum_k (C_ik r_k^-delta / R_i) expm1(-delta alpha_k)``,
    ``f_j = sum_i T0_ij (expm1(alpha_i - (1+delta) alpha_j) - u_i) / (1 + u_i)``.
    Rounding error scales with ``|alpha|`` rather than with ``d ~ 1``, so a
    trajectory can be followed far below ``1e-16`` in absolute size.  At an
    exact equilibrium ``d(r) = 1`` and this is the tatonnement right-hand side.
    """
    C, r, R, d = m.C, np.asarray(eq.r), np.asarray(eq.R), m.delta
    T0 = (r / R)[:, None] * C * r[None, :] ** (-(1.0 + d))
    Wt = C * r[None, :] ** (-d) / R[:, None]

    def f(alpha: NDArray) -> NDArray:
        u = Wt @ np.expm1(-d * alpha)
        a = alpha[:, None] - (1.0 + d) * alpha[None, :]
        return (T0 * (np.expm1(a) - u[:, None]) / (1.0 + u)[:, None]).sum(axis=0)

    return f


def project_out_kernel(alpha: NDArray, B_diag: NDArray) -> tuple[float, NDArray]:
    """Split ``alpha = c·1 + alpha_bar`` with ``B alpha_bar`` orthogonal to ``B·1``."""
    alpha = np.asarray(alpha, dtype=float)
    B2 = np.asarray(B_diag, dtype=float) ** 2
    c = float(B2 @ alpha / B2.sum())
    return c, alpha - c


def b_norm(x: NDArray, B_diag: NDArray) -> float:
    return float(np.linalg.norm(np.asarray(B_diag) * x))


@dataclass(frozen=True)
class Trajectory:
    times: NDArray
    prices: NDArray
    alpha_bar_B_norm: NDArray
    fitted_rate: float
    fit_window: tuple[float, float]
    dt: float

    def to_dict(self, include_prices: bool = False) -> dict:
        out = {
            "times": self.times.tolist(),
            "alpha_bar_B_norm": self.alpha_bar_B_norm.tolist(),
            "fitted_rate": self.fitted_rate,
            "fit_window": list(self.fit_window),
            "dt": self.dt,
        }
        if include_prices:
            out["prices"] = self.prices.tolist()
        return out


def _slope(t: NDArray, y: NDArray) -> float:
    return float(np.polyfit(t, y, 1)[0])


def fit_decay_rate(times: NDArray, norms: NDArray, window: tuple[float, float] = (1e-8, 1e-2),
                   drop_fraction: float = 0.2, settle: bool = False,
                   settle_tol: float = 5e-3) -> tuple[float, tuple[float, float]]:
    """Least-squares slope of ``log norms`` against time.

    Uses the samples whose norm relative to the first sample lies inside
    ``window``; if fewer than 10 qualify, drops the first ``drop_fraction`` of
    the samples instead.

    With ``settle`` the start of the fit moves down the window in half-decade
    steps until the slope over ``[start, end]`` agrees with the slope over the
    lower half of that range to ``settle_tol``, so that a transient from fast
    modes is excluded.  If no start qualifies the lowest candidate is used.
    """
    times = np.asarray(times)
    norms = np.asarray(norms)
    if norms[0] <= 0:
        return float("nan"), (float("nan"), float("nan"))
    rel = norms / norms[0]
    mask = (rel >= window[0]) & (rel <= window[1])
    if mask.sum() < 10:
        mask = np.zeros(len(norms), dtype=bool)
        mask[int(drop_fraction * len(norms)):] = True
        mask &= norms > 0
    if mask.sum() < 2:
        return float("nan"), (float("nan"), float("nan"))
    t, y = times[mask], np.log(norms[mask])

    if settle:
        logrel = y - np.log(norms[0])
        lo = logrel.min()
        start = logrel.max()
        best = None
        # need at least two decades below the candidate start
        while start - lo >= 2 * np.log(10):
            sel = logrel <= start
            half = logrel <= 0.5 * (start + lo)
            if sel.sum() >= 10 and half.sum() >= 5:
                full, tail = _slope(t[sel], y[sel]), _slope(t[half], y[half])
                best = sel
                if abs(full / tail - 1.0) <= settle_tol:
                    break
            start -= 0.5 * np.log(10)
        if best is not None:
            t, y = t[best], y[best]

    return _slope(t, y), (float(t[0]), float(t[-1]))


def simulate_ctpt(
    m: Market,
    eq: Equilibrium,
    alpha0: NDArray,
    T: float | None = None,
    dt: float | None = None,
    kernel: DynamicsKernel | None = None,
    record_every: int = 1,
    window: tuple[float, float] = (1e-8, 1e-2),
    settle: bool = False,
) -> Trajectory:
    """RK4 integration of the nonlinear price dynamics from ``p = r e^alpha0``.

    ``T`` defaults to the time for the slowest mode to shrink by
    ``window[0] / 10`` and ``dt`` to ``0.01 / |fastest rate|``.  ``window``
    and ``settle`` are passed to :func:`fit_decay_rate`.
    """
    alpha = np.array(alpha0, dtype=float)
    if alpha.shape != (m.n,):
        raise DynamicsError(f"alpha0 must have shape ({m.n},)", operation="simulate_ctpt")
    if np.max(np.abs(alpha)) > 0.1:
        raise DynamicsError("alpha0 outside the near-equilibrium regime (|alpha0|_inf <= 0.1)",
                            operation="simulate_ctpt")
    if kernel is None:
        kernel = build_D_analytic(m, eq)
    fastest = abs(kernel.fastest_rate)
    dt_max = 0.01 / fastest
    if dt is None:
        dt = dt_max
    elif not 0 < dt <= dt_max * (1 + 1e-12):
        raise DynamicsError(f"dt={dt!r} exceeds 0.01/|fastest rate| = {dt_max!r}",
                            operation="simulate_ctpt")
    if T is None:
        T = np.log(10.0 / window[0]) / abs(kernel.damping_rate)
    steps = int(np.ceil(T / dt))
    r = np.asarray(eq.r)
    B = kernel.B_diag
    # demand is homogeneous of degree 0, so the flow commutes with alpha -> alpha + c·1;
    # integrating the shifted state keeps the decaying part from drowning in the
    # rounding of the constant offset
    c0, alpha = project_out_kernel(alpha, B)

    rhs = excess_increment(m, eq)

    nrec = steps // record_every + 1
    times = np.empty(nrec)
    prices = np.empty((nrec, m.n))
    norms = np.empty(nrec)

    def record(k: int, t: float, a: NDArray) -> None:
        p = r * np.exp(c0 + a)
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise DynamicsError(f"price left the positive finite range at t={t:.6g}",
                                operation="simulate_ctpt", witness=p.tolist())
        times[k], prices[k] = t, p
        norms[k] = b_norm(project_out_kernel(a, B)[1], B)

    record(0, 0.0, alpha)
    for step in range(1, steps + 1):
        k1 = rhs(alpha)
        k2 = rhs(alpha + 0.5 * dt * k1)
        k3 = rhs(alpha + 0.5 * dt * k2)
        k4 = rhs(alpha + dt * k3)
        alpha = alpha + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if step % record_every == 0:
            record(step // record_every, step * dt, alpha)

    rate, fit_window = fit_decay_rate(times, norms, window, settle=settle)
    return Trajectory(
        times=_frozen(times),
        prices=_frozen(prices),
        alpha_bar_B_norm=_frozen(norms),
        fitted_rate=rate,
        fit_window=fit_window,
        dt=float(dt),
    )


def mode_direction(kernel: DynamicsKernel, index: int = 0) -> NDArray:
    """Alpha direction of the ``index``-th slowest non-kernel mode (0 = damping-rate mode), sup-norm 1."""
    _, V = kernel.modes()
    a = V[:, index] / kernel.B_diag
    return a / np.max(np.abs(a))
