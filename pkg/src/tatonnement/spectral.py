"""Market Laplacian and spectral bounds on the damping rate.

At equilibrium the linearised tatonnement kernel ``D`` is similar, through
a positive diagonal ``B``, to the polynomial ``q(delta, L_C)`` of the
market Laplacian ``L_C = I - ell``.  This module builds ``ell``, ``B``,
``L_C`` and ``W = B ell B`` (the edge weighting whose normalized Laplacian
is ``L_C``), and evaluates the two-sided bounds on the damping rate in terms
of ``L_C``, of the unweighted market graph ``U`` and of the
equilibrium-price graph ``E``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .equilibrium import Equilibrium
from .errors import SpectralError
from .market import Market, Potentials, _frozen

#: Absolute slack on every bound comparison, absorbs eigensolver error.
BOUND_SLACK = 1e-8
#: Residual above which an Equilibrium is treated as unsolved.
RESIDUAL_LIMIT = 1e-8
#: Minimum |cosine| between an eigenvector and B·1 to call it the kernel mode.
KERNEL_ALIGNMENT = 0.99


# -- dense symmetric eigensolvers ------------------------------------------


def eigh_sorted(A: NDArray) -> tuple[NDArray, NDArray]:
    """Ascending eigenvalues and orthonormal eigenvectors of a symmetric matrix."""
    A = np.array(A, dtype=float)
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    return w, V


def jacobi_eigh(A: NDArray, rel_tol: float = 1e-13, max_sweeps: int = 100) -> tuple[NDArray, NDArray]:
    """Cyclic Jacobi eigensolver with a fixed row-by-row sweep order.

    Stops when the off-diagonal Frobenius norm falls below
    ``rel_tol * ||A||_F``.  Returns ascending eigenvalues and the matching
    orthonormal eigenvectors as columns.
    """
    a = np.array(A, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise SpectralError("jacobi_eigh needs a square symmetric matrix", operation="jacobi_eigh")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    threshold = rel_tol * np.linalg.norm(a)
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        if np.sqrt(np.sum(a[offdiag] ** 2)) <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                diff = a[q, q] - a[p, p]
                if apq == 0.0 or abs(apq) < 1e-300:
                    continue
                if abs(diff) > 1e150 * abs(apq):
                    t = apq / diff  # theta huge: t ~ 1/(2 theta)
                else:
                    theta = diff / (2.0 * apq)
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                vp = c * v[:, p] - s * v[:, q]
                vq = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = vp, vq
    else:
        raise SpectralError(f"Jacobi did not converge in {max_sweeps} sweeps", operation="jacobi_eigh")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


# -- Laplacians --------------------------------------------------------------


def laplacian(A: NDArray) -> NDArray:
    """Normalized Laplacian ``I - a^-1 A a^-1`` with ``a_ii**2 = sum_j A_ij``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise SpectralError(f"adjacency must be square, got {A.shape}", operation="laplacian")
    if np.any(A < 0):
        raise SpectralError("adjacency has negative entries", operation="laplacian")
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    if np.abs(A - A.T).max() > 1e-12 * scale:
        raise SpectralError("adjacency is not symmetric", operation="laplacian")
    deg = A.sum(axis=1)
    if np.any(deg <= 0):
        k = int(np.flatnonzero(deg <= 0)[0])
        raise SpectralError(f"row {k} of the adjacency is zero", operation="laplacian", witness=[k])
    a = np.sqrt(deg)
    L = np.eye(A.shape[0]) - A / np.outer(a, a)
    return 0.5 * (L + L.T)


def algebraic_connectivity(A: NDArray) -> float:
    """Second-smallest eigenvalue of ``laplacian(A)``."""
    return float(eigh_sorted(laplacian(A))[0][1])


def q_eval(delta: float, lam):
    """``q(delta, lam) = -(1 + 2 delta) lam + delta lam**2`` (works elementwise)."""
    return -(1.0 + 2.0 * delta) * lam + delta * lam * lam


# -- market matrices ---------------------------------------------------------


def _require_solved(eq: Equilibrium, operation: str) -> None:
    if not (eq.clearing_residual <= RESIDUAL_LIMIT and eq.balance_residual <= RESIDUAL_LIMIT):
        raise SpectralError(
            f"equilibrium is not solved (clearing {eq.clearing_residual:.3g}, "
            f"balance {eq.balance_residual:.3g}, limit {RESIDUAL_LIMIT:g})",
            operation=operation,
        )


def build_ell(m: Market, eq: Equilibrium) -> NDArray:
    """Symmetric coupling matrix ``ell_ij = sqrt(C_ij C_ji / (R_i r_i^d R_j r_j^d))``."""
    _require_solved(eq, "build_ell")
    s = eq.R * eq.r**m.delta
    ell = np.sqrt(m.C * m.C.T / np.outer(s, s))
    return 0.5 * (ell + ell.T)


def build_B(m: Market, eq: Equilibrium, pot: Potentials, base_vertex: int | None = None,
            check: bool = True) -> NDArray:
    """Diagonal of the symmetrizing matrix ``B``.

    Uses ``B_jj = r_j^(1+d/2) / sqrt(R_j psi_j)`` with ``psi`` rescaled to 1 at
    ``base_vertex``; when ``check`` is set it is cross-checked against the
    closed form ``sqrt(r_j r_b^(1+d) / R_b)`` to relative 1e-9.
    """
    _require_solved(eq, "build_B")
    d = m.delta
    b = pot.base_vertex if base_vertex is None else int(base_vertex)
    psi = pot.psi / pot.psi[b]
    B = eq.r ** (1.0 + d / 2.0) / np.sqrt(eq.R * psi)
    if check:
        closed = B_closed_form(m, eq, b)
        err = np.max(np.abs(B - closed) / closed)
        if err > 1e-9:
            raise SpectralError(f"B formulas disagree (relative error {err:.3g})",
                                operation="build_B", witness=float(err))
    return B


def B_closed_form(m: Market, eq: Equilibrium, base_vertex: int) -> NDArray:
    b = int(base_vertex)
    return np.sqrt(eq.r * eq.r[b] ** (1.0 + m.delta) / eq.R[b])


# -- reports -----------------------------------------------------------------


@dataclass(frozen=True)
class Sandwich:
    """``lower <= value <= upper`` with ``BOUND_SLACK`` absolute slack."""

    name: str
    lower: float
    value: float
    upper: float
    details: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.lower - BOUND_SLACK <= self.value <= self.upper + BOUND_SLACK

    def to_dict(self) -> dict:
        return {"name": self.name, "lower": self.lower, "value": self.value, "upper": self.upper,
                "holds": self.holds, "details": self.details}


@dataclass(frozen=True)
class SpectralReport:
    delta: float
    ell: NDArray
    B_diag: NDArray
    L_C: NDArray
    W: NDArray
    eigenvalues: NDArray
    eigenvectors: NDArray
    kernel_index: int
    critical_index: int
    damping_rate: float
    kernel_residual: float
    bounds: dict

    @property
    def lambda2(self) -> float:
        """Algebraic connectivity of the market Laplacian."""
        others = np.delete(self.eigenvalues, self.kernel_index)
        return float(others.min())

    @property
    def q_images(self) -> NDArray:
        return q_eval(self.delta, self.eigenvalues)

    def to_dict(self, full: bool = True) -> dict:
        out = {
            "delta": self.delta,
            "B_diag": self.B_diag.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "q_images": self.q_images.tolist(),
            "lambda2": self.lambda2,
            "kernel_index": self.kernel_index,
            "critical_index": self.critical_index,
            "damping_rate": self.damping_rate,
            "half_life": float(-np.log(2.0) / self.damping_rate),
            "kernel_residual": self.kernel_residual,
            "bounds": {k: v.to_dict() for k, v in self.bounds.items()},
        }
        if full:
            out.update(ell=self.ell.tolist(), L_C=self.L_C.tolist(), W=self.W.tolist(),
                       eigenvectors=self.eigenvectors.tolist())
        return out


def is_uniform(m: Market) -> bool:
    """All coefficients in {0, 1} with a common degree ``Delta > 1`` on rows and columns."""
    C = m.C
    if not np.all((C == 0) | (C == 1)):
        return False
    rows, cols = C.sum(axis=1), C.sum(axis=0)
    return bool(np.all(rows == rows[0]) and np.all(cols == rows[0]) and rows[0] > 1)


def _kernel_index(V: NDArray, B: NDArray) -> int:
    u = B / np.linalg.norm(B)
    cos = np.abs(V.T @ u)
    k = int(np.argmax(cos))
    if cos[k] <= KERNEL_ALIGNMENT:
        raise SpectralError(f"no eigenvector aligned with B·1 (best |cos| = {cos[k]:.4f})",
                            operation="market_laplacian")
    return k


def _damping_from_spectrum(delta: float, lam: NDArray, kernel: int) -> tuple[float, int]:
    qs = q_eval(delta, np.asarray(lam, dtype=float))
    idx = [k for k in range(len(lam)) if k != kernel]
    order = sorted(idx, key=lambda k: -qs[k])  # sorted() is stable
    return float(qs[order[0]]), order[0]


def market_laplacian(m: Market, eq: Equilibrium, pot: Potentials) -> SpectralReport:
    """Full spectral analysis of a solved market."""
    ell = build_ell(m, eq)
    B = build_B(m, eq, pot)
    n = m.n
    L_C = np.eye(n) - ell
    W = B[:, None] * ell * B[None, :]
    lam, V = eigh_sorted(L_C)
    kernel = _kernel_index(V, B)
    rate, crit = _damping_from_spectrum(m.delta, lam, kernel)
    kernel_residual = float(np.max(np.abs(L_C @ B)) / np.max(B))

    others = np.delete(lam, kernel)
    lam2 = float(others.min())
    q2 = float(q_eval(m.delta, lam2))
    bounds = {"laplacian": Sandwich("laplacian", q2, rate, max(q2, -2.0), {"lambda2_LC": lam2})}
    if is_uniform(m):
        lamU = algebraic_connectivity(m.C)
        qU = float(q_eval(m.delta, lamU))
        bounds["uniform"] = Sandwich("uniform", qU, rate, max(qU, -2.0), {"lambda2_LAP_U": lamU})

    return SpectralReport(
        delta=m.delta,
        ell=_frozen(ell),
        B_diag=_frozen(B),
        L_C=_frozen(L_C),
        W=_frozen(W),
        eigenvalues=_frozen(lam),
        eigenvectors=_frozen(V),
        kernel_index=kernel,
        critical_index=crit,
        damping_rate=rate,
        kernel_residual=kernel_residual,
        bounds=bounds,
    )


def damping_rate(report: SpectralReport, delta: float) -> float:
    """Second-largest eigenvalue of ``q(delta, L_C)``; the kernel image q(delta, 0)=0 is excluded
    by eigenvector alignment with B·1, not by value."""
    return _damping_from_spectrum(delta, report.eigenvalues, report.kernel_index)[0]


# -- comparison machinery -----------------------------------------------------


def nu(Wa: NDArray, Wb: NDArray) -> float:
    """Distortion ``(max Wa/Wb) * (max Wb/Wa)`` over the common support.

    Entries where both matrices vanish are ignored.  Returns ``inf`` when the
    supports differ.
    """
    Wa = np.asarray(Wa, dtype=float)
    Wb = np.asarray(Wb, dtype=float)
    sa, sb = Wa > 0, Wb > 0
    if np.any(sa != sb):
        return float("inf")
    if not np.any(sa):
        return 1.0
    ratio = Wa[sa] / Wb[sa]
    return float(ratio.max() / ratio.min())


def rayleigh_quotient(W: NDArray, b: NDArray) -> float:
    """``sum_{i<j} W_ij (b_i - b_j)^2 / sum_i w_i^2 b_i^2`` with ``w_i^2`` the row sums of W."""
    W = np.asarray(W, dtype=float)
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        raise SpectralError("Rayleigh quotient of the zero vector", operation="rayleigh_quotient")
    diff2 = (b[:, None] - b[None, :]) ** 2
    num = 0.5 * np.sum(W * diff2)
    den = np.sum(W.sum(axis=1) * b * b)
    return float(num / den)


def equilibrium_price_graph(m: Market, eq: Equilibrium) -> NDArray:
    """``E_ij = sqrt(r_i r_j)`` on edges of the market graph (``E_jj = r_j`` on self-loops)."""
    return np.where(m.C > 0, np.sqrt(np.outer(eq.r, eq.r)), 0.0)


def _comparison_sandwich(name: str, delta: float, n: int, rate: float,
                         lam_ref: float, factor: float, nu_measured: float) -> Sandwich:
    lower_arg = min(factor * lam_ref, 1.0 + 1.0 / (2.0 * delta), 1.0 + 1.0 / (n - 1))
    lower = float(q_eval(delta, lower_arg))
    upper = max(float(q_eval(delta, lam_ref / factor)), -2.0)
    upper_equiv = float(q_eval(delta, min(lam_ref / factor, 1.0 / delta)))
    return Sandwich(name, lower, rate, upper, {
        "lambda2_reference": lam_ref,
        "factor": factor,
        "nu_measured": nu_measured,
        "lower_argument": lower_arg,
        "upper_equivalent_form": upper_equiv,
    })


@dataclass(frozen=True)
class BoundsReport:
    damping_rate: float
    lambda2_LC: float
    lambda2_U: float
    lambda2_E: float
    nu_W_U: float
    nu_W_E: float
    psi_tilde: float
    gamma: float
    sandwiches: dict
    distortion_U: bool
    distortion_E: bool

    @property
    def holds(self) -> bool:
        return all(s.holds for s in self.sandwiches.values()) and self.distortion_U and self.distortion_E

    def violations(self) -> list[str]:
        bad = [k for k, s in self.sandwiches.items() if not s.holds]
        if not self.distortion_U:
            bad.append("distortion_U")
        if not self.distortion_E:
            bad.append("distortion_E")
        return bad

    def to_dict(self) -> dict:
        return {
            "damping_rate": self.damping_rate,
            "lambda2_LC": self.lambda2_LC,
            "lambda2_U": self.lambda2_U,
            "lambda2_E": self.lambda2_E,
            "nu_W_U": self.nu_W_U,
            "nu_W_E": self.nu_W_E,
            "psi_tilde": self.psi_tilde,
            "gamma": self.gamma,
            "distortion_U": self.distortion_U,
            "distortion_E": self.distortion_E,
            "holds": self.holds,
            "sandwiches": {k: v.to_dict() for k, v in self.sandwiches.items()},
        }


def comparison_bounds(m: Market, eq: Equilibrium, pot: Potentials,
                      report: SpectralReport) -> BoundsReport:
    """Damping-rate bounds through ``LAP(U)`` and ``LAP(E)``.

    Each reference graph gets two sandwiches: one with the measured
    ``nu(W, .)`` and one with the a-priori factor (``psi_tilde gamma^(2+d)``
    for U, ``gamma^(1+d)`` for E).
    """
    d, n = m.delta, m.n
    U = (m.C > 0).astype(float)
    E = equilibrium_price_graph(m, eq)
    lamU = algebraic_connectivity(U)
    lamE = algebraic_connectivity(E)
    nuU = nu(report.W, U)
    nuE = nu(report.W, E)
    factorU = pot.psi_tilde * pot.gamma ** (2.0 + d)
    factorE = pot.gamma ** (1.0 + d)
    rate = report.damping_rate
    sandwiches = {
        "nu_U": _comparison_sandwich("nu_U", d, n, rate, lamU, nuU, nuU),
        "apriori_U": _comparison_sandwich("apriori_U", d, n, rate, lamU, factorU, nuU),
        "nu_E": _comparison_sandwich("nu_E", d, n, rate, lamE, nuE, nuE),
        "apriori_E": _comparison_sandwich("apriori_E", d, n, rate, lamE, factorE, nuE),
    }
    return BoundsReport(
        damping_rate=rate,
        lambda2_LC=report.lambda2,
        lambda2_U=lamU,
        lambda2_E=lamE,
        nu_W_U=nuU,
        nu_W_E=nuE,
        psi_tilde=pot.psi_tilde,
        gamma=pot.gamma,
        sandwiches=sandwiches,
        distortion_U=bool(nuU <= factorU * (1 + 1e-9)),
        distortion_E=bool(nuE <= factorE * (1 + 1e-9)),
    )


def stationary_walk(report: SpectralReport) -> tuple[NDArray, NDArray]:
    """Column-stochastic walk ``W B^-2`` and its stationary distribution ``B^2 / sum(B^2)``."""
    B2 = report.B_diag**2
    P = report.W / B2[None, :]
    return P, B2 / B2.sum()
