"""Noise-driven market: an Ornstein-Uhlenbeck process in the symmetrized basis.

The state ``beta = B alpha`` follows ``d beta = (B D B^-1) beta dt + kappa dW``.
Along a non-kernel eigenvector with eigenvalue ``lam < 0`` the stationary law
is Gaussian with variance ``kappa**2 / (-2 lam)``.  The kernel direction
(pure price rescaling) has no restoring force and is pinned to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .dynamics import DynamicsKernel
from .errors import NoiseError

_CHUNK = 4096


def stationary_prediction(mode_lambdas: NDArray, kappa: float) -> NDArray:
    """Stationary per-mode variances ``kappa**2 / (-2 lam)``."""
    lam = np.asarray(mode_lambdas, dtype=float)
    if np.any(lam >= 0):
        raise NoiseError("stationary variance needs strictly negative eigenvalues",
                         operation="stationary_prediction", witness=lam[lam >= 0].tolist())
    return kappa**2 / (-2.0 * lam)


@dataclass(frozen=True)
class NoiseReport:
    kappa: float
    mode_lambdas: NDArray
    predicted_var: NDArray
    empirical_var: NDArray
    rel_error: NDArray
    correlation_times: NDArray
    skewness: NDArray
    excess_kurtosis: NDArray
    cross_cov: NDArray
    cross_cov_se: NDArray
    seed: int
    trials: int
    T: float
    dt: float
    burn_in: float
    histograms: list = field(default_factory=list)

    @property
    def max_cross_cov_z(self) -> float:
        n = len(self.mode_lambdas)
        if n < 2:
            return 0.0
        off = ~np.eye(n, dtype=bool)
        return float(np.max(np.abs(self.cross_cov[off]) / self.cross_cov_se[off]))

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "seed": self.seed,
            "trials": self.trials,
            "T": self.T,
            "dt": self.dt,
            "burn_in": self.burn_in,
            "mode_lambdas": self.mode_lambdas.tolist(),
            "predicted_var": self.predicted_var.tolist(),
            "empirical_var": self.empirical_var.tolist(),
            "rel_error": self.rel_error.tolist(),
            "correlation_times": self.correlation_times.tolist(),
            "skewness": self.skewness.tolist(),
            "excess_kurtosis": self.excess_kurtosis.tolist(),
            "max_cross_cov_z": self.max_cross_cov_z,
        }


def simulate_ou(
    kernel: DynamicsKernel,
    kappa: float,
    T: float | None = None,
    dt: float | None = None,
    seed: int = 0,
    trials: int = 1,
    burn_in: float | None = None,
    histogram_bins: int = 0,
) -> NoiseReport:
    """Euler-Maruyama simulation of the noise-buffeted market.

    ``trials`` independent paths (one Philox stream each, spawned from
    ``seed``) are advanced together and their post-burn-in statistics pooled.
    Defaults: ``dt = 0.01/|lam_fastest|``, ``burn_in = 10/|lam_slowest|``,
    ``T = 500/|lam_slowest|`` measured after burn-in.
    """
    if not kappa > 0:
        raise NoiseError("kappa must be positive", operation="simulate_ou")
    if trials < 1:
        raise NoiseError("trials must be >= 1", operation="simulate_ou")
    lam, V = kernel.modes()
    slow, fast = abs(lam[0]), abs(lam[-1])
    dt_max = 0.01 / fast
    if dt is None:
        dt = dt_max
    elif not 0 < dt <= dt_max * (1 + 1e-12):
        raise NoiseError(f"dt={dt!r} exceeds 0.01/|fastest rate| = {dt_max!r}", operation="simulate_ou")
    if burn_in is None:
        burn_in = 10.0 / slow
    if T is None:
        T = 500.0 / slow
    if T < 50.0 / slow * (1 - 1e-12):
        raise NoiseError(f"T={T!r} shorter than 50 correlation times of the slowest mode",
                         operation="simulate_ou")

    n = kernel.symmetrized.shape[0]
    S = 0.5 * (kernel.symmetrized + kernel.symmetrized.T)
    M = np.eye(n) + dt * S
    u0 = kernel.B_diag / np.linalg.norm(kernel.B_diag)
    sq = kappa * np.sqrt(dt)
    gens = [np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(trials)]

    n_burn = int(round(burn_in / dt))
    n_keep = int(round(T / dt))
    m = len(lam)
    s1 = np.zeros(m)
    s2 = np.zeros(m)
    s3 = np.zeros(m)
    s4 = np.zeros(m)
    sxy = np.zeros((m, m))
    predicted = stationary_prediction(lam, kappa)
    edges = None
    counts = None
    if histogram_bins:
        sd = np.sqrt(predicted)
        edges = [np.linspace(-5 * s, 5 * s, histogram_bins + 1) for s in sd]
        counts = [np.zeros(histogram_bins, dtype=np.int64) for _ in sd]

    beta = np.zeros((n, trials))
    total = n_burn + n_keep
    done = 0
    while done < total:
        k = min(_CHUNK, total - done)
        xi = np.stack([g.standard_normal((k, n)) for g in gens], axis=-1)
        path = np.empty((k, n, trials))
        for t in range(k):
            beta = M @ beta + sq * xi[t]
            beta -= np.outer(u0, u0 @ beta)
            if not np.all(np.isfinite(beta)):
                raise NoiseError(f"non-finite state at step {done + t} (seed {seed})",
                                 operation="simulate_ou", witness={"seed": seed, "step": done + t})
            path[t] = beta
        start = max(0, n_burn - done)
        if start < k:
            X = np.einsum("nm,knt->mkt", V, path[start:]).reshape(m, -1)
            s1 += X.sum(axis=1)
            s2 += (X**2).sum(axis=1)
            s3 += (X**3).sum(axis=1)
            s4 += (X**4).sum(axis=1)
            sxy += X @ X.T
            if counts is not None:
                for j in range(m):
                    counts[j] += np.histogram(X[j], bins=edges[j])[0]
        done += k

    N = n_keep * trials
    mean = s1 / N
    var = s2 / N - mean**2
    mu3 = s3 / N - 3 * mean * s2 / N + 2 * mean**3
    mu4 = s4 / N - 4 * mean * s3 / N + 6 * mean**2 * s2 / N - 3 * mean**4
    cov = sxy / N - np.outer(mean, mean)
    T_total = n_keep * dt * trials
    theta = -lam
    se = np.sqrt(np.outer(predicted, predicted) * 2.0 / ((theta[:, None] + theta[None, :]) * T_total))

    hist = []
    if counts is not None:
        hist = [{"mode": j, "edges": edges[j].tolist(), "counts": counts[j].tolist()} for j in range(m)]

    return NoiseReport(
        kappa=float(kappa),
        mode_lambdas=lam,
        predicted_var=predicted,
        empirical_var=var,
        rel_error=np.abs(var - predicted) / predicted,
        correlation_times=theta * T_total,
        skewness=mu3 / var**1.5,
        excess_kurtosis=mu4 / var**2 - 3.0,
        cross_cov=cov,
        cross_cov_se=se,
        seed=int(seed),
        trials=int(trials),
        T=float(n_keep * dt),
        dt=float(dt),
        burn_in=float(n_burn * dt),
        histograms=hist,
    )
