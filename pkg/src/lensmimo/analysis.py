"""Closed-form average-SNR expressions and the majorization toolkit used to
compare arrays with and without the lens.

The multiuser bound replaces the other users' instantaneous estimates by
their covariances, which lower-bounds the average MMSE SNR (Jensen). For a
single user it is exact and depends on the covariance only through its
eigenvalues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .channel_model import (
    ArrayGeometry,
    LensProfile,
    PowerDistribution,
    UserProfile,
    apply_lens_covariance,
    gaussian_pas_covariance,
    lens_power_distribution,
)
from .estimation import estimation_covariances
from .montecarlo import UplinkModel, simulate
from .receiver import RateEstimate, achievable_rate, mmse_snr_batch

__all__ = [
    "SnrBoundInputs",
    "PowerSplit",
    "avg_snr_lower_bound",
    "avg_snr_bounds",
    "single_user_avg_snr",
    "ideal_focusing_snr",
    "multiuser_uncorrelated_bound",
    "majorizes",
    "is_permutation",
    "covariance_eigenvalues",
    "low_snr_quadratic_form",
    "center_out_order",
    "lemma5_condition_check",
    "theorem2_condition_check",
    "power_split",
    "psi",
    "Scenario",
    "LensGainReport",
    "compare_with_without_lens",
]


def _as_vector(a) -> np.ndarray:
    return a.a if isinstance(a, PowerDistribution) else np.asarray(a, dtype=float)


@dataclass
class SnrBoundInputs:
    """Per-user covariances and the training/data SNRs (linear)."""

    covariances: Sequence[np.ndarray]
    rho_tr: float
    rho_d: float
    _stats: Optional[list] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if not (self.rho_tr > 0 and self.rho_d > 0):
            raise ValueError("SNRs must be positive")
        self.covariances = [np.asarray(R) for R in self.covariances]
        shapes = {R.shape for R in self.covariances}
        if len(shapes) != 1 or any(s[0] != s[1] for s in shapes):
            raise ValueError("covariances must be square and of equal size")

    @property
    def K(self) -> int:
        return len(self.covariances)

    @property
    def M(self) -> int:
        return self.covariances[0].shape[0]

    def stats(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """``(C_u, E_u)`` for each user, computed once."""
        if self._stats is None:
            self._stats = [estimation_covariances(R, self.rho_tr) for R in self.covariances]
        return self._stats

    def restrict(self, subset: Sequence[int]) -> "SnrBoundInputs":
        """Inputs seen by the antennas in ``subset`` only."""
        idx = np.asarray(subset, dtype=int)
        sub = [R[np.ix_(idx, idx)] for R in self.covariances]
        return SnrBoundInputs(sub, self.rho_tr, self.rho_d)


def avg_snr_bounds(inputs: SnrBoundInputs) -> np.ndarray:
    """Average-SNR lower bound of every user."""
    stats = inputs.stats()
    C_sum = sum(C for C, _ in stats)
    E_sum = sum(E for _, E in stats)
    base = C_sum + E_sum + np.eye(inputs.M) / inputs.rho_d
    out = np.empty(inputs.K)
    for k, (C, _) in enumerate(stats):
        X = scipy.linalg.solve(base - C, C, assume_a="pos")
        out[k] = max(float(np.real(np.trace(X))), 0.0)
    return out


def avg_snr_lower_bound(inputs: SnrBoundInputs, k: int) -> float:
    """``tr((sum_{u!=k} C_u + sum_u E_u + I/rho_d)^-1 C_k)``."""
    return float(avg_snr_bounds(inputs)[k])


def single_user_avg_snr(eigs, rho_tr: float, rho_d: float) -> float:
    """Exact single-user average SNR as a function of the covariance eigenvalues.

    ``sum_m rho_d rho_tr x_m^2 / ((rho_d + rho_tr) x_m + 1)``, strictly
    Schur-convex in ``x`` for finite SNRs.
    """
    x = np.asarray(eigs, dtype=float)
    if np.any(x < 0):
        raise ValueError("eigenvalues must be nonnegative")
    return float(np.sum(rho_d * rho_tr * x * x / ((rho_d + rho_tr) * x + 1.0)))


def ideal_focusing_snr(beta: float, M: int, rho_tr: float, rho_d: float) -> float:
    """Average SNR when all energy lands on one element."""
    p = beta * M
    return rho_d * rho_tr * p * p / ((rho_d + rho_tr) * p + 1.0)


def multiuser_uncorrelated_bound(beta, dists, rho_tr: float, rho_d: float, k: int) -> float:
    """Average-SNR lower bound of user ``k`` for spatially white channels
    ``R_u = beta_u I`` seen through power distributions ``dists``."""
    beta = np.asarray(beta, dtype=float)
    A = np.array([_as_vector(a) for a in dists])
    xi = beta[k] * A[k]
    kappa = np.delete(beta[:, None] * A, k, axis=0).sum(axis=0)
    num = rho_tr * rho_d * xi * xi
    den = xi * (rho_tr * rho_d * kappa + rho_tr + rho_d) + rho_d * kappa + 1.0
    return float(np.sum(num / den))


def majorizes(x, y, tol: float = 1e-9) -> bool:
    """True iff ``x`` is majorized by ``y``.

    Sorted-descending partial sums of ``x`` must not exceed those of ``y``
    and the totals must agree, with slack ``tol * (1 + sum|y|)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("majorization needs two vectors of equal length")
    slack = tol * (1.0 + np.sum(np.abs(y)))
    cx = np.cumsum(np.sort(x)[::-1])
    cy = np.cumsum(np.sort(y)[::-1])
    if abs(cx[-1] - cy[-1]) > slack:
        return False
    return bool(np.all(cx[:-1] <= cy[:-1] + slack))


def is_permutation(x, y, tol: float = 1e-9) -> bool:
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    return x.shape == y.shape and bool(np.allclose(x, y, rtol=0, atol=tol * (1 + np.abs(y).max())))


def covariance_eigenvalues(R) -> np.ndarray:
    """Real eigenvalues in descending order, clipped at zero."""
    R = np.asarray(R)
    scale = max(float(np.max(np.abs(R))), np.finfo(float).tiny)
    if np.max(np.abs(R - R.conj().T)) > 1e-10 * scale:
        raise ValueError("matrix is not Hermitian")
    w = np.linalg.eigvalsh((R + R.conj().T) / 2)
    return np.clip(w[::-1], 0.0, None)


def low_snr_quadratic_form(R, dist, rho_tr: float, rho_d: float) -> float:
    """Low-SNR approximation ``rho_d rho_tr a^T Q a`` with ``Q = |R|^2``.

    Tracks the exact single-user average SNR of the lensed covariance when
    ``(rho_d + rho_tr) * beta * M << 1``.
    """
    a = _as_vector(dist)
    Q = np.abs(np.asarray(R)) ** 2
    return float(rho_d * rho_tr * a @ Q @ a)


def center_out_order(M: int) -> np.ndarray:
    """Indices ordered by distance from the array centre ``ceil(M/2)``
    (1-based), upper side first on ties.

    Sorts a distribution that is unimodal about the centre into
    nonincreasing order. With the upper side first, every symmetric Toeplitz
    matrix with nonincreasing generator satisfies
    :func:`lemma5_condition_check` under this permutation; lower side first
    fails for even ``M``.
    """
    c = math.ceil(M / 2) - 1
    return np.array(sorted(range(M), key=lambda m: (abs(m - c), -m)))


def lemma5_condition_check(S, perm=None) -> tuple[bool, np.ndarray]:
    """Schur-convexity condition of ``x -> x^T S x`` on ordered vectors.

    After permuting rows and columns of ``S`` by ``perm``, requires
    ``sum_{n<=l} (s_{k,n} - s_{k+1,n}) >= 0`` for every row pair ``k`` and
    every prefix ``l``. Returns the verdict and the table of partial sums
    with shape ``(M-1, M)`` indexed by ``(k, l)``.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(S, S.T):
        raise ValueError("matrix must be symmetric")
    if perm is not None:
        p = np.asarray(perm, dtype=int)
        S = S[np.ix_(p, p)]
    table = np.cumsum(S[:-1] - S[1:], axis=1)
    tol = 1e-12 * max(float(np.abs(S).max()), 1.0)
    return bool(np.all(table >= -tol)), table


def theorem2_condition_check(beta, dists, k: int) -> tuple[bool, bool]:
    """Interference-ordering condition for the multiuser lens gain.

    Returns ``(ordering_ok, all_focused)``. ``ordering_ok`` requires
    ``(a_m^k - a_n^k)(kappa_m - kappa_n) <= 0`` for all antenna pairs, with
    ``kappa`` the aggregate interference power per antenna; ``all_focused``
    reports whether no user's distribution is the all-ones vector.
    """
    split = power_split(beta, dists, k)
    a = _as_vector(dists[k])
    da = a[:, None] - a[None, :]
    dk = split.kappa[:, None] - split.kappa[None, :]
    tol = 1e-12 * max(1.0, float(np.abs(da).max() * np.abs(dk).max()))
    ordering = bool(np.all(da * dk <= tol))
    focused = all(not np.allclose(_as_vector(d), 1.0) for d in dists)
    return ordering, focused


@dataclass
class PowerSplit:
    """Per-antenna desired power ``xi`` and aggregate interference ``kappa``."""

    xi: np.ndarray
    kappa: np.ndarray


def power_split(beta, dists, k: int) -> PowerSplit:
    beta = np.asarray(beta, dtype=float)
    A = np.array([_as_vector(a) for a in dists])
    P = beta[:, None] * A
    return PowerSplit(P[k].copy(), np.delete(P, k, axis=0).sum(axis=0))


def psi(xi, kappa, rho_tr: float, rho_d: float) -> float:
    """Average-SNR bound as a function of desired and interference powers."""
    x = np.asarray(xi, dtype=float)
    y = np.asarray(kappa, dtype=float)
    terms = rho_tr * rho_d * x * x / (x * (rho_tr * rho_d * y + rho_tr + rho_d) + rho_d * y + 1.0)
    return float(np.sum(terms))


@dataclass
class Scenario:
    """Users described by unlensed covariances and lens power distributions.

    ``trials = 0`` skips the Monte-Carlo part of a comparison.
    """

    covariances: Sequence[np.ndarray]
    dists: Sequence[PowerDistribution | np.ndarray]
    rho_tr: float
    rho_d: float
    trials: int = 0
    seed: int = 0

    @classmethod
    def from_geometry(
        cls,
        geom: ArrayGeometry,
        users: Sequence[UserProfile],
        lens: LensProfile,
        rho_tr: float,
        rho_d: float,
        trials: int = 0,
        seed: int = 0,
    ) -> "Scenario":
        R = [gaussian_pas_covariance(geom, u) for u in users]
        a = [lens_power_distribution(lens, u.theta) for u in users]
        return cls(R, a, rho_tr, rho_d, trials, seed)

    def lensed(self) -> list[np.ndarray]:
        return [apply_lens_covariance(R, a) for R, a in zip(self.covariances, self.dists)]


@dataclass
class LensGainReport:
    """Bounds and Monte-Carlo results with and without the lens.

    Monte-Carlo fields are ``None`` when the scenario has ``trials = 0``.
    ``snr_*`` hold per-user mean instantaneous SNRs; ``*_diff_se`` are
    standard errors of the paired (common random number) differences.
    """

    bound_lens: np.ndarray
    bound_nolens: np.ndarray
    rate_lens: Optional[RateEstimate] = None
    rate_nolens: Optional[RateEstimate] = None
    snr_lens: Optional[np.ndarray] = None
    snr_nolens: Optional[np.ndarray] = None
    snr_diff_se: Optional[np.ndarray] = None
    rate_diff_se: Optional[float] = None

    @property
    def bound_gain(self) -> np.ndarray:
        return self.bound_lens - self.bound_nolens

    @property
    def rate_gain(self) -> Optional[float]:
        if self.rate_lens is None:
            return None
        return self.rate_lens.sum - self.rate_nolens.sum


def compare_with_without_lens(scenario: Scenario) -> LensGainReport:
    lensed = scenario.lensed()
    b_lens = avg_snr_bounds(SnrBoundInputs(lensed, scenario.rho_tr, scenario.rho_d))
    b_plain = avg_snr_bounds(SnrBoundInputs(scenario.covariances, scenario.rho_tr, scenario.rho_d))
    report = LensGainReport(b_lens, b_plain)
    if scenario.trials <= 0:
        return report
    models = [
        UplinkModel(np.array(lensed), scenario.rho_tr, scenario.rho_d),
        UplinkModel(np.array(scenario.covariances), scenario.rho_tr, scenario.rho_d),
    ]
    g_lens, g_plain = simulate(
        models,
        scenario.trials,
        scenario.seed,
        0,
        lambda m, h, hh: mmse_snr_batch(hh, m.error_sum, m.rho_d),
    )
    n = scenario.trials
    report.rate_lens = achievable_rate(g_lens)
    report.rate_nolens = achievable_rate(g_plain)
    report.snr_lens = g_lens.mean(axis=0)
    report.snr_nolens = g_plain.mean(axis=0)
    if n > 1:
        report.snr_diff_se = (g_lens - g_plain).std(axis=0, ddof=1) / math.sqrt(n)
        dr = np.log2(1 + g_lens).sum(axis=1) - np.log2(1 + g_plain).sum(axis=1)
        report.rate_diff_se = float(dr.std(ddof=1) / math.sqrt(n))
    return report
