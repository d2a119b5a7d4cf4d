"""Uplink data-phase detection: full-scale MMSE filtering, instantaneous SNR,
achievable rate, and grouped ("small-MIMO") processing.

Single-realization functions take a sequence of
:class:`~lensmimo.estimation.EstimationStats`. The ``*_batch`` functions work
on stacked estimates of shape ``(trials, K, M)`` and are what the Monte-Carlo
engine uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .channel_model import covariance_sqrt, sample_cscg
from .estimation import EstimationStats

__all__ = [
    "DataPhaseConfig",
    "GroupPartition",
    "RateEstimate",
    "interference_matrix",
    "mmse_filter",
    "filter_snr",
    "instantaneous_snr",
    "mmse_snr_batch",
    "achievable_rate",
    "partition_contiguous",
    "small_mimo_filter",
    "small_mimo_detect",
    "small_mimo_snr_batch",
    "small_mimo_rate",
    "residual_power",
]


@dataclass(frozen=True)
class DataPhaseConfig:
    rho_d: float
    K: int

    def __post_init__(self):
        if not self.rho_d > 0:
            raise ValueError("data SNR must be positive")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError("user count must be a positive integer")


@dataclass(frozen=True)
class GroupPartition:
    """Contiguous antenna groups as half-open ``(start, stop)`` ranges."""

    bounds: tuple[tuple[int, int], ...]

    def __post_init__(self):
        bounds = tuple((int(a), int(b)) for a, b in self.bounds)
        if not bounds:
            raise ValueError("partition needs at least one group")
        pos = 0
        for a, b in bounds:
            if a != pos or b <= a:
                raise ValueError(f"groups must be contiguous, ordered and nonempty: {bounds}")
            pos = b
        object.__setattr__(self, "bounds", bounds)

    @property
    def M(self) -> int:
        return self.bounds[-1][1]

    @property
    def sizes(self) -> list[int]:
        return [b - a for a, b in self.bounds]

    def __len__(self):
        return len(self.bounds)

    def __iter__(self):
        return iter(self.bounds)


@dataclass
class RateEstimate:
    """Per-user Monte-Carlo mean with its standard error."""

    mean: np.ndarray
    stderr: np.ndarray
    trials: int

    @property
    def sum(self) -> float:
        return float(np.sum(self.mean))


def _stack(estimates: Sequence[EstimationStats]):
    H = np.array([np.asarray(e.h_hat) for e in estimates])
    E_sum = sum(np.asarray(e.E) for e in estimates)
    return H, E_sum


def interference_matrix(estimates: Sequence[EstimationStats], rho_d: float, k: int) -> np.ndarray:
    """``sum_{u != k} h_u h_u^H + sum_u E_u + I / rho_d``."""
    if not rho_d > 0:
        raise ValueError("data SNR must be positive")
    H, E_sum = _stack(estimates)
    others = np.delete(H, k, axis=0)
    return others.T @ others.conj() + E_sum + np.eye(H.shape[1]) / rho_d


def mmse_filter(estimates: Sequence[EstimationStats], rho_d: float, k: int) -> np.ndarray:
    """MMSE receive filter for user ``k``."""
    A = interference_matrix(estimates, rho_d, k)
    return scipy.linalg.solve(A, estimates[k].h_hat, assume_a="pos")


def filter_snr(v: np.ndarray, estimates: Sequence[EstimationStats], rho_d: float, k: int) -> float:
    """Received SNR of user ``k`` under an arbitrary linear filter ``v``, with
    estimation error and interference treated as worst-case noise."""
    A = interference_matrix(estimates, rho_d, k)
    den = np.real(np.vdot(v, A @ v))
    if den <= 0:
        return 0.0
    return float(abs(np.vdot(v, estimates[k].h_hat)) ** 2 / den)


def instantaneous_snr(estimates: Sequence[EstimationStats], rho_d: float, k: int) -> float:
    """Maximum (MMSE) received SNR of user ``k`` for one realization."""
    A = interference_matrix(estimates, rho_d, k)
    h = np.asarray(estimates[k].h_hat)
    x = scipy.linalg.solve(A, h, assume_a="pos")
    return max(float(np.real(np.vdot(h, x))), 0.0)


def _full_matrix(H: np.ndarray, E_sum: np.ndarray, rho_d: float) -> np.ndarray:
    # B = sum_u h_u h_u^H + sum_u E_u + I/rho_d for every trial
    M = H.shape[-1]
    return np.einsum("tkm,tkn->tmn", H, H.conj()) + E_sum + np.eye(M) / rho_d


def mmse_snr_batch(H: np.ndarray, E_sum: np.ndarray, rho_d: float) -> np.ndarray:
    """MMSE SNRs for stacked estimates ``H`` of shape ``(trials, K, M)``.

    One solve per trial: with ``B`` the all-user matrix and
    ``q_k = h_k^H B^-1 h_k``, the matrix inversion lemma gives
    ``gamma_k = q_k / (1 - q_k)``.
    """
    B = _full_matrix(H, E_sum, rho_d)
    X = np.linalg.solve(B, np.swapaxes(H, 1, 2))
    q = np.real(np.einsum("tkm,tmk->tk", H.conj(), X))
    return np.clip(q / (1.0 - q), 0.0, None)


def achievable_rate(
    snr: Union[np.ndarray, Callable[[int], np.ndarray]],
    trials: Optional[int] = None,
) -> RateEstimate:
    """Mean of ``log2(1 + gamma_k)`` over trials, with standard errors.

    ``snr`` is either an array of shape ``(trials, K)`` or a callable mapping
    a trial index to the per-user SNR vector of that trial.
    """
    if callable(snr):
        if trials is None or trials < 1:
            raise ValueError("trials must be a positive integer")
        g = np.array([np.atleast_1d(snr(t)) for t in range(trials)], dtype=float)
    else:
        g = np.asarray(snr, dtype=float)
        if g.ndim == 1:
            g = g[:, None]
    n = g.shape[0]
    r = np.log2(1.0 + g)
    se = r.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(r.shape[1])
    return RateEstimate(r.mean(axis=0), se, n)


def partition_contiguous(M: int, G: int) -> GroupPartition:
    """Split ``M`` antennas into ``G`` adjacent groups, larger groups first."""
    if not 1 <= G <= M:
        raise ValueError(f"group count must lie in [1, {M}], got {G}")
    base, extra = divmod(M, G)
    bounds, pos = [], 0
    for g in range(G):
        size = base + (1 if g < extra else 0)
        bounds.append((pos, pos + size))
        pos += size
    return GroupPartition(tuple(bounds))


def _check_partition(partition: GroupPartition, M: int):
    if partition.M != M:
        raise ValueError(f"partition covers {partition.M} antennas, channel has {M}")


def small_mimo_filter(
    estimates: Sequence[EstimationStats],
    rho_d: float,
    partition: GroupPartition,
    k: int,
    weights: str = "mrc",
    solve_dims: Optional[list] = None,
) -> np.ndarray:
    """Composite length-M filter of grouped processing for user ``k``.

    Group ``g`` applies its local MMSE filter ``J_g h_k^g``; the group outputs
    are combined with MRC weights ``w_g = (h_k^g)^H J_g h_k^g`` (or unit
    weights with ``weights="unit"``). The returned ``u`` satisfies
    ``x_hat_k = u^H y``.

    If ``solve_dims`` is a list, the dimension of every linear solve is
    appended to it.
    """
    if weights not in ("mrc", "unit"):
        raise ValueError("weights must be 'mrc' or 'unit'")
    H, E_sum = _stack(estimates)
    _check_partition(partition, H.shape[1])
    u = np.zeros(H.shape[1], dtype=complex)
    for a, b in partition:
        Hg = H[:, a:b]
        others = np.delete(Hg, k, axis=0)
        J_inv = others.T @ others.conj() + E_sum[a:b, a:b] + np.eye(b - a) / rho_d
        v = scipy.linalg.solve(J_inv, Hg[k], assume_a="pos")
        if solve_dims is not None:
            solve_dims.append(b - a)
        w = np.real(np.vdot(Hg[k], v)) if weights == "mrc" else 1.0
        u[a:b] = w * v
    return u


def small_mimo_detect(
    estimates: Sequence[EstimationStats],
    rho_d: float,
    partition: GroupPartition,
    y: np.ndarray,
    k: int,
    weights: str = "mrc",
    solve_dims: Optional[list] = None,
) -> complex:
    """Grouped detection output ``x_hat_k`` for a received vector ``y``."""
    u = small_mimo_filter(estimates, rho_d, partition, k, weights, solve_dims)
    return complex(np.vdot(u, y))


def small_mimo_snr_batch(
    H: np.ndarray,
    E_sum: np.ndarray,
    rho_d: float,
    partition: GroupPartition,
    weights: str = "mrc",
) -> np.ndarray:
    """Post-combining SNRs of grouped processing, shape ``(trials, K)``.

    For each trial the combined filter ``u_k`` is formed and its SNR is the
    ratio of the desired-signal power to the conditional power of the
    aggregate interference-plus-noise term given the estimates (estimation
    error, other users, noise).
    """
    T, K, M = H.shape
    _check_partition(partition, M)
    B = _full_matrix(H, E_sum, rho_d)
    U = np.zeros((T, M, K), dtype=complex)
    for a, b in partition:
        Hg = H[:, :, a:b]
        X = np.linalg.solve(B[:, a:b, a:b], np.swapaxes(Hg, 1, 2))
        q = np.real(np.einsum("tkm,tmk->tk", Hg.conj(), X))
        # J_k^g h_k^g = B_g^-1 h_k^g / (1 - q_k^g)
        V = X / (1.0 - q)[:, None, :]
        if weights == "mrc":
            w = q / (1.0 - q)
            V = V * w[:, None, :]
        U[:, a:b, :] = V
    sig = np.einsum("tmk,tkm->tk", U.conj(), H)
    tot = np.real(np.einsum("tmk,tmk->tk", U.conj(), B @ U))
    den = tot - np.abs(sig) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(den > 0, np.abs(sig) ** 2 / den, 0.0)
    return np.clip(g, 0.0, None)


def small_mimo_rate(
    H: np.ndarray,
    E_sum: np.ndarray,
    rho_d: float,
    partition: GroupPartition,
) -> RateEstimate:
    """Achievable rate of grouped processing over stacked trials."""
    return achievable_rate(small_mimo_snr_batch(H, E_sum, rho_d, partition))


def residual_power(
    u: np.ndarray,
    estimates: Sequence[EstimationStats],
    rho_d: float,
    k: int,
    rng: np.random.Generator,
    draws: int = 10000,
) -> tuple[float, float]:
    """Empirical desired-signal and residual powers at the output of filter ``u``.

    Draws estimation errors from ``CN(0, E_u)``, unit-power symbols and
    receiver noise, forms ``x_hat = u^H y`` and splits off the desired term
    ``sqrt(rho_d) u^H h_hat_k x_k``. Returns ``(signal_power, residual_var)``;
    their ratio estimates the worst-case-noise SNR of ``u``.
    """
    H, _ = _stack(estimates)
    K, M = H.shape
    x = sample_cscg(rng, (draws, K))
    n = sample_cscg(rng, (draws, M))
    channels = np.empty((draws, K, M), dtype=complex)
    for j, e in enumerate(estimates):
        F = covariance_sqrt(e.E)
        channels[:, j, :] = H[j] + sample_cscg(rng, (draws, M)) @ F.T
    y = math.sqrt(rho_d) * np.einsum("dkm,dk->dm", channels, x) + n
    xhat = y @ u.conj()
    a = math.sqrt(rho_d) * np.vdot(u, H[k])
    resid = xhat - a * x[:, k]
    return float(abs(a) ** 2), float(np.mean(np.abs(resid) ** 2))
