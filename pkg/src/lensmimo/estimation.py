"""Orthogonal-pilot uplink training and MMSE channel estimation.

Pilots are never materialised: with orthonormal pilot columns, projecting the
training block onto user k's pilot and scaling by ``1/sqrt(rho_tr)`` leaves
``h_k + n_k / sqrt(rho_tr)`` with ``n_k ~ CN(0, I)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel_model import sample_cscg

__all__ = [
    "PilotConfig",
    "EstimationStats",
    "PERFECT_CSI_RHO",
    "simulate_training",
    "mmse_matrix",
    "mmse_estimate",
    "estimation_covariances",
    "estimate",
]

# Above this training SNR the perfect-CSI limit (E = 0, h_hat = y) is used.
PERFECT_CSI_RHO = 1e12


@dataclass(frozen=True)
class PilotConfig:
    """Training length ``tau`` (symbols) and linear training SNR ``rho_tr``."""

    tau: int
    rho_tr: float

    def __post_init__(self):
        if int(self.tau) != self.tau or self.tau < 1:
            raise ValueError("training length must be a positive integer")
        if not self.rho_tr > 0:
            raise ValueError("training SNR must be positive; rho_tr = 0 is not supported")

    def check_users(self, K: int):
        if self.tau < K:
            raise ValueError(f"{K} users need at least {K} training symbols, got tau={self.tau}")


@dataclass
class EstimationStats:
    """MMSE estimate of one user's channel with its second-order statistics."""

    h_hat: np.ndarray
    C: np.ndarray
    E: np.ndarray


def simulate_training(
    channels: Sequence[np.ndarray],
    pilots: PilotConfig,
    rng: np.random.Generator,
) -> list[np.ndarray]:
    """Per-user projected training observations ``h_k + n_k / sqrt(rho_tr)``.

    ``rho_tr = inf`` gives noise-free observations.
    """
    pilots.check_users(len(channels))
    out = []
    for h in channels:
        h = np.asarray(h)
        if math.isinf(pilots.rho_tr):
            out.append(h.astype(complex, copy=True))
        else:
            out.append(h + sample_cscg(rng, h.shape) / math.sqrt(pilots.rho_tr))
    return out


def _check_rho(rho_tr: float):
    if not rho_tr > 0:
        raise ValueError("training SNR must be positive")


def _spectral(R: np.ndarray):
    R = np.asarray(R)
    w, U = np.linalg.eigh((R + R.conj().T) / 2)
    return np.clip(w, 0.0, None), U


def mmse_matrix(R: np.ndarray, rho_tr: float) -> np.ndarray:
    """Linear MMSE estimator ``R (R + I/rho_tr)^-1`` as a matrix.

    Evaluated in the eigenbasis of ``R`` so the result stays accurate when
    ``R`` is rank deficient and ``rho_tr`` is large.
    """
    _check_rho(rho_tr)
    R = np.asarray(R)
    dead = np.all(R == 0, axis=1)
    if rho_tr >= PERFECT_CSI_RHO:
        W = np.eye(R.shape[0], dtype=complex)
    else:
        w, U = _spectral(R)
        W = (U * (w / (w + 1.0 / rho_tr))) @ U.conj().T
    # exact zeros on dead (unpowered) elements
    W[dead, :] = 0
    W[:, dead] = 0
    return W


def mmse_estimate(R: np.ndarray, rho_tr: float, y_tr: np.ndarray) -> np.ndarray:
    """MMSE channel estimate from a projected training observation.

    ``y_tr`` may be a single vector of length M or a stack ``(n, M)``.
    """
    W = mmse_matrix(R, rho_tr)
    y_tr = np.asarray(y_tr)
    return y_tr @ W.T


def estimation_covariances(R: np.ndarray, rho_tr: float) -> tuple[np.ndarray, np.ndarray]:
    """Estimate covariance ``C`` and error covariance ``E = R - C``.

    ``C = R (R + I/rho_tr)^-1 R``; both are returned exactly Hermitian.
    """
    _check_rho(rho_tr)
    R = np.asarray(R, dtype=complex)
    if rho_tr >= PERFECT_CSI_RHO:
        return R.copy(), np.zeros_like(R)
    w, U = _spectral(R)
    c = w * w / (w + 1.0 / rho_tr)
    e = w / (1.0 + rho_tr * w)
    C = (U * c) @ U.conj().T
    E = (U * e) @ U.conj().T
    C = (C + C.conj().T) / 2
    E = (E + E.conj().T) / 2
    dead = np.all(R == 0, axis=1)
    for X in (C, E):
        X[dead, :] = 0
        X[:, dead] = 0
    return C, E


def estimate(R: np.ndarray, rho_tr: float, y_tr: np.ndarray) -> EstimationStats:
    """Bundle the estimate of one observation with its covariances."""
    C, E = estimation_covariances(R, rho_tr)
    return EstimationStats(mmse_estimate(R, rho_tr, y_tr), C, E)
