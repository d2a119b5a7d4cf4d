"""Seeded Monte-Carlo engine for the uplink training + detection chain.

Every trial draws its Gaussians from its own stream keyed by
``(seed, stream, trial)``, so results do not depend on chunking or on the
number of worker threads. Several models evaluated in one call see the same
underlying draws (common random numbers), which keeps lens/no-lens
differences low-variance.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .channel_model import PSD_TOL, covariance_sqrt, sample_cscg
from .estimation import PERFECT_CSI_RHO, estimation_covariances, mmse_matrix

__all__ = ["trial_rng", "UplinkModel", "simulate", "default_threads", "CHUNK"]

CHUNK = 250
THREADS_ENV = "LENSMIMO_THREADS"


def trial_rng(seed: int, stream: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, trial)))


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return 1


@dataclass
class UplinkModel:
    """Channel statistics of K users, optionally observed on an antenna subset.

    Channels are always generated on the full array from ``covariances``
    (shape ``(K, M, M)``). Training and detection use only the antennas in
    ``subset``; the estimator is built from the restricted covariances.
    """

    covariances: np.ndarray
    rho_tr: float
    rho_d: float
    subset: Optional[Sequence[int]] = None
    sqrt_cov: np.ndarray = field(init=False, repr=False)
    estimator: np.ndarray = field(init=False, repr=False)
    error_sum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        R = np.asarray(self.covariances, dtype=complex)
        if R.ndim == 2:
            R = R[None]
        self.covariances = R
        K, M, _ = R.shape
        if self.subset is None and self.rho_tr < PERFECT_CSI_RHO:
            # full array: one eigendecomposition per user gives everything
            self.subset = np.arange(M)
            w, U = np.linalg.eigh((R + np.conj(np.swapaxes(R, 1, 2))) / 2)
            lmax = np.clip(w[:, -1:], 0.0, None)
            if np.any(w < -PSD_TOL * lmax - np.finfo(float).tiny):
                raise ValueError("covariance is not PSD")
            w = np.clip(w, 0.0, None)
            Uh = np.conj(np.swapaxes(U, 1, 2))
            self.sqrt_cov = (U * np.sqrt(w)[:, None, :]) @ Uh
            W = (U * (w / (w + 1.0 / self.rho_tr))[:, None, :]) @ Uh
            E = (U * (w / (1.0 + self.rho_tr * w))[:, None, :]) @ Uh
            dead = np.all(R == 0, axis=2)
            for k in range(K):
                for X in (W[k], E[k]):
                    X[dead[k], :] = 0
                    X[:, dead[k]] = 0
            self.estimator = W
            self.error_sum = E.sum(axis=0)
            self.error_sum = (self.error_sum + self.error_sum.conj().T) / 2
            return
        idx = np.arange(M) if self.subset is None else np.asarray(self.subset, dtype=int)
        self.subset = idx
        self.sqrt_cov = np.array([covariance_sqrt(r) for r in R])
        sub = R[:, idx[:, None], idx[None, :]]
        self.estimator = np.array([mmse_matrix(r, self.rho_tr) for r in sub])
        E = [estimation_covariances(r, self.rho_tr)[1] for r in sub]
        self.error_sum = np.sum(E, axis=0)

    @property
    def K(self) -> int:
        return self.covariances.shape[0]

    @property
    def M(self) -> int:
        return self.covariances.shape[1]

    def estimates(self, z: np.ndarray, n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """True (restricted) channels and MMSE estimates from standard draws.

        ``z`` and ``n`` have shape ``(trials, K, M)``.
        """
        h = np.einsum("knm,tkm->tkn", self.sqrt_cov, z)[:, :, self.subset]
        y = h + n[:, :, self.subset] / math.sqrt(self.rho_tr)
        h_hat = np.einsum("knm,tkm->tkn", self.estimator, y)
        return h, h_hat


def _draws(seed: int, stream: int, trials: range, K: int, M: int):
    out = np.empty((len(trials), 2, K, M), dtype=complex)
    for i, t in enumerate(trials):
        out[i] = sample_cscg(trial_rng(seed, stream, t), (2, K, M))
    return out[:, 0], out[:, 1]


def simulate(
    models: Sequence[UplinkModel],
    trials: int,
    seed: int,
    stream: int,
    metric: Callable[[UplinkModel, np.ndarray, np.ndarray], np.ndarray],
    threads: Optional[int] = None,
) -> list[np.ndarray]:
    """Evaluate ``metric(model, h, h_hat)`` over ``trials`` shared draws.

    ``metric`` maps a chunk of true channels and estimates (each
    ``(n, K, M_sub)``) to per-trial values with leading dimension ``n``.
    Returns one stacked array per model, ordered by trial index.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    K, M = models[0].K, models[0].M
    for m in models:
        if (m.K, m.M) != (K, M):
            raise ValueError("models sharing draws must have the same K and M")
    chunks = [range(s, min(s + CHUNK, trials)) for s in range(0, trials, CHUNK)]

    def work(rng_range: range):
        z, n = _draws(seed, stream, rng_range, K, M)
        res = []
        for model in models:
            h, h_hat = model.estimates(z, n)
            res.append(np.asarray(metric(model, h, h_hat)))
        return res

    threads = default_threads() if threads is None else max(1, threads)
    if threads == 1 or len(chunks) == 1:
        parts = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, chunks))
    return [np.concatenate([p[i] for p in parts], axis=0) for i in range(len(models))]
