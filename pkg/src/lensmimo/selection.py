"""Receive antenna selection.

The covariance-based schemes score a subset by the sum over users of
``log2(1 + bound_k)``, where the average-SNR bound is recomputed from the
covariances restricted to the subset (unselected antennas are never
trained). The instantaneous-CSI benchmark re-selects per channel realization
using the MMSE SNRs of that realization.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .analysis import SnrBoundInputs, avg_snr_bounds

__all__ = [
    "SelectionResult",
    "MAX_EXHAUSTIVE",
    "subset_sum_rate",
    "greedy_select",
    "exhaustive_select",
    "instantaneous_csi_select",
]

MAX_EXHAUSTIVE = 10**6


@dataclass
class SelectionResult:
    """Chosen antennas in selection order with the score after each step.

    ``trace`` holds, for greedy schemes, one ``{candidate: score}`` dict per
    step.
    """

    chosen: list[int]
    surrogate_rate: list[float]
    trace: list[dict] = field(default_factory=list)


def _check_n(N: int, M: int):
    if not 1 <= N <= M:
        raise ValueError(f"number of selected antennas must lie in [1, {M}], got {N}")


def subset_sum_rate(inputs: SnrBoundInputs, subset: Sequence[int]) -> float:
    """Covariance-based sum-rate surrogate of an antenna subset."""
    idx = sorted(set(int(i) for i in subset))
    if not idx:
        raise ValueError("subset must be nonempty")
    if idx[0] < 0 or idx[-1] >= inputs.M:
        raise ValueError(f"subset indices must lie in [0, {inputs.M})")
    g = avg_snr_bounds(inputs.restrict(idx))
    return float(np.sum(np.log2(1.0 + g)))


def greedy_select(inputs: SnrBoundInputs, N: int) -> SelectionResult:
    """Add one antenna at a time, each maximizing the surrogate sum rate.

    Ties go to the lowest index.
    """
    _check_n(N, inputs.M)
    chosen: list[int] = []
    rates, trace = [], []
    remaining = list(range(inputs.M))
    while len(chosen) < N:
        scores = {n: subset_sum_rate(inputs, chosen + [n]) for n in remaining}
        best = max(remaining, key=lambda n: (scores[n], -n))
        chosen.append(best)
        remaining.remove(best)
        rates.append(scores[best])
        trace.append(scores)
    return SelectionResult(chosen, rates, trace)


def exhaustive_select(inputs: SnrBoundInputs, N: int, max_subsets: int = MAX_EXHAUSTIVE) -> SelectionResult:
    """Best N-subset by enumeration; ties keep the lexicographically first."""
    _check_n(N, inputs.M)
    count = math.comb(inputs.M, N)
    if count > max_subsets:
        raise ValueError(
            f"exhaustive search over C({inputs.M},{N}) = {count} subsets exceeds the cap of {max_subsets}"
        )
    best, best_rate = None, -math.inf
    for subset in itertools.combinations(range(inputs.M), N):
        r = subset_sum_rate(inputs, subset)
        if r > best_rate:
            best, best_rate = list(subset), r
    rates = [subset_sum_rate(inputs, best[: i + 1]) for i in range(N - 1)] + [best_rate]
    return SelectionResult(best, rates)


def _subset_sum_rates(H: np.ndarray, E_sum: np.ndarray, rho_d: float, subsets: np.ndarray) -> np.ndarray:
    # H: (K, M); subsets: (c, s) index rows; returns realized sum rate per row
    Hs = H[:, subsets].transpose(1, 0, 2)
    Es = E_sum[subsets[:, :, None], subsets[:, None, :]]
    s = subsets.shape[1]
    B = np.einsum("ckm,ckn->cmn", Hs, Hs.conj()) + Es + np.eye(s) / rho_d
    X = np.linalg.solve(B, np.swapaxes(Hs, 1, 2))
    q = np.real(np.einsum("ckm,cmk->ck", Hs.conj(), X))
    g = np.clip(q / (1.0 - q), 0.0, None)
    return np.log2(1.0 + g).sum(axis=1)


def instantaneous_csi_select(H: np.ndarray, E_sum: np.ndarray, rho_d: float, N: int) -> SelectionResult:
    """Greedy selection on one realization of the channel estimates.

    ``H`` holds the estimates of all users on all antennas, shape ``(K, M)``;
    ``E_sum`` is the summed error covariance. The score is the realized sum
    of ``log2(1 + gamma_k)`` with MMSE detection on the subset.
    """
    H = np.atleast_2d(np.asarray(H))
    M = H.shape[1]
    _check_n(N, M)
    E_sum = np.asarray(E_sum)
    chosen: list[int] = []
    rates = []
    remaining = np.arange(M)
    while len(chosen) < N:
        cand = np.column_stack([np.tile(chosen, (len(remaining), 1)).astype(int), remaining])
        cand.sort(axis=1)
        scores = _subset_sum_rates(H, E_sum, rho_d, cand)
        j = int(np.argmax(scores))  # first maximum, i.e. lowest index
        chosen.append(int(remaining[j]))
        rates.append(float(scores[j]))
        remaining = np.delete(remaining, j)
    return SelectionResult(chosen, rates)
