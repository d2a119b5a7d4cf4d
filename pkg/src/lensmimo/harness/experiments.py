"""Scenario runners that turn an :class:`ExperimentConfig` into result rows.

Monte-Carlo streams are keyed by sweep index (and a fixed offset for
secondary benchmarks), so every row is a pure function of the config and
seed, whatever the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

import numpy as np

from ..analysis import SnrBoundInputs, avg_snr_bounds, covariance_eigenvalues, single_user_avg_snr
from ..channel_model import (
    ArrayGeometry,
    LensProfile,
    UserProfile,
    apply_lens_covariance,
    gaussian_pas_covariance,
    lens_power_distribution,
    peak_map_linear,
    sample_cscg,
)
from ..montecarlo import CHUNK, UplinkModel, default_threads, simulate, trial_rng
from ..receiver import mmse_snr_batch, partition_contiguous, small_mimo_snr_batch
from ..selection import greedy_select, instantaneous_csi_select
from .config import ConfigError, ExperimentConfig
from .results import ResultRow, to_db

__all__ = ["nominal_aoa_grid", "peak_map_linear", "run_experiment", "NumericalError", "System"]

NAN = float("nan")
SYSTEMS = ("lens", "nolens")
# stream offset of the instantaneous-CSI selection benchmark
_CSI_STREAM = 1000


class NumericalError(RuntimeError):
    """A simulation produced non-finite values."""


def nominal_aoa_grid(K: int, coverage: float) -> np.ndarray:
    """``K`` AoAs equally spaced over ``[-coverage, coverage]``; a single user sits at 0."""
    if K < 1:
        raise ValueError("K must be at least 1")
    if K == 1:
        return np.zeros(1)
    return np.linspace(-coverage, coverage, K)


class System:
    """Array, lens and user statistics shared by all experiments."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        try:
            self.geom = ArrayGeometry(cfg.M, cfg.d, cfg.coverage)
            self.lens = LensProfile(self.geom, cfg.lens_delta, cfg.lens_variance * cfg.d**2)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def covariances(self, aoas, lens: bool) -> np.ndarray:
        out = []
        for theta in aoas:
            R = gaussian_pas_covariance(self.geom, UserProfile(self.cfg.beta, float(theta), self.cfg.spread))
            if lens:
                R = apply_lens_covariance(R, lens_power_distribution(self.lens, float(theta)))
            out.append(R)
        return np.array(out)

    def aoas(self, K: Optional[int] = None) -> np.ndarray:
        cfg = self.cfg
        if cfg.aoas_deg is not None and K in (None, cfg.K):
            return np.radians(np.asarray(cfg.aoas_deg, dtype=float))
        return nominal_aoa_grid(cfg.K if K is None else K, cfg.coverage)


def _mmse(model: UplinkModel, h, h_hat):
    return mmse_snr_batch(h_hat, model.error_sum, model.rho_d)


def _mean_se(x: np.ndarray):
    n = x.shape[0]
    m = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(np.shape(m), NAN)
    return m, se


def _snr_db_rows(tag, sweep, users, g, trials, seed):
    # delta-method standard error of 10 log10(mean)
    m, se = _mean_se(g)
    rows = []
    for label, k in users:
        se_db = 10 / math.log(10) * se[k] / m[k] if m[k] > 0 else NAN
        rows.append(ResultRow(tag, float(sweep), label, "avg_snr_db", to_db(m[k]), float(se_db), trials, seed))
    return rows


def _sum_rate_row(tag, sweep, g, trials, seed, user="sum"):
    r = np.log2(1.0 + g).sum(axis=1)
    m, se = _mean_se(r)
    return ResultRow(tag, float(sweep), user, "sum_rate", float(m), float(se), trials, seed)


def _per_trial(trials: int, seed: int, stream: int, fn: Callable, threads: Optional[int]) -> np.ndarray:
    """Stack ``fn(rng)`` over trials, each with its own keyed generator."""
    chunks = [range(s, min(s + CHUNK, trials)) for s in range(0, trials, CHUNK)]

    def work(rr):
        return [fn(trial_rng(seed, stream, t)) for t in rr]

    threads = default_threads() if threads is None else max(1, threads)
    if threads == 1 or len(chunks) == 1:
        parts = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, chunks))
    return np.array([v for p in parts for v in p])


def _fig5(cfg: ExperimentConfig, sys_: System, threads):
    aoas = sys_.aoas(1) if cfg.aoas_deg is None else sys_.aoas()
    rows = []
    for i, rho_tr_db in enumerate(cfg.sweep):
        rho_tr = 10 ** (rho_tr_db / 10)
        Rs = {s: sys_.covariances(aoas[:1], s == "lens") for s in SYSTEMS}
        for s in SYSTEMS:
            eigs = covariance_eigenvalues(Rs[s][0])
            theory = single_user_avg_snr(eigs, rho_tr, cfg.rho_d)
            rows.append(ResultRow(f"fig5:{s}", float(rho_tr_db), 0, "theory_snr_db", to_db(theory), NAN, 0, cfg.seed))
        if cfg.theory_only:
            continue
        models = [UplinkModel(Rs[s], rho_tr, cfg.rho_d) for s in SYSTEMS]
        res = simulate(models, cfg.trials, cfg.seed, i, _mmse, threads)
        for s, g in zip(SYSTEMS, res):
            rows += _snr_db_rows(f"fig5:{s}", rho_tr_db, [(0, 0)], g, cfg.trials, cfg.seed)
    return rows


def _multiuser(cfg: ExperimentConfig, sys_: System, threads):
    # fig6 and custom: per-user average SNR and bound versus rho_tr
    aoas = sys_.aoas()
    K = len(aoas)
    med = (K - 1) // 2
    users = [(k, k) for k in range(K)] + [("median", med)]
    Rs = {s: sys_.covariances(aoas, s == "lens") for s in SYSTEMS}
    rows = []
    for i, rho_tr_db in enumerate(cfg.sweep):
        rho_tr = 10 ** (rho_tr_db / 10)
        tags = {s: f"{cfg.experiment}:{s}" for s in SYSTEMS}
        for s in SYSTEMS:
            b = avg_snr_bounds(SnrBoundInputs(list(Rs[s]), rho_tr, cfg.rho_d))
            for label, k in users:
                rows.append(ResultRow(tags[s], float(rho_tr_db), label, "bound_snr_db", to_db(b[k]), NAN, 0, cfg.seed))
            rows.append(ResultRow(tags[s], float(rho_tr_db), "sum", "surrogate_rate", float(np.log2(1 + b).sum()), NAN, 0, cfg.seed))
        if cfg.theory_only:
            continue
        models = [UplinkModel(Rs[s], rho_tr, cfg.rho_d) for s in SYSTEMS]
        res = simulate(models, cfg.trials, cfg.seed, i, _mmse, threads)
        for s, g in zip(SYSTEMS, res):
            rows += _snr_db_rows(tags[s], rho_tr_db, users, g, cfg.trials, cfg.seed)
            rows.append(_sum_rate_row(tags[s], rho_tr_db, g, cfg.trials, cfg.seed))
    return rows


def _fig7(cfg: ExperimentConfig, sys_: System, threads):
    rows = []
    M = cfg.M
    for i, K in enumerate(int(v) for v in cfg.sweep):
        if cfg.theory_only:
            # nominal equally spaced AoAs stand in for the random draw
            aoas = nominal_aoa_grid(K, cfg.coverage)
            for s in SYSTEMS:
                b = avg_snr_bounds(SnrBoundInputs(list(sys_.covariances(aoas, s == "lens")), cfg.rho_tr, cfg.rho_d))
                rows.append(ResultRow(f"fig7-sumrate-vs-K:{s}", float(K), "sum", "surrogate_rate", float(np.log2(1 + b).sum()), NAN, 0, cfg.seed))
            continue

        def trial(rng):
            aoas = rng.uniform(-cfg.coverage, cfg.coverage, K)
            z = sample_cscg(rng, (1, K, M))
            n = sample_cscg(rng, (1, K, M))
            out = []
            for s in SYSTEMS:
                model = UplinkModel(sys_.covariances(aoas, s == "lens"), cfg.rho_tr, cfg.rho_d)
                _, h_hat = model.estimates(z, n)
                out.append(np.log2(1.0 + _mmse(model, None, h_hat)[0]).sum())
            return out

        r = _per_trial(cfg.trials, cfg.seed, i, trial, threads)
        for j, s in enumerate(SYSTEMS):
            m, se = _mean_se(r[:, j])
            rows.append(ResultRow(f"fig7-sumrate-vs-K:{s}", float(K), "sum", "sum_rate", float(m), float(se), cfg.trials, cfg.seed))
    return rows


def _fig8(cfg: ExperimentConfig, sys_: System, threads):
    aoas = sys_.aoas()
    part = partition_contiguous(cfg.M, cfg.groups)
    Rs = {s: sys_.covariances(aoas, s == "lens") for s in SYSTEMS}
    rows = []

    def metric(model, h, h_hat):
        return np.stack(
            [_mmse(model, h, h_hat), small_mimo_snr_batch(h_hat, model.error_sum, model.rho_d, part)],
            axis=1,
        )

    for i, rho_tr_db in enumerate(cfg.sweep):
        rho_tr = 10 ** (rho_tr_db / 10)
        if cfg.theory_only:
            for s in SYSTEMS:
                b = avg_snr_bounds(SnrBoundInputs(list(Rs[s]), rho_tr, cfg.rho_d))
                rows.append(ResultRow(f"fig8-smallmimo:{s}:full", float(rho_tr_db), "sum", "surrogate_rate", float(np.log2(1 + b).sum()), NAN, 0, cfg.seed))
            continue
        models = [UplinkModel(Rs[s], rho_tr, cfg.rho_d) for s in SYSTEMS]
        res = simulate(models, cfg.trials, cfg.seed, i, metric, threads)
        for s, g in zip(SYSTEMS, res):
            for j, kind in enumerate(("full", "small")):
                rows.append(_sum_rate_row(f"fig8-smallmimo:{s}:{kind}", rho_tr_db, g[:, j], cfg.trials, cfg.seed))
    return rows


def _fig9(cfg: ExperimentConfig, sys_: System, threads):
    aoas = sys_.aoas()
    Ns = [int(v) for v in cfg.sweep]
    Nmax = max(Ns)
    Rs = {s: sys_.covariances(aoas, s == "lens") for s in SYSTEMS}
    chosen = {}
    rows = []
    for s in SYSTEMS:
        # greedy prefixes are the greedy selections for every smaller N
        sel = greedy_select(SnrBoundInputs(list(Rs[s]), cfg.rho_tr, cfg.rho_d), Nmax)
        chosen[s] = sel.chosen
        for N in Ns:
            rows.append(ResultRow(f"fig9-selection:{s}:cov", float(N), "sum", "surrogate_rate", sel.surrogate_rate[N - 1], NAN, 0, cfg.seed))
    if cfg.theory_only:
        return rows
    for N in Ns:
        models = [UplinkModel(Rs[s], cfg.rho_tr, cfg.rho_d, subset=sorted(chosen[s][:N])) for s in SYSTEMS]
        # same stream for every N: curves share draws
        res = simulate(models, cfg.trials, cfg.seed, 0, _mmse, threads)
        for s, g in zip(SYSTEMS, res):
            rows.append(_sum_rate_row(f"fig9-selection:{s}:cov", N, g, cfg.trials, cfg.seed))
    # instantaneous-CSI benchmark: all antennas trained, RF chains re-selected per realization
    full = [UplinkModel(Rs[s], cfg.rho_tr, cfg.rho_d) for s in SYSTEMS]
    K, M = len(aoas), cfg.M

    def trial(rng):
        z = sample_cscg(rng, (1, K, M))
        n = sample_cscg(rng, (1, K, M))
        out = []
        for model in full:
            _, h_hat = model.estimates(z, n)
            out.append(instantaneous_csi_select(h_hat[0], model.error_sum, cfg.rho_d, Nmax).surrogate_rate)
        return out

    r = _per_trial(cfg.trials, cfg.seed, _CSI_STREAM, trial, threads)
    for j, s in enumerate(SYSTEMS):
        for N in Ns:
            m, se = _mean_se(r[:, j, N - 1])
            rows.append(ResultRow(f"fig9-selection:{s}:csi", float(N), "sum", "sum_rate", float(m), float(se), cfg.trials, cfg.seed))
    return rows


_RUNNERS = {
    "fig5": _fig5,
    "fig6": _multiuser,
    "custom": _multiuser,
    "fig7-sumrate-vs-K": _fig7,
    "fig8-smallmimo": _fig8,
    "fig9-selection": _fig9,
}


def run_experiment(cfg: ExperimentConfig, threads: Optional[int] = None) -> list[ResultRow]:
    """Run the configured scenario and return its rows (no file output)."""
    cfg.validate()
    sys_ = System(cfg)
    try:
        rows = _RUNNERS[cfg.experiment](cfg, sys_, threads)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(str(exc)) from exc
    for r in rows:
        if not math.isfinite(r.value):
            raise NumericalError(f"non-finite {r.metric} for {r.experiment} at {r.sweep_value}")
    return rows
