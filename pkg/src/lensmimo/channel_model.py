"""Channel covariance construction and channel sampling for a ULA with an
optional energy-focusing lens.

All lengths are in units of the carrier wavelength, so the element spacing
``d`` is dimensionless. Antenna indices are 0-based throughout the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr

__all__ = [
    "ArrayGeometry",
    "UserProfile",
    "LensProfile",
    "PowerDistribution",
    "gaussian_pas_covariance",
    "peak_map_linear",
    "peak_index",
    "lens_power_distribution",
    "assumption1_check",
    "apply_lens_covariance",
    "lensed_covariance",
    "covariance_sqrt",
    "sample_cscg",
    "sample_channel",
    "sample_channel_rays",
]

# Relative PSD slack: eigenvalues in [-PSD_TOL * lambda_max, 0) are clipped.
PSD_TOL = 1e-9


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array centred at the origin.

    Parameters
    ----------
    M : int
        Number of elements.
    d : float
        Element spacing in wavelengths.
    coverage : float
        Coverage half-angle in radians, in (0, pi].
    """

    M: int
    d: float = 1.0
    coverage: float = math.pi / 3

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"element count must be a positive integer, got {self.M!r}")
        if not self.d > 0:
            raise ValueError(f"element spacing must be positive, got {self.d!r}")
        if not 0 < self.coverage <= math.pi:
            raise ValueError(f"coverage angle must lie in (0, pi], got {self.coverage!r}")

    @property
    def positions(self) -> np.ndarray:
        return -(self.M - 1) * self.d / 2 + np.arange(self.M) * self.d


@dataclass(frozen=True)
class UserProfile:
    """Large-scale parameters of one user terminal."""

    beta: float = 1.0
    theta: float = 0.0
    spread: float = math.radians(10.0)
    rays: int = 100

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("large-scale gain must be nonnegative")
        if self.spread < 0:
            raise ValueError("angular spread must be nonnegative")
        if int(self.rays) != self.rays or self.rays < 1:
            raise ValueError("ray count must be a positive integer")


def peak_map_linear(geom: ArrayGeometry, delta: int) -> Callable[[float], float]:
    """Peak location sweeping linearly from element ``delta`` (AoA = -coverage)
    to element ``M - 1 - delta`` (AoA = +coverage)."""
    if not delta < geom.M / 2:
        raise ValueError("linear peak map needs delta < M/2")
    y = geom.positions
    lo, hi = y[delta], y[geom.M - 1 - delta]
    span = 2 * geom.coverage

    def peak_map(theta: float) -> float:
        return lo + (theta + geom.coverage) / span * (hi - lo)

    return peak_map


def peak_index(geom: ArrayGeometry, ybar: float) -> int:
    """Index of the element nearest ``ybar``; exact midpoints go to the lower index."""
    u = (ybar - geom.positions[0]) / geom.d
    m = math.ceil(u - 0.5)
    return min(max(m, 0), geom.M - 1)


@dataclass(frozen=True)
class LensProfile:
    """Lens focusing model: Gaussian power density of variance ``variance``
    centred at ``peak_map(theta)``, truncated to ``delta`` elements on each
    side of the peak element.

    The support constraint ``delta <= min(m*(-coverage), M - 1 - m*(coverage))``
    is checked at construction.
    """

    geom: ArrayGeometry
    delta: int = 2
    variance: float = 0.5
    peak_map: Optional[Callable[[float], float]] = field(default=None, compare=False)

    def __post_init__(self):
        if int(self.delta) != self.delta or self.delta < 0:
            raise ValueError("lens half-width must be a nonnegative integer")
        if not self.variance > 0:
            raise ValueError("lens power spread must be positive")
        if self.peak_map is None:
            object.__setattr__(self, "peak_map", peak_map_linear(self.geom, self.delta))
        geom = self.geom
        lo = self.peak(-geom.coverage)
        hi = self.peak(geom.coverage)
        if self.delta > min(lo, geom.M - 1 - hi):
            raise ValueError(
                f"lens half-width {self.delta} does not fit inside the array "
                f"(edge peaks at elements {lo} and {hi})"
            )
        grid = np.linspace(-geom.coverage, geom.coverage, 101)
        ybar = np.array([self.peak_map(t) for t in grid])
        if np.any(np.diff(ybar) < -1e-12 * geom.d):
            raise ValueError("peak map must be nondecreasing over the coverage range")

    def peak(self, theta: float) -> int:
        return peak_index(self.geom, self.peak_map(theta))


@dataclass(frozen=True)
class PowerDistribution:
    """Per-element power fractions (times M) after the lens for one AoA."""

    a: np.ndarray
    peak: int
    delta: Optional[int] = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    def __len__(self):
        return len(self.a)

    @classmethod
    def uniform(cls, M: int) -> "PowerDistribution":
        """The no-lens distribution, all ones."""
        return cls(np.ones(M), peak=0, delta=None)


def gaussian_pas_covariance(geom: ArrayGeometry, user: UserProfile) -> np.ndarray:
    """Spatial covariance of a ULA under a Gaussian power azimuth spectrum
    with small angular spread (closed form, Hermitian Toeplitz, diagonal
    equal to ``beta``)."""
    k = 2 * np.pi * geom.d * (np.arange(geom.M)[:, None] - np.arange(geom.M)[None, :])
    amp = np.exp(-(user.spread**2) / 2 * (k * math.cos(user.theta)) ** 2)
    R = user.beta * amp * np.exp(1j * k * math.sin(user.theta))
    # symmetrise exactly; exp of negated argument may differ in the last ulp
    return (R + R.conj().T) / 2


def lens_power_distribution(lens: LensProfile, theta: float) -> PowerDistribution:
    """Bin-integrated, truncated and renormalised lens power distribution."""
    geom = lens.geom
    if abs(theta) > geom.coverage * (1 + 1e-12):
        raise ValueError(f"AoA {theta} outside [-{geom.coverage}, {geom.coverage}]")
    ybar = lens.peak_map(theta)
    m_star = peak_index(geom, ybar)
    lo = max(m_star - lens.delta, 0)
    hi = min(m_star + lens.delta, geom.M - 1)
    y = geom.positions[lo : hi + 1]
    s = math.sqrt(lens.variance)
    mass = ndtr((y + geom.d / 2 - ybar) / s) - ndtr((y - geom.d / 2 - ybar) / s)
    a = np.zeros(geom.M)
    a[lo : hi + 1] = mass * (geom.M / mass.sum())
    return PowerDistribution(a, peak=m_star, delta=lens.delta)


def assumption1_check(
    dist: PowerDistribution | np.ndarray,
    peak: Optional[int] = None,
    delta: Optional[int] = None,
    rtol: float = 1e-12,
) -> tuple[bool, list[str]]:
    """Check a power distribution against the lens structure assumptions.

    The vector must differ from the all-ones vector, be nonincreasing when
    walking away from the peak in either direction, and vanish outside
    ``[peak - delta, peak + delta]``.

    Returns
    -------
    ok : bool
    violations : list of str
        Human-readable reasons; empty when ``ok``.
    """
    if isinstance(dist, PowerDistribution):
        a = dist.a
        peak = dist.peak if peak is None else peak
        delta = dist.delta if delta is None else delta
    else:
        a = np.asarray(dist, dtype=float)
    if peak is None:
        peak = int(np.argmax(a))
    M = len(a)
    slack = rtol * max(float(np.max(np.abs(a))), 1.0)
    problems = []
    if np.allclose(a, 1.0, rtol=0, atol=slack):
        problems.append("vector equals the all-ones vector")
    if np.any(a < -slack):
        problems.append("negative entries")
    left = a[: peak + 1][::-1]
    right = a[peak:]
    for side, seq in (("left", left), ("right", right)):
        bad = np.nonzero(np.diff(seq) > slack)[0]
        if bad.size:
            problems.append(f"increases moving {side} from the peak at offset {int(bad[0]) + 1}")
    if delta is not None:
        idx = np.arange(M)
        outside = (np.abs(idx - peak) > delta) & (np.abs(a) > slack)
        if outside.any():
            problems.append(f"nonzero outside support at indices {idx[outside].tolist()}")
    return not problems, problems


def apply_lens_covariance(R: np.ndarray, dist: PowerDistribution | np.ndarray) -> np.ndarray:
    """Effective covariance ``sqrt(A) R sqrt(A)`` with ``A = diag(a)``."""
    a = dist.a if isinstance(dist, PowerDistribution) else np.asarray(dist, dtype=float)
    R = np.asarray(R)
    if R.shape != (len(a), len(a)):
        raise ValueError(f"covariance shape {R.shape} does not match distribution length {len(a)}")
    if np.any(a < 0):
        raise ValueError("power distribution must be nonnegative")
    s = np.sqrt(a)
    return s[:, None] * R * s[None, :]


def lensed_covariance(
    geom: ArrayGeometry, user: UserProfile, lens: Optional[LensProfile] = None
) -> np.ndarray:
    """Gaussian-PAS covariance of ``user``, passed through ``lens`` if given."""
    R = gaussian_pas_covariance(geom, user)
    if lens is None:
        return R
    return apply_lens_covariance(R, lens_power_distribution(lens, user.theta))


def covariance_sqrt(R: np.ndarray) -> np.ndarray:
    """Hermitian square root of a PSD matrix, clipping noise-level negative
    eigenvalues to zero."""
    R = np.asarray(R)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError("covariance must be square")
    scale = max(float(np.max(np.abs(R))), np.finfo(float).tiny)
    if np.max(np.abs(R - R.conj().T)) > 1e-10 * scale:
        raise ValueError("covariance is not Hermitian")
    w, U = np.linalg.eigh((R + R.conj().T) / 2)
    lmax = max(float(w[-1]), 0.0)
    if w[0] < -PSD_TOL * lmax - np.finfo(float).tiny:
        raise ValueError(f"covariance is not PSD (min eigenvalue {w[0]:.3e})")
    w = np.clip(w, 0.0, None)
    return (U * np.sqrt(w)) @ U.conj().T


def sample_cscg(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance circularly symmetric complex Gaussian draws."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def sample_channel(R: np.ndarray, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Draw ``CN(0, R)`` vectors. Returns shape ``(M,)`` or ``(size, M)``."""
    F = covariance_sqrt(R)
    M = F.shape[0]
    z = sample_cscg(rng, (M,) if size is None else (size, M))
    return z @ F.T


def sample_channel_rays(
    geom: ArrayGeometry,
    user: UserProfile,
    rng: np.random.Generator,
    lens: Optional[LensProfile] = None,
    size: Optional[int] = None,
) -> np.ndarray:
    """Finite-ray channel synthesis.

    Each of the ``user.rays`` paths gets an AoA offset drawn from
    ``N(0, spread**2)``, unit power gain and an independent uniform phase.
    With a lens, element ``m`` is scaled by ``sqrt(a_m(theta))`` evaluated at
    the nominal AoA.
    """
    n = 1 if size is None else size
    L, M = user.rays, geom.M
    out = np.empty((n, M), dtype=complex)
    chunk = max(1, 2**20 // L)
    for s0 in range(0, n, chunk):
        c = min(chunk, n - s0)
        phi = rng.normal(0.0, user.spread, (c, L)) if user.spread > 0 else np.zeros((c, L))
        psi = rng.uniform(0.0, 2 * np.pi, (c, L))
        # steering phases by repeated multiplication: one exp per ray
        step = np.exp(2j * np.pi * geom.d * np.sin(user.theta + phi))
        v = np.exp(1j * psi)
        for j in range(M):
            out[s0 : s0 + c, j] = v.sum(axis=1)
            v *= step
    out *= math.sqrt(user.beta / L)
    if lens is not None:
        out *= np.sqrt(lens_power_distribution(lens, user.theta).a)
    return out[0] if size is None else out
