"""One-ring correlated frequency-selective MISO channels.

Covariances follow the one-ring scattering model: scatterers on an arc of
half-width ``delta`` around the mean angle of arrival ``theta`` seen by a
uniform linear array with spacing ``d_spacing`` wavelengths.  Each of the
``l_taps`` paths carries ``1/L`` of the power (uniform, normalised PDP), so
the per-path covariance has diagonal ``1/L`` and the aggregate over paths
has trace ``n_t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import toeplitz

from .errors import DimensionError, DomainError, NumericalError
from .linalg import RANK_RTOL, is_hermitian_psd, numerical_rank, psd_sqrt

SECTOR = (-math.pi / 3, math.pi / 3)
QUAD_TOL = 1e-10
# angle set used for the Delta-f grid reproduction
FIG_AOA_GRID = (-math.pi / 4, -math.pi / 7, 0.0, math.pi / 7, math.pi / 4)


@dataclass(frozen=True)
class OneRingModel:
    """Geometry of one node's scattering ring as seen from the base station."""

    theta: float
    delta: float
    d_spacing: float = 0.5
    n_t: int = 64
    l_taps: int = 1

    def __post_init__(self):
        if abs(self.theta) > SECTOR[1] + 1e-12:
            raise DomainError(f"mean AoA {self.theta} outside the +-pi/3 sector")
        if not 0.0 < self.delta < math.pi / 2:
            raise DomainError(f"angle spread must lie in (0, pi/2), got {self.delta}")
        if not 0.0 <= self.d_spacing <= 0.5:
            raise DomainError(f"antenna spacing must lie in [0, 1/2], got {self.d_spacing}")
        if self.n_t < 1 or self.l_taps < 1:
            raise DomainError("n_t and l_taps must be positive")


@dataclass(frozen=True)
class CovarianceMatrix:
    """Spatial covariance with an explicit trace convention.

    ``per_path`` matrices describe a single tap (diagonal ``1/L``);
    ``aggregate`` matrices sum all taps (trace ``n_t``).
    """

    entries: np.ndarray
    trace_convention: str = "per_path"
    l_taps: int = 1

    def __post_init__(self):
        if self.trace_convention not in ("per_path", "aggregate"):
            raise DomainError(f"unknown trace convention {self.trace_convention!r}")

    @property
    def n_t(self) -> int:
        return self.entries.shape[0]

    def aggregate(self) -> "CovarianceMatrix":
        if self.trace_convention == "aggregate":
            return self
        return CovarianceMatrix(self.entries * self.l_taps, "aggregate", self.l_taps)

    def per_path(self) -> "CovarianceMatrix":
        if self.trace_convention == "per_path":
            return self
        return CovarianceMatrix(self.entries / self.l_taps, "per_path", self.l_taps)

    def rank(self, rtol: float = RANK_RTOL) -> int:
        return numerical_rank(self.entries, rtol)

    def sqrt(self) -> np.ndarray:
        return psd_sqrt(self.entries)


@dataclass
class CirRealization:
    """Channel impulse responses of all antennas: ``taps[i, l]`` is tap l at antenna i."""

    taps: np.ndarray
    pdp: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.pdp is None:
            L = self.taps.shape[-1]
            self.pdp = np.full(L, 1.0 / L)

    @property
    def n_t(self) -> int:
        return self.taps.shape[0]

    @property
    def l_taps(self) -> int:
        return self.taps.shape[1]

    def frequency_response(self, f_rows: np.ndarray) -> np.ndarray:
        """Per-antenna frequency samples, shape ``(n_t, len(rows))``."""
        return self.taps @ f_rows.T


@dataclass(frozen=True)
class AoaModel:
    """Distribution of a node's mean angle of arrival."""

    kind: str = "CPD"
    k_support: int = 5
    support: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.kind not in ("CPD", "DPD"):
            raise DomainError(f"AoA model kind must be CPD or DPD, got {self.kind!r}")
        if self.k_support < 1:
            raise DomainError("k_support must be positive")
        if self.support is not None and len(self.support) != self.k_support:
            raise DomainError("explicit support length must equal k_support")

    def grid(self) -> np.ndarray:
        if self.support is not None:
            return np.asarray(self.support, dtype=float)
        if self.k_support == 1:
            return np.array([0.5 * (SECTOR[0] + SECTOR[1])])
        return np.linspace(SECTOR[0], SECTOR[1], self.k_support)


def _ring_correlation(lags: np.ndarray, theta: float, delta: float, d: float) -> np.ndarray:
    """``(1/(2*delta)) * int exp(-j 2 pi d lag sin(a)) da`` over the arc, for every lag.

    Composite Gauss-Legendre; the panel count doubles until successive
    estimates agree to ``QUAD_TOL``.
    """
    nodes, weights = np.polynomial.legendre.leggauss(32)
    lo, hi = theta - delta, theta + delta
    panels = max(1, int(math.ceil(2 * math.pi * d * max(np.max(np.abs(lags)), 1) * (hi - lo) / 20.0)))
    previous = None
    for _ in range(12):
        edges = np.linspace(lo, hi, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        angles = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        w = (half[:, None] * weights[None, :]).ravel()
        phase = np.exp(-2j * math.pi * d * np.outer(lags, np.sin(angles)))
        value = phase @ w / (2 * delta)
        if previous is not None and np.max(np.abs(value - previous)) < QUAD_TOL:
            return value
        previous = value
        panels *= 2
    raise NumericalError("one-ring quadrature did not converge")


def one_ring_covariance(model: OneRingModel) -> CovarianceMatrix:
    """Per-path spatial covariance of the one-ring model (diagonal ``1/L``)."""
    lags = np.arange(model.n_t)
    column = _ring_correlation(lags, model.theta, model.delta, model.d_spacing) / model.l_taps
    column[0] = 1.0 / model.l_taps
    entries = toeplitz(column, column.conj())
    return CovarianceMatrix(entries, "per_path", model.l_taps)


def draw_cir(
    cov: CovarianceMatrix,
    l_taps: int,
    rng: np.random.Generator,
    size: Optional[int] = None,
    sqrt: Optional[np.ndarray] = None,
) -> CirRealization | np.ndarray:
    """Draw CIRs whose taps are independent across paths and correlated across antennas.

    With ``size`` given, returns a raw array of shape ``(size, n_t, l_taps)``
    instead of a single :class:`CirRealization`.  ``sqrt`` may carry a
    precomputed Hermitian square root of the per-path covariance.
    """
    per_path = cov.per_path()
    if sqrt is None:
        if not is_hermitian_psd(per_path.entries, atol=1e-9, floor=1e-8):
            raise NumericalError("covariance is not Hermitian PSD")
        sqrt = psd_sqrt(per_path.entries)
    n_t = per_path.n_t
    shape = (1 if size is None else size, n_t, l_taps)
    g = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    taps = np.einsum("ij,bjl->bil", sqrt, g)
    if size is None:
        return CirRealization(taps[0])
    return taps


def dft_submatrix(n_fft: int, l_taps: int, rows: Sequence[int]) -> np.ndarray:
    """Rows of the unit-modulus partial DFT ``F_L = sqrt(N) F[:, :L]``."""
    rows = np.asarray(list(rows), dtype=np.int64)
    if l_taps > n_fft:
        raise DimensionError(f"l_taps={l_taps} exceeds n_fft={n_fft}")
    if rows.size and (rows.min() < 0 or rows.max() >= n_fft):
        raise DimensionError(f"rows must lie in [0, {n_fft})")
    if np.unique(rows).size != rows.size:
        raise DimensionError("duplicate subcarrier rows")
    return np.exp(-2j * math.pi * np.outer(rows, np.arange(l_taps)) / n_fft)


def sample_mean_aoa(model: AoaModel, rng: np.random.Generator) -> float:
    """Draw a mean AoA from the model."""
    if model.kind == "CPD":
        return float(rng.uniform(*SECTOR))
    grid = model.grid()
    return float(grid[rng.integers(grid.size)])
