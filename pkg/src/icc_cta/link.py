"""Shared link-level setup: covariance bank, per-trial channel draws and grid synthesis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Optional

import numpy as np

from .airframe import AttackConfig, RxGrid, map_codeword_to_sap, pilot_for_codeword, pilot_values, synthesize_rx_grid
from .channel import AoaModel, CirRealization, CovarianceMatrix, OneRingModel, draw_cir, one_ring_covariance, sample_mean_aoa
from .code import Codeword, IccCode
from .detect import ErdThresholds
from .errors import DomainError
from .linalg import SUBSPACE_RTOL, psd_pinv, psd_sqrt


@dataclass(frozen=True)
class ChannelStats:
    """Per-path covariance of one mean AoA with cached factors."""

    theta: float
    cov: CovarianceMatrix
    sqrt: np.ndarray
    pinv: np.ndarray

    @property
    def rho(self) -> float:
        """Dimension of the retained dominant subspace (``Tr(R R^+)``)."""
        return float(np.real(np.trace(self.pinv @ self.cov.entries)))


class CovarianceBank:
    """Memoised one-ring covariances keyed by mean AoA."""

    def __init__(self, n_t: int, l_taps: int, delta: float, d_spacing: float = 0.5,
                 pinv_rtol: float = SUBSPACE_RTOL):
        self.n_t = n_t
        self.l_taps = l_taps
        self.delta = delta
        self.d_spacing = d_spacing
        self.pinv_rtol = pinv_rtol
        self._cache: Dict[float, ChannelStats] = {}

    def __call__(self, theta: float) -> ChannelStats:
        key = float(theta)
        hit = self._cache.get(key)
        if hit is None:
            cov = one_ring_covariance(OneRingModel(key, self.delta, self.d_spacing, self.n_t, self.l_taps))
            hit = ChannelStats(key, cov, psd_sqrt(cov.entries), psd_pinv(cov.entries, self.pinv_rtol))
            if len(self._cache) > 256:
                self._cache.clear()
            self._cache[key] = hit
        return hit


@dataclass
class LinkSetup:
    """Everything needed to simulate one training round between Bob, Ava and Alice.

    Bob's pilot phase index is the rank of his codeword, so the phase
    alphabet has one entry per codeword.  Bob transmits at unit power, so
    ``attack.rho_a`` is the attacker-to-Bob power ratio.
    """

    code: IccCode
    n_t: int = 256
    n_fft: int = 256
    l_taps: int = 4
    delta: float = math.pi / 12
    d_spacing: float = 0.5
    snr_db: float = 20.0
    phi_bar: float = math.pi / 4
    aoa: AoaModel = field(default_factory=lambda: AoaModel("DPD", 5))
    attack: AttackConfig = field(default_factory=lambda: AttackConfig("PTS", pattern_law="uniform"))
    thresholds: Optional[ErdThresholds] = None
    r_threshold: float = 0.5
    positions: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.code.n_b > self.n_fft:
            raise DomainError("code length exceeds the FFT size")
        if self.positions is None:
            self.positions = np.arange(self.code.n_b)
        self.positions = np.asarray(self.positions)

    @property
    def rho_b(self) -> float:
        return 1.0

    @property
    def noise_var(self) -> float:
        return self.rho_b / 10.0 ** (self.snr_db / 10.0)

    @cached_property
    def bank(self) -> CovarianceBank:
        return CovarianceBank(self.n_t, self.l_taps, self.delta, self.d_spacing)

    def pilot_for(self, cw: Codeword) -> np.ndarray:
        return pilot_values(pilot_for_codeword(cw, self.rho_b, self.code.size, self.phi_bar))


@dataclass
class Trial:
    """One simulated training round with its ground truth."""

    grid: RxGrid
    bob: Codeword
    x_b: np.ndarray
    theta_b: float
    theta_a: float
    stats_b: ChannelStats
    stats_a: ChannelStats

    @property
    def attacker_bits(self) -> tuple:
        return tuple(int(b) for b in self.grid.truth["sap_a"])


def simulate_trial(setup: LinkSetup, rng: np.random.Generator, bob: Optional[Codeword] = None) -> Trial:
    """Draw codeword, AoAs, CIRs and the received grid for one round."""
    code = setup.code
    if bob is None:
        bob = code.random_codeword(rng)
    theta_b = sample_mean_aoa(setup.aoa, rng)
    theta_a = sample_mean_aoa(setup.aoa, rng)
    stats_b = setup.bank(theta_b)
    stats_a = setup.bank(theta_a)
    cir_b = CirRealization(draw_cir(stats_b.cov, setup.l_taps, rng, size=1, sqrt=stats_b.sqrt)[0])
    cir_a = CirRealization(draw_cir(stats_a.cov, setup.l_taps, rng, size=1, sqrt=stats_a.sqrt)[0])
    x_b = setup.pilot_for(bob)
    grid = synthesize_rx_grid(
        map_codeword_to_sap(bob), x_b, setup.attack, cir_b, cir_a, setup.n_fft, setup.noise_var, rng,
        positions=setup.positions, phi_bar=setup.phi_bar, code=code,
    )
    return Trial(grid, bob, x_b, theta_b, theta_a, stats_b, stats_a)


def trial_rngs(rng: np.random.Generator, n_trials: int) -> list:
    """Independent per-trial generators derived from one parent stream."""
    seeds = rng.integers(0, 2**63 - 1, size=n_trials, dtype=np.int64)
    return [np.random.default_rng(int(s)) for s in seeds]
