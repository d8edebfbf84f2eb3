"""Pilot conveying over subcarrier activation patterns and post-FFT grid synthesis.

No IFFT/cyclic-prefix chain is simulated.  The received grid is generated
directly in the frequency domain: for subcarrier ``j``, symbol ``k`` and
antenna ``i`` the sample is
``x_B[j,k] (F_L h_B^i)_j + x_A[j,k] (F_L h_A^i)_j + w``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import CirRealization, dft_submatrix
from .code import Codeword, IccCode
from .errors import DimensionError, DomainError, UnderdeterminedError

N_SYMBOLS = 3
ATTACK_MODES = ("SC", "WB_PJ", "PB_PJ", "PTS", "PTN")
PATTERN_LAWS = ("mode", "uniform", "codeword")
PIP_FREQ = ("same", "random_per_subcarrier")
PIP_TIME = ("replica", "same_increment", "random")


@dataclass(frozen=True)
class Sap:
    """Subcarrier activation pattern: ``active[j]`` switches subcarrier j on for all symbols."""

    active: np.ndarray
    symbol_span: int = N_SYMBOLS

    @property
    def n_b(self) -> int:
        return self.active.size

    @property
    def positions(self) -> np.ndarray:
        return np.flatnonzero(self.active)

    def bits(self) -> tuple:
        return tuple(int(b) for b in self.active)


def map_codeword_to_sap(cw: Codeword) -> Sap:
    """Digit 1 activates the corresponding subcarrier."""
    return Sap(np.asarray(cw.bits, dtype=bool))


def unmap_sap(sap: Sap, code: IccCode) -> Codeword:
    bits = sap.bits()
    return Codeword(bits, code.rank(bits))


@dataclass(frozen=True)
class PilotConfig:
    """Legitimate pilot: power, phase alphabet size, initial phase index, public increment."""

    rho_b: float = 1.0
    c_phases: int = 16
    phi0_index: int = 0
    phi_bar: float = math.pi / 4

    def __post_init__(self):
        if not 0 <= self.phi0_index < self.c_phases:
            raise DomainError(f"phase index {self.phi0_index} outside [0, {self.c_phases})")


def pilot_phase_sequence(cfg: PilotConfig, n_symbols: int = N_SYMBOLS) -> np.ndarray:
    """Phases ``2 pi m / C + i * phi_bar`` (mod 2 pi) for symbols ``i = 0..n_symbols-1``."""
    phi0 = 2 * math.pi * cfg.phi0_index / cfg.c_phases
    return np.mod(phi0 + cfg.phi_bar * np.arange(n_symbols), 2 * math.pi)


def pilot_values(cfg: PilotConfig, n_symbols: int = N_SYMBOLS) -> np.ndarray:
    """Frequency-flat pilot symbols ``sqrt(rho_b) exp(j phi_k)``."""
    return math.sqrt(cfg.rho_b) * np.exp(1j * pilot_phase_sequence(cfg, n_symbols))


def pilot_for_codeword(cw: Codeword, rho_b: float, c_phases: int, phi_bar: float) -> PilotConfig:
    """Pilot whose initial phase index is the codeword rank (rank < c_phases)."""
    if cw.index >= c_phases:
        raise DomainError(f"codeword rank {cw.index} exceeds phase alphabet size {c_phases}")
    return PilotConfig(rho_b, c_phases, cw.index, phi_bar)


@dataclass(frozen=True)
class AttackConfig:
    """Attacker behaviour.

    ``pattern_law`` selects the activation pattern: ``"mode"`` follows ``mode``
    (SC silent, WB-PJ all subcarriers, PB-PJ a random fraction, PTS/PTN a copy
    of the legitimate pattern); ``"uniform"`` draws uniformly from all
    ``2**n_b`` patterns; ``"codeword"`` draws a uniform weight-``w`` codeword.
    """

    mode: str = "SC"
    rho_a: float = 1.0
    pb_fraction: float = 0.5
    pip_freq: str = "same"
    pip_time: str = "random"
    theta2: float = 0.0
    pattern_law: str = "mode"

    def __post_init__(self):
        if self.mode not in ATTACK_MODES:
            raise DomainError(f"unknown attack mode {self.mode!r}")
        if self.pattern_law not in PATTERN_LAWS:
            raise DomainError(f"unknown pattern law {self.pattern_law!r}")
        if self.pip_freq not in PIP_FREQ:
            raise DomainError(f"unknown frequency PIP {self.pip_freq!r}")
        if self.pip_time not in PIP_TIME:
            raise DomainError(f"unknown time PIP {self.pip_time!r}")
        if not 0.0 < self.pb_fraction <= 1.0:
            raise DomainError("pb_fraction must lie in (0, 1]")
        if self.rho_a < 0:
            raise DomainError("rho_a must be non-negative")


def attacker_pattern(
    attack: AttackConfig, sap_b: Sap, rng: np.random.Generator, code: Optional[IccCode] = None
) -> np.ndarray:
    n_b = sap_b.n_b
    if attack.pattern_law == "uniform":
        return rng.integers(0, 2, size=n_b).astype(bool)
    if attack.pattern_law == "codeword":
        if code is None:
            raise DomainError("codeword pattern law needs the code")
        return np.asarray(code.random_codeword(rng).bits, dtype=bool)
    if attack.mode == "SC":
        return np.zeros(n_b, dtype=bool)
    if attack.mode == "WB_PJ":
        return np.ones(n_b, dtype=bool)
    if attack.mode == "PB_PJ":
        out = np.zeros(n_b, dtype=bool)
        out[rng.choice(n_b, size=math.ceil(attack.pb_fraction * n_b), replace=False)] = True
        return out
    return sap_b.active.copy()


def attacker_pilots(
    attack: AttackConfig,
    x_b: np.ndarray,
    n_b: int,
    phi_bar: float,
    rng: np.random.Generator,
    n_symbols: int = N_SYMBOLS,
) -> np.ndarray:
    """Attacker pilot symbols, shape ``(n_b, n_symbols)``.

    ``replica`` copies Bob's values (negated for PTN); ``same_increment`` keeps
    the public increment from a random start; ``random`` draws every symbol
    phase independently.  ``random_per_subcarrier`` adds a per-subcarrier
    phase offset that is constant over time.
    """
    amp = math.sqrt(attack.rho_a)
    if attack.pip_time == "replica":
        base = x_b / np.abs(x_b)
        if attack.mode == "PTN":
            base = -base
    elif attack.pip_time == "same_increment":
        base = np.exp(1j * (rng.uniform(0, 2 * math.pi) + phi_bar * np.arange(n_symbols)))
    else:
        base = np.exp(1j * rng.uniform(0, 2 * math.pi, size=n_symbols))
    out = np.tile(amp * base, (n_b, 1))
    if attack.pip_freq == "random_per_subcarrier":
        out *= np.exp(1j * rng.uniform(0, 2 * math.pi, size=(n_b, 1)))
    return out


@dataclass
class RxGrid:
    """Post-FFT received samples ``samples[j, k, i]`` (subcarrier, symbol, antenna).

    ``positions`` maps code digit ``j`` to its FFT bin; ``truth`` carries the
    simulation ground truth and is never read by the receiver algorithms.
    """

    samples: np.ndarray
    noise_var: float
    positions: np.ndarray
    n_fft: int
    truth: dict = field(default_factory=dict)

    @property
    def n_b(self) -> int:
        return self.samples.shape[0]

    @property
    def n_t(self) -> int:
        return self.samples.shape[2]

    def block(self, j: int) -> np.ndarray:
        """The ``3 x n_t`` detection block of subcarrier ``j``."""
        return self.samples[j]


def signal_component(
    active: np.ndarray, x: np.ndarray, taps: np.ndarray, positions: np.ndarray, n_fft: int
) -> np.ndarray:
    """Noise-free contribution of one node, shape ``(n_b, n_symbols, n_t)``."""
    L = taps.shape[1]
    f = dft_submatrix(n_fft, L, positions)
    fs = f @ taps.T  # (n_b, n_t)
    x = np.asarray(x)
    if x.ndim == 1:
        x = np.tile(x, (active.size, 1))
    return (active[:, None] * x)[:, :, None] * fs[:, None, :]


def complex_noise(shape, noise_var: float, rng: np.random.Generator) -> np.ndarray:
    return math.sqrt(noise_var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def synthesize_rx_grid(
    sap_b: Sap,
    x_b: np.ndarray,
    attack: AttackConfig,
    cir_b: CirRealization,
    cir_a: Optional[CirRealization],
    n_fft: int,
    noise_var: float,
    rng: np.random.Generator,
    positions: Optional[Sequence[int]] = None,
    phi_bar: float = math.pi / 4,
    code: Optional[IccCode] = None,
    sap_a: Optional[np.ndarray] = None,
    x_a: Optional[np.ndarray] = None,
) -> RxGrid:
    """Received OFDM training grid under the configured attack.

    Noise is drawn first from ``rng`` so the noise realisation does not depend
    on the attack; the attacker pattern and pilots are drawn afterwards unless
    passed explicitly via ``sap_a`` / ``x_a``.
    """
    n_b = sap_b.n_b
    n_t = cir_b.n_t
    if positions is None:
        positions = np.arange(n_b)
    positions = np.asarray(positions)
    if positions.size != n_b:
        raise DimensionError("positions must have one entry per code digit")
    x_b = np.asarray(x_b)
    if x_b.shape[-1] != N_SYMBOLS:
        raise DimensionError(f"pilots must cover {N_SYMBOLS} symbols")
    noise = complex_noise((n_b, N_SYMBOLS, n_t), noise_var, rng)
    samples = noise + signal_component(sap_b.active, x_b, cir_b.taps, positions, n_fft)

    if sap_a is None:
        sap_a = attacker_pattern(attack, sap_b, rng, code)
    if x_a is None:
        x_a = attacker_pilots(attack, x_b if x_b.ndim == 1 else x_b[0], n_b, phi_bar, rng)
    if attack.rho_a > 0 and np.any(sap_a):
        if cir_a is None or cir_a.n_t != n_t:
            raise DimensionError("attacker CIR missing or with the wrong antenna count")
        samples = samples + signal_component(np.asarray(sap_a, bool), x_a, cir_a.taps, positions, n_fft)
    else:
        sap_a = np.zeros(n_b, dtype=bool)

    truth = {"sap_b": sap_b.active.copy(), "sap_a": np.asarray(sap_a, bool), "x_b": x_b, "x_a": x_a,
             "cir_b": cir_b, "cir_a": cir_a, "noise": noise}
    return RxGrid(samples, noise_var, positions, n_fft, truth)


def ls_estimate_pts(grid: RxGrid, x_b: np.ndarray, symbol: int = 0) -> np.ndarray:
    """Least-squares CIR estimate ``F_L^+ (x_B^* / |x_B|^2) y`` per antenna.

    Under PTS this returns ``h_B + h_A`` plus filtered noise.  Output shape
    ``(n_t, L)``; ``L`` is taken from the ground-truth CIR when not implied.
    """
    L = grid.truth["cir_b"].l_taps
    return ls_cir(grid, x_b, np.arange(grid.n_b), L, symbol)


def ls_cir(grid: RxGrid, x_b: np.ndarray, digits: Sequence[int], l_taps: int, symbol: int = 0) -> np.ndarray:
    digits = np.asarray(list(digits))
    if digits.size < l_taps:
        raise UnderdeterminedError(f"{digits.size} subcarriers cannot resolve {l_taps} taps")
    f = dft_submatrix(grid.n_fft, l_taps, grid.positions[digits])
    x = np.asarray(x_b)
    xk = np.full(digits.size, x[symbol]) if x.ndim == 1 else x[digits, symbol]
    derotated = grid.samples[digits, symbol, :] * (np.conj(xk) / np.abs(xk) ** 2)[:, None]
    return (np.linalg.pinv(f) @ derotated).T
