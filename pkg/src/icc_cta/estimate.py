"""LMMSE estimation on overlapping subcarriers, angular identification and CIR recovery.

Frequency-selective (FS) channel vectors are handled as ``n_t x s`` matrices
``U = H F^T`` where ``H`` holds the taps (``n_t x L``) and ``F`` is the
``s x L`` partial DFT of the overlapping subcarriers.  The row-major
flattening of ``U`` is the ``1 x (n_t s)`` vector ``h = g (R^{1/2} kron F^T)``,
so Kronecker-structured operators reduce to left/right matrix products.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .airframe import RxGrid, ls_cir
from .channel import CovarianceMatrix, dft_submatrix
from .errors import DimensionError, DomainError, SingularPilotError, UnderdeterminedError
from .linalg import RANK_RTOL, SUBSPACE_RTOL, psd_pinv, psd_sqrt

PILOT_COND_MAX = 1e8


@dataclass
class OverlapObservation:
    """Two training symbols received on the overlapping subcarriers.

    ``y_l`` is ``2 x (n_t s)`` (antenna-major, subcarrier-minor);
    ``x_l`` has Bob's pilot pair in column 0 and the confusing pair in column 1.
    """

    y_l: np.ndarray
    x_l: np.ndarray
    overlap_set: np.ndarray
    f_ls: np.ndarray
    h_b_true: Optional[np.ndarray] = None
    h_a_true: Optional[np.ndarray] = None

    def __post_init__(self):
        s = len(self.overlap_set)
        if s < 1:
            raise DomainError("empty overlap set")
        if self.f_ls.shape[0] != s:
            raise DimensionError("f_ls must have one row per overlapping subcarrier")
        if self.y_l.shape[0] != 2 or self.y_l.shape[1] % s:
            raise DimensionError(f"y_l must be 2 x (n_t s), got {self.y_l.shape}")
        if self.x_l.shape != (2, 2):
            raise DimensionError("x_l must be 2 x 2")

    @property
    def s(self) -> int:
        return len(self.overlap_set)

    @property
    def n_t(self) -> int:
        return self.y_l.shape[1] // self.s

    @property
    def l_taps(self) -> int:
        return self.f_ls.shape[1]


def as_matrix(h: np.ndarray, s: int) -> np.ndarray:
    """``1 x (n_t s)`` FS vector to its ``n_t x s`` matrix form."""
    return np.asarray(h).reshape(-1, s)


def observe_overlap(
    grid: RxGrid,
    digits: Sequence[int],
    x_l: np.ndarray,
    l_taps: int,
    symbols: tuple = (0, 1),
    with_truth: bool = True,
) -> OverlapObservation:
    """Stack the two symbols of the chosen code digits into an :class:`OverlapObservation`."""
    digits = np.asarray(list(digits))
    if digits.size == 0:
        raise DomainError("no overlapping subcarriers")
    rows = grid.positions[digits]
    f = dft_submatrix(grid.n_fft, l_taps, rows)
    # samples[j, k, i] -> y[k, i*s + j]
    y = np.stack([grid.samples[digits, k, :].T.reshape(-1) for k in symbols])
    hb = ha = None
    if with_truth and "cir_b" in grid.truth:
        hb = (grid.truth["cir_b"].taps @ f.T).reshape(-1)
        if grid.truth.get("cir_a") is not None:
            ha = (grid.truth["cir_a"].taps @ f.T).reshape(-1)
    return OverlapObservation(y, np.asarray(x_l, dtype=complex), digits, f, hb, ha)


@dataclass
class FsEstimatePair:
    h_b_hat: np.ndarray
    h_a_hat: np.ndarray
    eps_b_sq: Optional[float] = None
    eps_a_sq: Optional[float] = None


def _nmse(est: np.ndarray, truth: Optional[np.ndarray]) -> Optional[float]:
    if truth is None:
        return None
    return float(np.sum(np.abs(est - truth) ** 2) / np.sum(np.abs(truth) ** 2))


def lmmse_scale(r1: CovarianceMatrix, f_ls: np.ndarray) -> float:
    """``T = Tr(R_1) Tr(R_F) / (n_t s)`` with the per-path covariance.

    Each FS entry then has variance ``T``; for unit-modulus DFT rows and
    per-path diagonal ``1/L`` this is 1.
    """
    r = r1.per_path().entries
    rf = f_ls.T @ f_ls.conj()
    return float(np.real(np.trace(r)) * np.real(np.trace(rf)) / (r.shape[0] * f_ls.shape[0]))


def _check_pilots(x_l: np.ndarray) -> None:
    if np.linalg.cond(x_l) > PILOT_COND_MAX:
        raise SingularPilotError("pilot pairs are collinear; the two sources cannot be separated")


def lmmse_estimate(obs: OverlapObservation, r1: CovarianceMatrix, noise_var: float) -> FsEstimatePair:
    """Asymptotically optimal LMMSE from the sample covariance of the two symbols."""
    _check_pilots(obs.x_l)
    n = obs.y_l.shape[1]
    c_y = obs.y_l @ obs.y_l.conj().T / n
    if np.linalg.cond(c_y) > PILOT_COND_MAX:
        raise SingularPilotError("sample covariance is singular")
    return _apply_weights(obs, c_y, lmmse_scale(r1, obs.f_ls))


def perfect_mmse_estimate(obs: OverlapObservation, r1: CovarianceMatrix, noise_var: float) -> FsEstimatePair:
    """Benchmark using the population covariance ``T X X^H + sigma^2 I``."""
    _check_pilots(obs.x_l)
    t = lmmse_scale(r1, obs.f_ls)
    c_y = t * obs.x_l @ obs.x_l.conj().T + noise_var * np.eye(2)
    return _apply_weights(obs, c_y, t)


def _apply_weights(obs: OverlapObservation, c_y: np.ndarray, t: float) -> FsEstimatePair:
    w = t * np.linalg.solve(c_y.T, obs.x_l.conj()).T  # rows: T x_i^H C^{-1}
    hb, ha = w @ obs.y_l
    return FsEstimatePair(hb, ha, _nmse(hb, obs.h_b_true), _nmse(ha, obs.h_a_true))


def ls_fs_estimate(obs: OverlapObservation) -> np.ndarray:
    """Single-symbol LS ``y[k0] / x_B[k0]``; contaminated whenever the attacker is active."""
    return obs.y_l[0] / obs.x_l[0, 0]


@dataclass(frozen=True)
class MetricWeights:
    """Pseudo-inverses ``(R1^+, R_F^+)`` of the decision metric."""

    r1_pinv: np.ndarray
    rf_pinv: np.ndarray

    @classmethod
    def build(cls, r1: CovarianceMatrix, f_ls: np.ndarray,
              r1_rtol: float = SUBSPACE_RTOL, rf_rtol: float = SUBSPACE_RTOL) -> "MetricWeights":
        gram = f_ls.conj() @ f_ls.T  # s x s, same nonzero spectrum as F^T F^*
        return cls(psd_pinv(r1.per_path().entries, r1_rtol), psd_pinv(gram, rf_rtol))


def decision_metric(h_hat: np.ndarray, weights: MetricWeights) -> float:
    """Quadratic form ``Re tr(R1^+ U R_F^+ U^H)`` of the FS estimate."""
    s = weights.rf_pinv.shape[0]
    u = np.asarray(h_hat)
    if u.ndim == 1:
        if u.size % s:
            raise DimensionError("FS vector length is not a multiple of s")
        u = u.reshape(-1, s)
    if u.shape != (weights.r1_pinv.shape[0], s):
        raise DimensionError(f"FS matrix shape {u.shape} does not match weights")
    # tr(A U B U^H) = sum((A U) * conj(U B^H)), B Hermitian
    return float(np.real(np.sum((weights.r1_pinv @ u) * (u @ weights.rf_pinv).conj())))


class Verdict(enum.Enum):
    BOB_IS_H0 = "BobIsH0"
    BOB_IS_H1 = "BobIsH1"
    UNDECIDABLE = "Undecidable"


@dataclass(frozen=True)
class AngularDecision:
    delta_f: float
    verdict: Verdict


def delta_f(pair: FsEstimatePair, weights: MetricWeights, tol: float = 0.0) -> AngularDecision:
    """``f(h_B) - f(h_A)``; H0 names the first estimate of the pair as Bob's."""
    d = decision_metric(pair.h_b_hat, weights) - decision_metric(pair.h_a_hat, weights)
    if d > tol:
        v = Verdict.BOB_IS_H0
    elif d < -tol:
        v = Verdict.BOB_IS_H1
    else:
        v = Verdict.UNDECIDABLE
    return AngularDecision(d, v)


def delta_f_limit(r1: CovarianceMatrix, r2: CovarianceMatrix, l_taps: int, rtol: float = SUBSPACE_RTOL) -> float:
    """Large-array limit ``L (rho_1 - Tr(R_2 R_1^+))`` with per-path covariances."""
    p1 = psd_pinv(r1.per_path().entries, rtol)
    rho1 = np.real(np.trace(p1 @ r1.per_path().entries))
    return float(l_taps * (rho1 - np.real(np.trace(r2.per_path().entries @ p1))))


@dataclass
class CirEstimate:
    taps: np.ndarray
    g: np.ndarray


def recover_cir(h_hat: np.ndarray, r1: CovarianceMatrix, f_ls: np.ndarray) -> CirEstimate:
    """Taps ``U F^* R_F^{-1}`` and whitened coefficients ``R1^{+1/2}`` applied to them."""
    s, L = f_ls.shape
    if s < L:
        raise UnderdeterminedError(f"{s} overlapping subcarriers cannot resolve {L} taps")
    u = as_matrix(h_hat, s)
    rf = f_ls.T @ f_ls.conj()
    taps = np.linalg.solve(rf.T, (u @ f_ls.conj()).T).T
    g = psd_sqrt(r1.per_path().entries, pinv=True, rtol=RANK_RTOL) @ taps
    return CirEstimate(taps, g.reshape(-1))


def cir_nmse(est: CirEstimate, truth: np.ndarray) -> float:
    return float(np.sum(np.abs(est.taps - truth) ** 2) / np.sum(np.abs(truth) ** 2))


def rf_inverse_trace(n_fft: int, l_taps: int, rows: Sequence[int]) -> float:
    """``Tr(R_F^{-1})``; infinite when the rows cannot resolve the taps."""
    f = dft_submatrix(n_fft, l_taps, rows)
    rf = f.T @ f.conj()
    lam = np.linalg.eigvalsh(0.5 * (rf + rf.conj().T))
    if lam.min() <= RANK_RTOL * lam.max():
        return math.inf
    return float(np.sum(1.0 / lam))


class Status(enum.Enum):
    NO_ATTACK = "NoAttack"
    RESOLVED = "Resolved"
    RESOLVED_BY_ANGLE = "ResolvedByAngle"
    IDENTIFICATION_ERROR = "IdentificationError"
    DECODE_FAILURE = "DecodeFailure"
    SINGULAR_PILOTS = "SingularPilots"


@dataclass
class Alg1Config:
    """Knobs of the angular authentication step (``algorithm1``).

    ``confusing_pilot`` selects the pilot pair Alice attaches to the
    non-legitimate candidate: ``"transmitted"`` uses the attacker's actual
    symbols on the first overlapping subcarrier, ``"demapped"`` rebuilds them
    from the candidate codeword with the public increment.
    """

    l_taps: int
    delta_f_tol: float = 0.0
    symbols: tuple = (0, 1)
    confusing_pilot: str = "transmitted"
    r1_rtol: float = SUBSPACE_RTOL
    rf_rtol: float = SUBSPACE_RTOL

    def __post_init__(self):
        if self.confusing_pilot not in ("transmitted", "demapped"):
            raise DomainError(f"unknown confusing pilot source {self.confusing_pilot!r}")


@dataclass
class Alg1Result:
    status: Status
    chosen: Optional[tuple]
    cir: Optional[CirEstimate] = None
    fs: Optional[np.ndarray] = None
    decision: Optional[AngularDecision] = None
    notes: dict = field(default_factory=dict)


def algorithm1(grid: RxGrid, decoded, code, models, cfg: Alg1Config, tie_rng: np.random.Generator) -> Alg1Result:
    """Channel estimation and security enhancement for one round.

    ``decoded`` is a :class:`~icc_cta.decode.DecodeResult`; ``models`` maps
    ``"r1"`` to Bob's covariance and ``"pilot_for"`` to a callable returning the
    pilot symbols of a codeword (``(bits, rank) -> array of 3``).
    """
    from .decode import OutcomeKind

    out = decoded.outcome
    r1: CovarianceMatrix = models["r1"]
    pilot_for = models["pilot_for"]
    L = cfg.l_taps
    if out.kind == OutcomeKind.FAILURE:
        return Alg1Result(Status.DECODE_FAILURE, None)

    bob_bits = tuple(out.bob_codeword.bits)
    if out.kind == OutcomeKind.NO_ATTACK:
        digits = [j for j, b in enumerate(bob_bits) if b]
        x_b = pilot_for(bob_bits)
        try:
            taps = ls_cir(grid, x_b, digits, L, cfg.symbols[0])
        except UnderdeterminedError:
            return Alg1Result(Status.NO_ATTACK, bob_bits)
        return Alg1Result(Status.NO_ATTACK, bob_bits, CirEstimate(taps, np.empty(0)))

    overlap = decoded.obs.dual_set
    if out.kind == OutcomeKind.UNIQUE_BOB:
        if not overlap:
            digits = [j for j, b in enumerate(bob_bits) if b]
            try:
                taps = ls_cir(grid, pilot_for(bob_bits), digits, L, cfg.symbols[0])
            except UnderdeterminedError:
                return Alg1Result(Status.RESOLVED, bob_bits)
            return Alg1Result(Status.RESOLVED, bob_bits, CirEstimate(taps, np.empty(0)))
        x1 = pilot_for(bob_bits)[list(cfg.symbols)]
        x2 = _confusing_pair(grid, out.other, overlap, pilot_for, cfg)
        return _estimate_and_recover(grid, overlap, x1, x2, r1, cfg, Status.RESOLVED, bob_bits)

    # confusing case: two weight-w candidates; H0 names the lower-ranked one
    first, second = sorted((bob_bits, tuple(out.other)), key=code.rank)
    x_first = _candidate_pair(grid, first, overlap, pilot_for, cfg)
    x_second = _candidate_pair(grid, second, overlap, pilot_for, cfg)
    try:
        obs = observe_overlap(grid, overlap, np.column_stack([x_first, x_second]), L, cfg.symbols)
        pair = lmmse_estimate(obs, r1, grid.noise_var)
    except SingularPilotError:
        chosen = (first, second)[int(tie_rng.integers(2))]
        return Alg1Result(Status.SINGULAR_PILOTS, chosen)
    weights = MetricWeights.build(r1, obs.f_ls, cfg.r1_rtol, cfg.rf_rtol)
    decision = delta_f(pair, weights, cfg.delta_f_tol)
    if decision.verdict == Verdict.UNDECIDABLE:
        chosen = (first, second)[int(tie_rng.integers(2))]
        return Alg1Result(Status.IDENTIFICATION_ERROR, chosen, decision=decision)
    chosen, fs = (first, pair.h_b_hat) if decision.verdict == Verdict.BOB_IS_H0 else (second, pair.h_a_hat)
    return Alg1Result(Status.RESOLVED_BY_ANGLE, chosen, _maybe_cir(fs, r1, obs.f_ls), fs, decision)


def _maybe_cir(fs, r1, f_ls) -> Optional[CirEstimate]:
    try:
        return recover_cir(fs, r1, f_ls)
    except UnderdeterminedError:
        return None


def _estimate_and_recover(grid, overlap, x1, x2, r1, cfg, status, bob_bits) -> Alg1Result:
    try:
        obs = observe_overlap(grid, overlap, np.column_stack([x1, x2]), cfg.l_taps, cfg.symbols)
        pair = lmmse_estimate(obs, r1, grid.noise_var)
    except SingularPilotError:
        return Alg1Result(Status.SINGULAR_PILOTS, bob_bits)
    return Alg1Result(status, bob_bits, _maybe_cir(pair.h_b_hat, r1, obs.f_ls), pair.h_b_hat)


def _candidate_pair(grid, bits, overlap, pilot_for, cfg) -> np.ndarray:
    """Pilot pair Alice associates with a candidate codeword."""
    truth_b = tuple(int(b) for b in grid.truth.get("sap_b", ()))
    if cfg.confusing_pilot == "demapped" or tuple(bits) == truth_b:
        return pilot_for(tuple(bits))[list(cfg.symbols)]
    return _transmitted_pair(grid, overlap, cfg)


def _confusing_pair(grid, other, overlap, pilot_for, cfg) -> np.ndarray:
    if cfg.confusing_pilot == "demapped" and other is not None and sum(other) == sum(grid.truth["sap_b"]):
        return pilot_for(tuple(other))[list(cfg.symbols)]
    return _transmitted_pair(grid, overlap, cfg)


def _transmitted_pair(grid, overlap, cfg) -> np.ndarray:
    x_a = np.asarray(grid.truth["x_a"])
    row = x_a[overlap[0]] if x_a.ndim == 2 else x_a
    return row[list(cfg.symbols)]
