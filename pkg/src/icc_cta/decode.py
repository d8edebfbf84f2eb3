"""Separation of the superimposed activation pattern and legitimate-codeword identification."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .airframe import RxGrid
from .code import Codeword, IccCode
from .detect import SubcarrierState, calibrated, sse_classify
from .errors import DomainError

R_THRESHOLD = 0.5


@dataclass(frozen=True)
class ObservedPattern:
    """Per-subcarrier detected states and the derived index sets."""

    states: tuple

    @classmethod
    def from_states(cls, states: Sequence[SubcarrierState]) -> "ObservedPattern":
        return cls(tuple(SubcarrierState(s) for s in states))

    @property
    def n_b(self) -> int:
        return len(self.states)

    @property
    def ambiguous_set(self) -> List[int]:
        return [j for j, s in enumerate(self.states) if s == SubcarrierState.SINGLE]

    @property
    def dual_set(self) -> List[int]:
        return [j for j, s in enumerate(self.states) if s == SubcarrierState.DUAL]

    @property
    def n1_det(self) -> int:
        return sum(s == SubcarrierState.DUAL for s in self.states)

    @property
    def n0_det(self) -> int:
        return sum(s == SubcarrierState.SILENT for s in self.states)


@dataclass(frozen=True)
class SeparationResult:
    """The two completions of the observed pattern.

    ``candidate1`` assumes the reference subcarrier carries Bob's signal,
    ``candidate0`` assumes it does not.
    """

    candidate0: tuple
    candidate1: tuple
    ref_index: Optional[int]

    def as_set(self) -> frozenset:
        return frozenset((self.candidate0, self.candidate1))


class OutcomeKind(enum.Enum):
    UNIQUE_BOB = "UniqueBob"
    COIN_FLIP = "CoinFlip"
    NO_ATTACK = "NoAttackDetected"
    FAILURE = "Failure"


@dataclass(frozen=True)
class IdentificationOutcome:
    kind: OutcomeKind
    bob_codeword: Optional[Codeword]
    error_flag: Optional[bool] = None
    other: Optional[tuple] = None

    def with_truth(self, truth: Sequence[int]) -> "IdentificationOutcome":
        wrong = self.bob_codeword is None or tuple(self.bob_codeword.bits) != tuple(int(b) for b in truth)
        return IdentificationOutcome(self.kind, self.bob_codeword, wrong, self.other)


def differential_digits(
    grid: RxGrid,
    ambiguous: Sequence[int],
    ref: int,
    r_threshold: float = R_THRESHOLD,
    symbol: int = 0,
    average_symbols: bool = False,
) -> Dict[int, int]:
    """Digits ``d_{ref,j}``: 0 when subcarrier ``j`` looks like the same source as ``ref``.

    ``|I|`` is the magnitude of the inner product of the unit-normalised
    antenna vectors; the digit is ``(|I| > r_threshold) XOR 1``.
    """
    ambiguous = list(ambiguous)
    if not ambiguous:
        raise DomainError("empty ambiguous set")
    if ref not in ambiguous:
        raise DomainError("reference must belong to the ambiguous set")
    out = {}
    for j in ambiguous:
        out[j] = int(inner_product_magnitude(grid, ref, j, symbol, average_symbols) > r_threshold) ^ 1
    return out


def inner_product_magnitude(grid: RxGrid, a: int, b: int, symbol: int = 0, average_symbols: bool = False) -> float:
    if average_symbols:
        ya, yb = grid.samples[a], grid.samples[b]
        vals = [abs(np.vdot(ya[k], yb[k])) / (np.linalg.norm(ya[k]) * np.linalg.norm(yb[k])) for k in range(ya.shape[0])]
        return float(np.mean(vals))
    ya = grid.samples[a, symbol]
    yb = grid.samples[b, symbol]
    return float(abs(np.vdot(ya, yb)) / (np.linalg.norm(ya) * np.linalg.norm(yb)))


def resolve_candidates(obs: ObservedPattern, digits: Dict[int, int], ref: Optional[int] = None) -> SeparationResult:
    """Fill the ambiguous positions under both hypotheses on the reference digit."""
    base = [1 if s == SubcarrierState.DUAL else 0 for s in obs.states]
    amb = obs.ambiguous_set
    if not amb:
        return SeparationResult(tuple(base), tuple(base), None)
    if ref is None:
        ref = amb[0]
    c0, c1 = list(base), list(base)
    for j in amb:
        d = 0 if j == ref else digits[j]
        c0[j] = 0 ^ d
        c1[j] = 1 ^ d
    return SeparationResult(tuple(c0), tuple(c1), ref)


def identify_legitimate(
    sep: SeparationResult, code: IccCode, obs: ObservedPattern, tie_rng: np.random.Generator
) -> IdentificationOutcome:
    """Apply the weight constraint to both candidates.

    On a tie the two candidates are ordered by codeword rank before the fair
    draw, so the outcome does not depend on which one is labelled 0 or 1.
    """
    w = code.w
    c0, c1 = sep.candidate0, sep.candidate1
    if c0 == c1:
        if sum(c0) == w:
            return IdentificationOutcome(OutcomeKind.UNIQUE_BOB, Codeword(c0, code.rank(c0)), other=c1)
        return IdentificationOutcome(OutcomeKind.FAILURE, None)
    p0, p1 = sum(c0) == w, sum(c1) == w
    if p0 and p1:
        pair = sorted((c0, c1), key=code.rank)
        pick = int(tie_rng.integers(2))
        chosen = pair[pick]
        return IdentificationOutcome(OutcomeKind.COIN_FLIP, Codeword(chosen, code.rank(chosen)), other=pair[1 - pick])
    if not (p0 or p1):
        return IdentificationOutcome(OutcomeKind.FAILURE, None)
    chosen, other = (c0, c1) if p0 else (c1, c0)
    kind = OutcomeKind.NO_ATTACK if not any(other) else OutcomeKind.UNIQUE_BOB
    return IdentificationOutcome(kind, Codeword(chosen, code.rank(chosen)), other=other)


@dataclass
class DecodeResult:
    obs: ObservedPattern
    sep: SeparationResult
    outcome: IdentificationOutcome


def decode_grid(
    grid: RxGrid, code: IccCode, thr, tie_rng: np.random.Generator,
    r_threshold: float = R_THRESHOLD, average_symbols: bool = False,
) -> DecodeResult:
    """Classify, separate and identify on one received grid."""
    obs = ObservedPattern.from_states(sse_classify(grid, thr))
    amb = obs.ambiguous_set
    digits = differential_digits(grid, amb, amb[0], r_threshold, average_symbols=average_symbols) if amb else {}
    sep = resolve_candidates(obs, digits)
    return DecodeResult(obs, sep, identify_legitimate(sep, code, obs, tie_rng))


@dataclass(frozen=True)
class SepIepCounts:
    n_trials: int
    separation_errors: int
    identification_errors: int
    coin_flips: int
    failures: int

    @property
    def sep_rate(self) -> float:
        return self.separation_errors / self.n_trials if self.n_trials else 0.0

    @property
    def iep_rate(self) -> float:
        return self.identification_errors / self.n_trials if self.n_trials else 0.0

    def __add__(self, other: "SepIepCounts") -> "SepIepCounts":
        return SepIepCounts(*(a + b for a, b in zip(self._tuple(), other._tuple())))

    def _tuple(self):
        return (self.n_trials, self.separation_errors, self.identification_errors, self.coin_flips, self.failures)


def decode_trial(setup, rng: np.random.Generator) -> SepIepCounts:
    """Simulate and decode one round; counts are 0/1 indicators."""
    from .link import simulate_trial

    trial = simulate_trial(setup, rng)
    res = decode_grid(trial.grid, setup.code, setup.thresholds, rng, setup.r_threshold)
    truth = frozenset((tuple(trial.bob.bits), trial.attacker_bits))
    out = res.outcome.with_truth(trial.bob.bits)
    return SepIepCounts(
        1,
        int(res.sep.as_set() != truth),
        int(out.error_flag),
        int(out.kind == OutcomeKind.COIN_FLIP),
        int(out.kind == OutcomeKind.FAILURE),
    )


def ensure_thresholds(setup, target_pf: float = 5e-4, seed: int = 0, cache=None):
    if setup.thresholds is None:
        setup.thresholds = calibrated(setup.n_t, target_pf, setup.snr_db, seed, cache=cache)
    return setup.thresholds


def measure_sep_iep_counts(setup, n_trials: int, rng: np.random.Generator) -> SepIepCounts:
    from .link import trial_rngs

    ensure_thresholds(setup)
    total = SepIepCounts(0, 0, 0, 0, 0)
    for r in trial_rngs(rng, n_trials):
        total = total + decode_trial(setup, r)
    return total


def measure_sep_iep(setup, n_trials: int, rng: np.random.Generator) -> tuple[float, float]:
    """Empirical separation and identification error rates over ``n_trials`` rounds."""
    c = measure_sep_iep_counts(setup, n_trials, rng)
    return c.sep_rate, c.iep_rate
