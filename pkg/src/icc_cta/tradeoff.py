"""Stability of CIR recovery under random overlaps and the optimally stable code rate."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .code import IccCode, _all_codewords_as_ints, code_rate, iep_closed_form
from .errors import DomainError, EnumerationLimitError, IntegralityError

STABILITY_MAX_NB = 14


def binom(a: int, b: int) -> int:
    """Binomial coefficient with ``binom(a, b) = 0`` outside ``0 <= b <= a``."""
    if b < 0 or a < 0 or b > a:
        return 0
    return math.comb(a, b)


def _check_divisible(n_fft: int, l_taps: int) -> None:
    if l_taps < 1 or n_fft < 1 or n_fft % l_taps:
        raise DomainError(f"l_taps={l_taps} must divide n_fft={n_fft}")


def s_star(n_fft: int, l_taps: int) -> int:
    """Minimum span ``(L-1) N / L + 1`` of an equally spaced overlap."""
    _check_divisible(n_fft, l_taps)
    return (l_taps - 1) * n_fft // l_taps + 1


def equally_spaced_positions(n_fft: int, l_taps: int, k_offset: int = 0) -> tuple:
    _check_divisible(n_fft, l_taps)
    step = n_fft // l_taps
    if not 0 <= k_offset < step:
        raise DomainError(f"offset must lie in [0, {step})")
    return tuple(k_offset + m * step for m in range(l_taps))


@dataclass(frozen=True)
class StabilityParams:
    n_fft: int
    l_taps: int
    n_b: int
    w: int

    def __post_init__(self):
        if not self.s_star <= self.w <= self.n_b:
            raise DomainError(f"need s* <= w <= n_b, got s*={self.s_star}, w={self.w}, n_b={self.n_b}")

    @property
    def s_star(self) -> int:
        return s_star(self.n_fft, self.l_taps)


@dataclass(frozen=True)
class TradeoffPoint:
    p_s: float
    p_i: float
    rate: float

    @property
    def s_t(self) -> float:
        return math.inf if self.p_s == 0 else 1.0 / self.p_s


def stability_closed_exact(n_b: int, w: int, s_star_: int) -> Fraction:
    if not (1 <= s_star_ <= n_b and w <= n_b and 2 * w - n_b >= 1):
        raise DomainError(f"need 1 <= s* <= n_b and a valid weight, got s*={s_star_}, w={w}, n_b={n_b}")
    return Fraction(binom(n_b - s_star_, n_b - w), binom(n_b, n_b - w)) ** 2


def stability_closed(n_b: int, w: int, s_star_: int) -> float:
    """Probability that a random codeword pair overlaps stably (closed form)."""
    return float(stability_closed_exact(n_b, w, s_star_))


def satisfies_cs(overlap: Sequence[int], n_fft: int, l_taps: int) -> bool:
    """Stable-recovery condition on a set of overlapping subcarrier indices.

    Requires at least ``max(L, s*)`` overlapping subcarriers, among which some
    equally spaced set ``{k + m N/L}`` is fully present.
    """
    o = set(int(x) for x in overlap)
    if len(o) < max(l_taps, s_star(n_fft, l_taps)):
        return False
    step = n_fft // l_taps
    return any(all((k + m * step) in o for m in range(l_taps)) for k in range(step))


@lru_cache(maxsize=64)
def _cs_table(n_b: int, n_fft: int, l_taps: int, positions: tuple) -> np.ndarray:
    """``table[mask]`` = CS of the overlap whose bit ``j`` marks digit ``j``."""
    table = np.zeros(1 << n_b, dtype=bool)
    for mask in range(1 << n_b):
        o = [positions[j] for j in range(n_b) if mask >> j & 1]
        table[mask] = satisfies_cs(o, n_fft, l_taps)
    return table


def stability_bruteforce_exact(
    code: IccCode, n_fft: int, l_taps: int, position_embedding: Optional[Sequence[int]] = None
) -> Fraction:
    """``kappa / C^2`` over all ordered codeword pairs, as an exact rational."""
    if code.n_b > STABILITY_MAX_NB:
        raise EnumerationLimitError(f"n_b={code.n_b} exceeds the enumeration bound {STABILITY_MAX_NB}")
    positions = tuple(range(code.n_b)) if position_embedding is None else tuple(int(p) for p in position_embedding)
    if len(positions) != code.n_b or max(positions) >= n_fft:
        raise DomainError("position embedding must give one in-range FFT bin per digit")
    table = _cs_table(code.n_b, n_fft, l_taps, positions)
    words = _all_codewords_as_ints(code)
    kappa = 0
    for chunk in np.array_split(words, max(1, words.size // 512)):
        kappa += int(table[chunk[:, None] & words[None, :]].sum())
    return Fraction(kappa, code.size ** 2)


def stability_bruteforce(code: IccCode, n_fft: int, l_taps: int,
                         position_embedding: Optional[Sequence[int]] = None) -> float:
    return float(stability_bruteforce_exact(code, n_fft, l_taps, position_embedding))


def optimal_code_params(s_star_: int, n_b: int) -> tuple:
    """Weight, overlap and rate of the optimally stable code of length ``n_b``."""
    if n_b < s_star_:
        raise DomainError("n_b must be at least s*")
    w_num = s_star_ * (n_b + 1)
    s_num = (s_star_ - 1) * n_b + 2 * s_star_
    if w_num % (s_star_ + 1) or s_num % (s_star_ + 1):
        raise IntegralityError(f"(s*={s_star_}, n_b={n_b}) gives non-integral w or s")
    w = w_num // (s_star_ + 1)
    s = s_num // (s_star_ + 1)
    if w == n_b:
        return w, s, 0.0
    return w, s, code_rate(n_b, s)


def nearest_feasible_nb(s_star_: int, n_b: int) -> int:
    """Smallest ``n_b' >= max(n_b, s*)`` accepted by :func:`optimal_code_params`."""
    k = max(1, math.ceil((max(n_b, s_star_) + 1) / (s_star_ + 1)))
    return (s_star_ + 1) * k - 1


def equally_spaced_zeros(n_b: int, w: int) -> np.ndarray:
    """Word of weight ``w`` whose ``n_b - w`` zeros split the ones into near-equal runs."""
    zeros = n_b - w
    runs = [len(r) for r in np.array_split(np.arange(w), zeros + 1)]
    word = []
    for i, r in enumerate(runs):
        word.extend([1] * r)
        if i < zeros:
            word.append(0)
    return np.asarray(word, dtype=int)


def min_run_of_ones(word: Sequence[int]) -> int:
    runs, cur = [], 0
    for b in word:
        if b:
            cur += 1
        else:
            runs.append(cur)
            cur = 0
    runs.append(cur)
    return min(runs)


def zero_runs_ok(n_b: int, w: int, s_star_: int) -> bool:
    """Equally spaced placement of the ``n_b - w`` zeros leaves every run of ones >= s*."""
    return min_run_of_ones(equally_spaced_zeros(n_b, w)) >= s_star_


def rate_lower_bound(n_b: int, n_fft: int, l_taps: int) -> float:
    """``log2(eta)/eta`` with ``eta = ((L-1)N + 2L)/((L-1)N + L) * n_b/(n_b+1)``."""
    _check_divisible(n_fft, l_taps)
    base = (l_taps - 1) * n_fft
    eta = (base + 2 * l_taps) / (base + l_taps) * n_b / (n_b + 1)
    return math.log2(eta) / eta


def tradeoff_point(n_b: int, w: int, s_star_: int) -> TradeoffPoint:
    s = 2 * w - n_b
    return TradeoffPoint(stability_closed(n_b, w, s_star_), iep_closed_form(n_b, s), code_rate(n_b, s))
