"""Constant-weight independence-checking codebooks.

The ICC-(n_b, s) code is the set of *all* binary words of length ``n_b`` and
weight ``w = (n_b + s) / 2``.  Any two such words share at least ``2w - n_b = s``
ones, so the codebook never has to be materialised: codewords are reached by
lexicographic rank/unrank (combinadic) and membership is a popcount check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import DomainError, EnumerationLimitError, ParityError

BRUTEFORCE_MAX_NB = 20


def weight_for(n_b: int, s: int) -> int:
    """Constant weight of the ICC-(n_b, s) code."""
    if n_b < 1 or s < 1:
        raise DomainError(f"n_b and s must be positive, got n_b={n_b}, s={s}")
    if s > n_b:
        raise DomainError(f"order s={s} exceeds code length n_b={n_b}")
    if (n_b + s) % 2:
        raise ParityError(f"n_b + s must be even, got n_b={n_b}, s={s}")
    return (n_b + s) // 2


def code_size(n_b: int, w: int) -> int:
    """Number of weight-``w`` words of length ``n_b`` (exact)."""
    if not 0 <= w <= n_b:
        raise DomainError(f"need 0 <= w <= n_b, got w={w}, n_b={n_b}")
    return math.comb(n_b, w)


def log2_binomial(n: int, k: int) -> float:
    """log2 of a binomial coefficient via log-gamma."""
    if not 0 <= k <= n:
        raise DomainError(f"need 0 <= k <= n, got k={k}, n={n}")
    return (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)) / math.log(2.0)


def code_rate(n_b: int, s: int) -> float:
    """Code rate ``log2(C) / n_b`` of the ICC-(n_b, s) code."""
    w = weight_for(n_b, s)
    rate = log2_binomial(n_b, w) / n_b
    # lgamma leaves ~1e-16 residue when C == 1
    return 0.0 if w in (0, n_b) else rate


def iep_closed_form_exact(n_b: int, s: int) -> Fraction:
    """Identification error probability ``(C - 1) / 2**(n_b + 1)`` as a rational."""
    w = weight_for(n_b, s)
    return Fraction(code_size(n_b, w) - 1, 2 ** (n_b + 1))


def iep_closed_form(n_b: int, s: int) -> float:
    """Identification error probability of the ICC-(n_b, s) code.

    Parameters
    ----------
    n_b : int
        Code length (number of subcarriers allocated to the legitimate node).
    s : int
        Code order.

    Returns
    -------
    float
        ``(n_b! - w!(n_b-w)!) / (2**(n_b+1) w!(n_b-w)!)``, i.e. ``(C-1)/2**(n_b+1)``.
    """
    return float(iep_closed_form_exact(n_b, s))


def iep_bruteforce(n_b: int, s: int) -> Fraction:
    """Exhaustive IEP oracle.

    Walks all ``2**n_b`` attacker activation patterns against a fixed legitimate
    codeword and counts those that leave Alice with two weight-``w`` candidates
    (a weight-``w`` pattern different from the reference).  Each such pattern is
    resolved by a fair coin, hence the extra factor 1/2.
    """
    if n_b > BRUTEFORCE_MAX_NB:
        raise EnumerationLimitError(f"n_b={n_b} exceeds enumeration bound {BRUTEFORCE_MAX_NB}")
    w = weight_for(n_b, s)
    reference = (1 << w) - 1
    patterns = np.arange(1 << n_b, dtype=np.int64)
    weights = _popcount(patterns)
    confusable = int(np.count_nonzero((weights == w) & (patterns != reference)))
    return Fraction(confusable, 2 ** (n_b + 1))


def _popcount(values: np.ndarray) -> np.ndarray:
    v = values.astype(np.uint64)
    counts = np.zeros(v.shape, dtype=np.int64)
    while np.any(v):
        counts += (v & np.uint64(1)).astype(np.int64)
        v >>= np.uint64(1)
    return counts


@dataclass(frozen=True)
class Codeword:
    """One codeword: its bits (position 0 first) and lexicographic rank."""

    bits: tuple
    index: int

    @property
    def weight(self) -> int:
        return sum(self.bits)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.bits, dtype=np.int8)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


@dataclass(frozen=True)
class IccCode:
    """The ICC-(n_b, s) constant-weight code."""

    n_b: int
    s: int

    def __post_init__(self):
        weight_for(self.n_b, self.s)

    @classmethod
    def from_weight(cls, n_b: int, w: int) -> "IccCode":
        return cls(n_b, 2 * w - n_b)

    @property
    def w(self) -> int:
        return (self.n_b + self.s) // 2

    @property
    def size(self) -> int:
        return code_size(self.n_b, self.w)

    @property
    def rate(self) -> float:
        return code_rate(self.n_b, self.s)

    def is_codeword(self, bits: Sequence[int]) -> bool:
        return len(bits) == self.n_b and int(np.sum(bits)) == self.w

    def unrank(self, index: int) -> Codeword:
        return unrank_codeword(self, index)

    def rank(self, bits: Sequence[int]) -> int:
        return rank_codeword(self, bits)

    def random_codeword(self, rng: np.random.Generator) -> Codeword:
        return self.unrank(random_index(self.size, rng))

    def __iter__(self) -> Iterator[Codeword]:
        for i in range(self.size):
            yield self.unrank(i)


def random_index(size: int, rng: np.random.Generator) -> int:
    """Uniform integer in ``[0, size)`` for arbitrarily large ``size``."""
    if size <= np.iinfo(np.int64).max:
        return int(rng.integers(size))
    nbits = size.bit_length()
    while True:
        chunks = rng.integers(0, 1 << 32, size=(nbits + 31) // 32, dtype=np.uint64)
        value = 0
        for c in chunks:
            value = (value << 32) | int(c)
        value >>= 32 * len(chunks) - nbits
        if value < size:
            return value


def unrank_codeword(code: IccCode, index: int) -> Codeword:
    """Return the ``index``-th weight-``w`` word in lexicographic order."""
    size = code.size
    if not 0 <= index < size:
        raise DomainError(f"index {index} out of range [0, {size})")
    n, k = code.n_b, code.w
    remaining = index
    bits = []
    for pos in range(n):
        # words with a 0 here come first
        zeros_first = math.comb(n - pos - 1, k)
        if remaining < zeros_first:
            bits.append(0)
        else:
            bits.append(1)
            remaining -= zeros_first
            k -= 1
    return Codeword(tuple(bits), index)


def rank_codeword(code: IccCode, bits: Sequence[int]) -> int:
    """Inverse of :func:`unrank_codeword`."""
    bits = [int(b) for b in bits]
    if not code.is_codeword(bits):
        raise DomainError(f"not a weight-{code.w} word of length {code.n_b}")
    n, k = code.n_b, code.w
    index = 0
    for pos, b in enumerate(bits):
        if b:
            index += math.comb(n - pos - 1, k)
            k -= 1
    return index


def _all_codewords_as_ints(code: IccCode) -> np.ndarray:
    from itertools import combinations

    out = np.empty(code.size, dtype=np.int64)
    for i, ones in enumerate(combinations(range(code.n_b), code.w)):
        v = 0
        for p in ones:
            v |= 1 << p
        out[i] = v
    return out


def min_pairwise_overlap(
    code: IccCode,
    sample_limit: int = 10**6,
    rng: Optional[np.random.Generator] = None,
    n_samples: int = 10**4,
) -> int:
    """Minimum number of shared ones over pairs of codewords.

    Exhaustive over distinct pairs when ``size**2 <= sample_limit``; otherwise
    ``n_samples`` random pairs are drawn with ``rng``.  A single-codeword code
    reports the overlap of the codeword with itself.
    """
    size = code.size
    if size == 1:
        return code.w
    if size * size <= sample_limit:
        words = _all_codewords_as_ints(code)
        best = code.w
        for i in range(size - 1):
            shared = _popcount(words[i] & words[i + 1:])
            best = min(best, int(shared.min()))
        return best
    if rng is None:
        rng = np.random.default_rng()
    best = code.w
    for _ in range(n_samples):
        a = np.asarray(code.random_codeword(rng).bits)
        b = np.asarray(code.random_codeword(rng).bits)
        best = min(best, int(np.sum(a & b)))
    return best
