import math
from fractions import Fraction
from itertools import combinations, product

import numpy as np
import pytest

from icc_cta.code import (
    IccCode,
    code_rate,
    code_size,
    iep_bruteforce,
    iep_closed_form,
    iep_closed_form_exact,
    min_pairwise_overlap,
    rank_codeword,
    unrank_codeword,
    weight_for,
)
from icc_cta.errors import DomainError, EnumerationLimitError, ParityError


def lex_words(n_b, w):
    """Oracle: all weight-w words in lexicographic order (0 before 1)."""
    return [bits for bits in product((0, 1), repeat=n_b) if sum(bits) == w]


def iep_full_enumeration(n_b, s):
    """Oracle over every (legitimate codeword, attacker pattern) pair.

    The decoder sees the two patterns as candidates; it errs with probability
    1/2 when the attacker pattern is a different weight-w word.
    """
    w = weight_for(n_b, s)
    words = lex_words(n_b, w)
    bad = 0
    for b in words:
        for a in product((0, 1), repeat=n_b):
            if sum(a) == w and a != b:
                bad += 1
    return Fraction(bad, len(words) * 2 ** n_b * 2)


@pytest.mark.parametrize("n_b,s,w", [(7, 1, 4), (167, 127, 147), (3, 1, 2), (6, 2, 4), (5, 5, 5)])
def test_weight_for(n_b, s, w):
    assert weight_for(n_b, s) == w


@pytest.mark.parametrize("n_b,s,exc", [(7, 2, ParityError), (3, 5, DomainError), (0, 1, DomainError), (4, 0, DomainError)])
def test_weight_for_rejects(n_b, s, exc):
    with pytest.raises(exc):
        weight_for(n_b, s)


def test_code_size():
    assert code_size(7, 4) == 35
    assert code_size(167, 147) == math.comb(167, 147)


def test_code_rate_values():
    assert code_rate(7, 1) == pytest.approx(math.log2(35) / 7, abs=1e-12)
    assert code_rate(7, 1) == pytest.approx(0.7328, abs=1e-4)
    assert code_rate(167, 127) == pytest.approx(0.5083, abs=1e-3)
    assert code_rate(9, 9) == 0.0


def test_code_rate_large_matches_exact_log():
    exact = math.log2(math.comb(501, 251)) / 501
    assert code_rate(501, 1) == pytest.approx(exact, rel=1e-12)


def test_iep_closed_form_values():
    assert iep_closed_form(7, 1) == 0.1328125
    assert iep_closed_form(7, 1) == pytest.approx((5040 - 144) / (2 ** 8 * 144))
    assert iep_closed_form(3, 1) == 0.125
    assert iep_closed_form_exact(7, 7) == 0


@pytest.mark.parametrize("n_b,s", [(3, 1), (5, 1), (5, 3), (6, 2), (7, 1), (7, 3)])
def test_iep_matches_full_enumeration(n_b, s):
    assert iep_bruteforce(n_b, s) == iep_closed_form_exact(n_b, s) == iep_full_enumeration(n_b, s)


def test_iep_bruteforce_small_values():
    assert iep_bruteforce(7, 1) == Fraction(34, 256)
    assert iep_bruteforce(3, 1) == Fraction(4, 32)


def test_iep_bruteforce_enumeration_bound():
    with pytest.raises(EnumerationLimitError):
        iep_bruteforce(23, 1)


@pytest.mark.parametrize("n_b,s", [(7, 1), (6, 2), (8, 4), (5, 5)])
def test_unrank_matches_lexicographic_oracle(n_b, s):
    code = IccCode(n_b, s)
    words = lex_words(n_b, code.w)
    assert code.size == len(words)
    for i, bits in enumerate(words):
        cw = code.unrank(i)
        assert cw.bits == bits and cw.index == i
        assert code.rank(bits) == i


def test_unrank_last_index_of_icc_7_1():
    assert str(IccCode(7, 1).unrank(34)) == "1111000"
    assert str(IccCode(7, 1).unrank(0)) == "0001111"


def test_rank_rejects_non_codewords():
    code = IccCode(7, 1)
    with pytest.raises(DomainError):
        rank_codeword(code, (1, 1, 1, 0, 0, 0, 0))
    with pytest.raises(DomainError):
        unrank_codeword(code, 35)
    with pytest.raises(DomainError):
        unrank_codeword(code, -1)


def test_rank_unrank_large_code():
    code = IccCode(167, 127)
    for idx in (0, 1, code.size // 3, code.size - 1):
        assert code.rank(code.unrank(idx).bits) == idx


def test_random_codeword_is_uniform():
    code = IccCode(5, 1)
    rng = np.random.default_rng(3)
    counts = np.bincount([code.random_codeword(rng).index for _ in range(20000)], minlength=code.size)
    expected = 20000 / code.size
    assert np.all(np.abs(counts - expected) < 5 * math.sqrt(expected))


def test_random_codeword_huge_code_in_range():
    code = IccCode(501, 1)
    rng = np.random.default_rng(0)
    for _ in range(20):
        cw = code.random_codeword(rng)
        assert cw.weight == code.w and 0 <= cw.index < code.size


@pytest.mark.parametrize("n_b,s", [(7, 1), (6, 2), (9, 3), (12, 2), (5, 5)])
def test_min_pairwise_overlap_equals_order(n_b, s):
    code = IccCode(n_b, s)
    oracle = min(
        (sum(x & y for x, y in zip(a, b)) for a, b in combinations(lex_words(n_b, code.w), 2)),
        default=code.w,
    )
    assert min_pairwise_overlap(code) == oracle == s


def test_min_pairwise_overlap_sampled_never_below_order():
    code = IccCode(41, 3)
    assert min_pairwise_overlap(code, sample_limit=0, rng=np.random.default_rng(1), n_samples=2000) >= 3
