"""Hermitian eigendecomposition helpers shared by the channel and estimation code."""

from __future__ import annotations

import numpy as np

RANK_RTOL = 1e-8
# pseudo-inverses used for angular identification keep only the dominant subspace
SUBSPACE_RTOL = 0.1


def hermitian_eig(a: np.ndarray):
    """Eigenvalues (descending) and eigenvectors of a Hermitian matrix."""
    a = 0.5 * (a + a.conj().T)
    lam, u = np.linalg.eigh(a)
    order = np.argsort(lam)[::-1]
    return lam[order], u[:, order]


def numerical_rank(a: np.ndarray, rtol: float = RANK_RTOL) -> int:
    lam, _ = hermitian_eig(a)
    if lam[0] <= 0:
        return 0
    return int(np.count_nonzero(lam > rtol * lam[0]))


def psd_pinv(a: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Pseudo-inverse of a Hermitian PSD matrix, discarding eigenvalues below ``rtol * max``."""
    lam, u = hermitian_eig(a)
    keep = lam > rtol * max(lam[0], 0.0)
    uk = u[:, keep]
    return (uk / lam[keep]) @ uk.conj().T


def psd_sqrt(a: np.ndarray, pinv: bool = False, rtol: float = RANK_RTOL) -> np.ndarray:
    """Hermitian square root (or pseudo-inverse square root) of a PSD matrix."""
    lam, u = hermitian_eig(a)
    keep = lam > rtol * max(lam[0], 0.0)
    uk = u[:, keep]
    root = np.sqrt(lam[keep])
    if pinv:
        root = 1.0 / root
    return (uk * root) @ uk.conj().T


def is_hermitian_psd(a: np.ndarray, atol: float = 1e-12, floor: float = 1e-10) -> bool:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    if np.max(np.abs(a - a.conj().T)) > atol * max(1.0, np.max(np.abs(a))):
        return False
    lam = np.linalg.eigvalsh(a)
    return bool(lam.min() >= -floor * max(lam.max(), 0.0))
