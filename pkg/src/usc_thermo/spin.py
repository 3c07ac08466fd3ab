"""Collective spin sectors of N spin-1/2 dipoles.

All matrices are written in the eigenbasis of ``S_x`` with ``m_x`` running
from ``-s`` to ``s`` in ascending order.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import factorial
from typing import Iterator

import numpy as np


class InvalidSectorError(ValueError):
    pass


def _two_s(s) -> int:
    two_s = Fraction(s) * 2
    if two_s.denominator != 1 or two_s < 0:
        raise InvalidSectorError(f"total spin must be a non-negative half-integer, got {s!r}")
    return int(two_s)


def multiplicity(s, n: int) -> int:
    """Number of times the spin-``s`` multiplet occurs among ``n`` spin-1/2s.

    Exact integer arithmetic, so large ``n`` is fine.
    """
    two_s = _two_s(s)
    if n < 1 or two_s > n or (n - two_s) % 2:
        raise InvalidSectorError(f"no spin-{Fraction(two_s, 2)} sector for N={n}")
    k = (n - two_s) // 2  # N/2 - s
    num = factorial(n) * (two_s + 1)
    den = factorial(k) * factorial(n - k + 1)
    return num // den


@dataclass(frozen=True)
class SpinSector:
    s: float
    n_dipoles: int

    def __post_init__(self):
        # validates parity and range
        multiplicity(self.s, self.n_dipoles)

    @property
    def two_s(self) -> int:
        return _two_s(self.s)

    @property
    def dim(self) -> int:
        return self.two_s + 1

    @property
    def multiplicity(self) -> int:
        return multiplicity(self.s, self.n_dipoles)

    @property
    def m_values(self) -> np.ndarray:
        return np.arange(self.dim) - self.s


def sectors(n: int) -> Iterator[SpinSector]:
    """Yield all sectors of ``n`` dipoles, largest total spin first."""
    for two_s in range(n, -1, -2):
        yield SpinSector(two_s / 2, n)


@dataclass(frozen=True)
class SpinMatrices:
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    sx2: np.ndarray
    basis_label: str = "x"


def spin_matrices(sector: SpinSector) -> SpinMatrices:
    """Collective spin matrices of one sector in the ``S_x`` eigenbasis.

    Obtained from the usual ladder construction with the axes relabelled so
    that ``S_x`` is diagonal.  The phases are fixed such that ``S_z`` is real
    symmetric with non-negative entries ``<m+1|S_z|m>`` and ``S_y`` is purely
    imaginary.
    """
    s = sector.s
    m = sector.m_values
    # <m+1| S_+ |m>
    ladder = np.sqrt(s * (s + 1) - m[:-1] * (m[:-1] + 1))
    raise_op = np.diag(ladder, -1)
    sx = np.diag(m.astype(float))
    sz = 0.5 * (raise_op + raise_op.T)
    sy = 0.5j * (raise_op - raise_op.T)
    for a in (sx, sy, sz):
        a.setflags(write=False)
    sx2 = np.diag(m.astype(float) ** 2)
    sx2.setflags(write=False)
    return SpinMatrices(sx=sx, sy=sy, sz=sz, sx2=sx2)
