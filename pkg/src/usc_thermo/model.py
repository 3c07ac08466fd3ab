"""Cavity QED Hamiltonian of the extended Dicke model.

Natural units throughout: hbar = k_B = 1 and frequencies, energies and
temperatures are measured in units of the cavity frequency unless
``omega_c`` is set explicitly.

The production path assembles the Hamiltonian in the polaron frame,

    H = omega_c a^dag a + (J/N) S_x^2 + omega_0 U S_z U^dag,
    U = exp[(g/omega_c) S_x (a^dag - a)],

one total-spin sector at a time.  The lab-frame Hamiltonian on the full
tensor-product space is kept only as a small-N oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache, reduce

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .spin import SpinSector, spin_matrices

MAX_ORACLE_DIPOLES = 6


@dataclass(frozen=True)
class ModelParams:
    n_dipoles: int
    omega0: float
    g: float
    j_coupling: float = 0.0
    temperature: float = 0.0
    omega_c: float = 1.0

    def __post_init__(self):
        if self.n_dipoles < 1:
            raise ValueError("n_dipoles must be >= 1")
        if not self.omega_c > 0:
            raise ValueError("omega_c must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")

    @classmethod
    def from_collective(cls, n_dipoles: int, omega0: float, G: float, **kw) -> "ModelParams":
        return cls(n_dipoles=n_dipoles, omega0=omega0, g=G / math.sqrt(n_dipoles), **kw)

    @property
    def collective_g(self) -> float:
        return self.g * math.sqrt(self.n_dipoles)

    @property
    def beta(self) -> float:
        return math.inf if self.temperature == 0 else 1.0 / self.temperature

    @property
    def lamb(self) -> float:
        """Polaron displacement per unit of S_x, g/omega_c."""
        return self.g / self.omega_c

    def replace(self, **changes) -> "ModelParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class FockTruncation:
    n_ph: int

    def __post_init__(self):
        if self.n_ph < 1:
            raise ValueError("photon cutoff must be >= 1")

    @property
    def dim(self) -> int:
        return self.n_ph + 1


@dataclass(frozen=True)
class SectorHamiltonian:
    sector: SpinSector
    matrix: np.ndarray
    params: ModelParams
    trunc: FockTruncation
    frame_label: str = "polaron"


def thermal_occupation(omega: float, temperature: float) -> float:
    """Bose occupation 1/(exp(omega/T) - 1); zero at T = 0."""
    if temperature == 0:
        return 0.0
    x = omega / temperature
    if x > 700:
        return math.exp(-x)
    return 1.0 / math.expm1(x)


def default_cutoff(t_max: float, omega_c: float = 1.0) -> int:
    """Photon cutoff heuristic max(40, 20 * ceil(T_max / omega_c))."""
    if t_max < 0:
        raise ValueError("t_max must be non-negative")
    return max(40, 20 * math.ceil(t_max / omega_c))


def resolve_truncation(params: ModelParams, trunc: FockTruncation | int | None) -> FockTruncation:
    if trunc is None:
        return FockTruncation(default_cutoff(params.temperature, params.omega_c))
    if isinstance(trunc, int):
        return FockTruncation(trunc)
    return trunc


@lru_cache(maxsize=256)
def _displacement_cached(alpha: float, n_ph: int) -> np.ndarray:
    dim = n_ph + 1
    if alpha == 0.0:
        out = np.eye(dim)
        out.setflags(write=False)
        return out
    x = alpha * alpha
    n = np.arange(dim)
    row, col = np.meshgrid(n, n, indexing="ij")  # row = n', col = n
    lower = row >= col
    k = np.where(lower, row - col, col - row)
    lo = np.minimum(row, col)
    hi = np.maximum(row, col)
    log_mag = 0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) + k * math.log(abs(alpha)) - 0.5 * x
    lag = eval_genlaguerre(lo, k, x)
    # sign of alpha^k for n' >= n; the upper triangle uses D(alpha)^T = D(-alpha)
    sign = np.where(lower, np.sign(alpha) ** k, (-np.sign(alpha)) ** k)
    out = sign * np.exp(log_mag) * lag
    out.setflags(write=False)
    return out


def displacement_block(alpha: float, n_ph: int) -> np.ndarray:
    """Fock matrix elements <n'|exp[alpha (a^dag - a)]|n> for real ``alpha``.

    Exact elements of the untruncated operator, restricted to n, n' <= n_ph,
    via the associated-Laguerre closed form.  The returned array is cached and
    read-only.
    """
    return _displacement_cached(float(alpha), int(n_ph))


def polaron_sz(params: ModelParams, sector: SpinSector, trunc: FockTruncation) -> np.ndarray:
    """Matrix of U S_z U^dag on spin (x) Fock, spin-major ordering.

    Element ((m', n'), (m, n)) is <m'|S_z|m> <n'|D((g/omega_c)(m' - m))|n>.
    """
    spin = spin_matrices(sector)
    d_spin, d_ph = sector.dim, trunc.dim
    out = np.zeros((d_spin * d_ph, d_spin * d_ph))
    if d_spin == 1:
        return out
    block = displacement_block(params.lamb, trunc.n_ph)
    for i in range(d_spin - 1):
        c = spin.sz[i + 1, i]
        rows = slice((i + 1) * d_ph, (i + 2) * d_ph)
        cols = slice(i * d_ph, (i + 1) * d_ph)
        out[rows, cols] = c * block
        out[cols, rows] = c * block.T
    return out


def assemble_sector(
    params: ModelParams, sector: SpinSector, trunc: FockTruncation | int | None = None
) -> SectorHamiltonian:
    """Polaron-frame Hamiltonian restricted to one spin sector."""
    trunc = resolve_truncation(params, trunc)
    if sector.n_dipoles != params.n_dipoles:
        raise ValueError("sector does not belong to this system size")
    d_ph = trunc.dim
    m = sector.m_values
    diag = (
        params.omega_c * np.tile(np.arange(d_ph, dtype=float), sector.dim)
        + np.repeat(params.j_coupling / params.n_dipoles * m**2, d_ph)
    )
    if params.omega0 != 0.0:
        mat = params.omega0 * polaron_sz(params, sector, trunc)
    else:
        mat = np.zeros((diag.size, diag.size))
    mat[np.diag_indices_from(mat)] += diag
    return SectorHamiltonian(sector=sector, matrix=mat, params=params, trunc=trunc)


def _single_site(op: np.ndarray, site: int, n: int) -> np.ndarray:
    ops = [np.eye(2)] * n
    ops[site] = op
    return reduce(np.kron, ops)


def brute_force_lab_hamiltonian(params: ModelParams, trunc: FockTruncation | int | None = None) -> np.ndarray:
    """Lab-frame Hamiltonian on the full 2^N x (N_ph + 1) space.

    Test oracle only; no symmetry reduction, no polaron transformation.
    Refuses N > 6.
    """
    n = params.n_dipoles
    if n > MAX_ORACLE_DIPOLES:
        raise ValueError(f"brute-force oracle limited to N <= {MAX_ORACLE_DIPOLES}, got {n}")
    trunc = resolve_truncation(params, trunc)
    pauli_x = np.array([[0.0, 1.0], [1.0, 0.0]])
    pauli_z = np.array([[1.0, 0.0], [0.0, -1.0]])
    sx = 0.5 * sum(_single_site(pauli_x, i, n) for i in range(n))
    sz = 0.5 * sum(_single_site(pauli_z, i, n) for i in range(n))
    a = np.diag(np.sqrt(np.arange(1, trunc.dim, dtype=float)), 1)
    num = np.diag(np.arange(trunc.dim, dtype=float))
    eye_s = np.eye(2**n)
    eye_ph = np.eye(trunc.dim)
    wc, g = params.omega_c, params.g
    h = (
        wc * np.kron(eye_s, num)
        + g * np.kron(sx, a + a.T)
        + (g * g / wc + params.j_coupling / n) * np.kron(sx @ sx, eye_ph)
        + params.omega0 * np.kron(sz, eye_ph)
    )
    return h
