"""Exact thermodynamics from sector-resolved diagonalization.

The spectrum of every sector Hamiltonian is independent of temperature, so a
:class:`ThermalEnsemble` can be re-weighted at a new temperature without
re-diagonalizing (see :meth:`ThermalEnsemble.at_temperature`).  All Boltzmann
sums are shifted by the global ground-state energy and carry the sector
multiplicities as additive logarithms.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from .model import (
    FockTruncation,
    ModelParams,
    assemble_sector,
    default_cutoff,
    polaron_sz,
    resolve_truncation,
    thermal_occupation,
)
from .spin import SpinSector, sectors, spin_matrices

DEGENERACY_TOL = 1e-10


class DiagonalizationError(RuntimeError):
    def __init__(self, sector: SpinSector, msg: str):
        super().__init__(f"eigensolver failed in sector s={sector.s} (N={sector.n_dipoles}): {msg}")
        self.sector = sector


class MissingEigenvectorsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SectorSpectrum:
    sector: SpinSector
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    # None when the eigenvectors were not kept
    residual: float | None = None
    n_ph: int | None = None

    @property
    def multiplicity(self) -> int:
        return self.sector.multiplicity

    def require_vectors(self) -> np.ndarray:
        if self.eigenvectors is None:
            raise MissingEigenvectorsError(
                f"sector s={self.sector.s} was diagonalized without eigenvectors"
            )
        return self.eigenvectors

    @cached_property
    def mx_profile(self) -> np.ndarray:
        """Weight of every eigenvector on each m_x value, shape (2s+1, levels)."""
        vecs = self.require_vectors()
        d_spin = self.sector.dim
        return (vecs.reshape(d_spin, -1, vecs.shape[1]) ** 2).sum(axis=1)


def _parity_blocks(d_spin: int, d_ph: int):
    """Index/coefficient tables for the two parity blocks.

    The parity maps |m, n> to (-1)^n |-m, n>; it commutes with every sector
    Hamiltonian built by :func:`assemble_sector`.
    """
    blocks = []
    for parity in (1, -1):
        ia, ib, ca, cb = [], [], [], []
        for mi in range((d_spin + 1) // 2):
            partner = d_spin - 1 - mi
            for n in range(d_ph):
                sign = 1 if n % 2 == 0 else -1
                a = mi * d_ph + n
                if partner == mi:
                    if sign == parity:
                        ia.append(a); ib.append(a); ca.append(1.0); cb.append(0.0)
                else:
                    ia.append(a); ib.append(partner * d_ph + n)
                    ca.append(math.sqrt(0.5)); cb.append(parity * sign * math.sqrt(0.5))
        blocks.append((np.array(ia), np.array(ib), np.array(ca), np.array(cb)))
    return blocks


def _project(h: np.ndarray, ia, ib, ca, cb) -> np.ndarray:
    return (
        np.outer(ca, ca) * h[np.ix_(ia, ia)]
        + np.outer(ca, cb) * h[np.ix_(ia, ib)]
        + np.outer(cb, ca) * h[np.ix_(ib, ia)]
        + np.outer(cb, cb) * h[np.ix_(ib, ib)]
    )


def _eigh(mat: np.ndarray, want_vectors: bool, sector: SpinSector):
    try:
        if want_vectors:
            return np.linalg.eigh(mat)
        return np.linalg.eigvalsh(mat), None
    except np.linalg.LinAlgError as exc:
        raise DiagonalizationError(sector, str(exc)) from exc


def diagonalize(h, want_vectors: bool = False, use_parity: bool = True) -> SectorSpectrum:
    """Full symmetric eigendecomposition of a sector Hamiltonian.

    Parameters
    ----------
    h : SectorHamiltonian
    want_vectors : bool
        Keep eigenvectors (needed for operator expectation values, p(m_x)
        and emission lines).  The relative residual max ||Hv - lv|| / ||H||
        is recorded when vectors are kept.
    use_parity : bool
        Split the matrix into its two parity blocks before calling LAPACK.
    """
    mat = h.matrix
    sector = h.sector
    if not np.all(np.isfinite(mat)):
        raise DiagonalizationError(sector, "matrix has non-finite entries")
    dim = mat.shape[0]
    offdiag = mat - np.diag(np.diag(mat))
    if not offdiag.any():
        order = np.argsort(np.diag(mat), kind="stable")
        vals = np.diag(mat)[order].copy()
        vecs = np.eye(dim)[:, order] if want_vectors else None
        return SectorSpectrum(sector, vals, vecs, 0.0 if want_vectors else None, h.trunc.n_ph)

    if use_parity and sector.dim > 1:
        parts_v, parts_w = [], []
        for ia, ib, ca, cb in _parity_blocks(sector.dim, h.trunc.dim):
            if ia.size == 0:
                continue
            w, u = _eigh(_project(mat, ia, ib, ca, cb), want_vectors, sector)
            parts_w.append(w)
            if want_vectors:
                full = np.zeros((dim, u.shape[1]))
                full[ia] = ca[:, None] * u
                full[ib] += cb[:, None] * u
                parts_v.append(full)
        vals = np.concatenate(parts_w)
        order = np.argsort(vals, kind="stable")
        vals = vals[order]
        vecs = np.hstack(parts_v)[:, order] if want_vectors else None
    else:
        vals, vecs = _eigh(mat, want_vectors, sector)

    residual = None
    if want_vectors:
        scale = max(np.abs(vals).max(), 1e-300)
        residual = float(np.linalg.norm(mat @ vecs - vecs * vals, axis=0).max() / scale)
    return SectorSpectrum(sector, vals, vecs, residual, h.trunc.n_ph)


def _boltzmann(spectra: Sequence[SectorSpectrum], temperature: float):
    """Return (log Z, ground energy, per-sector level probabilities).

    The probabilities include the multiplicity, so they sum to one over all
    (sector, level) pairs.
    """
    e0 = min(sp.eigenvalues[0] for sp in spectra)
    if temperature == 0:
        mask = [sp.eigenvalues - e0 <= DEGENERACY_TOL * max(1.0, abs(e0)) for sp in spectra]
        counts = [m.astype(float) * sp.multiplicity for m, sp in zip(mask, spectra)]
        total = sum(c.sum() for c in counts)
        return math.inf, e0, [c / total for c in counts]
    beta = 1.0 / temperature
    logw = [math.log(sp.multiplicity) - beta * (sp.eigenvalues - e0) for sp in spectra]
    log_sum = logsumexp(np.concatenate(logw))
    probs = [np.exp(lw - log_sum) for lw in logw]
    return log_sum - beta * e0, e0, probs


@dataclass(frozen=True, eq=False)
class ThermalEnsemble:
    params: ModelParams
    trunc: FockTruncation
    spectra: tuple
    log_z: float
    ground_energy: float
    probabilities: tuple = field(repr=False)

    @property
    def temperature(self) -> float:
        return self.params.temperature

    @property
    def has_vectors(self) -> bool:
        return all(sp.eigenvectors is not None for sp in self.spectra)

    @property
    def residual(self) -> float | None:
        res = [sp.residual for sp in self.spectra]
        return None if any(r is None for r in res) else max(res)

    def at_temperature(self, temperature: float) -> "ThermalEnsemble":
        """Same spectra, re-weighted at another temperature."""
        return _ensemble_from_spectra(self.params.replace(temperature=temperature), self.trunc, self.spectra)

    @property
    def free_energy_value(self) -> float:
        if self.temperature == 0:
            return self.ground_energy
        return -self.temperature * self.log_z


def _ensemble_from_spectra(params, trunc, spectra) -> ThermalEnsemble:
    if params.temperature < 0:
        raise ValueError("temperature must be non-negative")
    log_z, e0, probs = _boltzmann(spectra, params.temperature)
    return ThermalEnsemble(params, trunc, tuple(spectra), log_z, e0, tuple(probs))


def sector_spectra(
    params: ModelParams, trunc: FockTruncation | int | None = None, want_vectors: bool = False
) -> tuple:
    trunc = resolve_truncation(params, trunc)
    return tuple(
        diagonalize(assemble_sector(params, sec, trunc), want_vectors) for sec in sectors(params.n_dipoles)
    )


def thermal_ensemble(
    params: ModelParams, trunc: FockTruncation | int | None = None, want_vectors: bool = False
) -> ThermalEnsemble:
    """Diagonalize every sector and weight the levels at ``params.temperature``."""
    trunc = resolve_truncation(params, trunc)
    return _ensemble_from_spectra(params, trunc, sector_spectra(params, trunc, want_vectors))


# ---------------------------------------------------------------- bare parts


def cavity_free_energy(temperature: float, omega_c: float = 1.0) -> float:
    if temperature == 0:
        return 0.0
    return temperature * math.log(-math.expm1(-omega_c / temperature))


def cavity_heat_capacity(temperature: float, omega_c: float = 1.0) -> float:
    if temperature == 0:
        return 0.0
    n_th = thermal_occupation(omega_c, temperature)
    return (omega_c / temperature) ** 2 * n_th * (n_th + 1)


def _log_2cosh(x: float) -> float:
    x = abs(x)
    return x + math.log1p(math.exp(-2 * x))


class DipoleThermo(NamedTuple):
    free_energy: float
    energy: float
    heat_capacity: float
    sz: float
    sx2: float
    sx: float


@lru_cache(maxsize=512)
def _dipole_spectra(n: int, omega0: float, j_coupling: float) -> tuple:
    out = []
    for sec in sectors(n):
        spin = spin_matrices(sec)
        h = omega0 * spin.sz + (j_coupling / n) * spin.sx2
        w, v = np.linalg.eigh(h)
        out.append(SectorSpectrum(sec, w, v))
    return tuple(out)


def dipole_spectra(params: ModelParams, omega0: float | None = None) -> tuple:
    """Spectra of H_dip = omega0 S_z + (J/N) S_x^2, with eigenvectors."""
    w0 = params.omega0 if omega0 is None else omega0
    return _dipole_spectra(params.n_dipoles, float(w0), float(params.j_coupling))


def dipole_thermo(params: ModelParams, omega0: float | None = None) -> DipoleThermo:
    """Thermodynamics of the bare dipoles (no cavity)."""
    spectra = dipole_spectra(params, omega0)
    T = params.temperature
    log_z, e0, probs = _boltzmann(spectra, T)
    f = e0 if T == 0 else -T * log_z
    energy = sum(float(p @ (sp.eigenvalues - e0)) for p, sp in zip(probs, spectra))
    second = sum(float(p @ (sp.eigenvalues - e0) ** 2) for p, sp in zip(probs, spectra))
    c = 0.0 if T == 0 else (second - energy**2) / T**2
    sz = sx2 = sx = 0.0
    for p, sp in zip(probs, spectra):
        spin = spin_matrices(sp.sector)
        v = sp.eigenvectors
        sz += float(p @ np.einsum("ij,ik,kj->j", v, spin.sz, v))
        m = sp.sector.m_values
        sx2 += float(p @ ((v**2).T @ m**2))
        sx += float(p @ ((v**2).T @ m))
    return DipoleThermo(f, energy + e0, c, sz, sx2, sx)


def dipole_free_energy(params: ModelParams, omega0: float | None = None) -> float:
    """F_dip^0; closed form for non-interacting dipoles."""
    w0 = params.omega0 if omega0 is None else omega0
    T, n = params.temperature, params.n_dipoles
    if params.j_coupling == 0:
        if T == 0:
            return -n * abs(w0) / 2
        return -n * T * _log_2cosh(w0 / (2 * T))
    return dipole_thermo(params, w0).free_energy


def dipole_heat_capacity(params: ModelParams) -> float:
    T = params.temperature
    if params.j_coupling == 0:
        if T == 0:
            return 0.0
        x = params.omega0 / (2 * T)
        return params.n_dipoles * (x / math.cosh(x)) ** 2
    return dipole_thermo(params).heat_capacity


# ---------------------------------------------------------------- free energy


@dataclass(frozen=True)
class FreeEnergyReport:
    f_total: float
    f_cavity0: float
    f_dip0: float
    f_g: float


def free_energy(ensemble: ThermalEnsemble) -> FreeEnergyReport:
    p = ensemble.params
    if p.temperature < 0:
        raise ValueError("temperature must be non-negative")
    f = ensemble.free_energy_value
    fc = cavity_free_energy(p.temperature, p.omega_c)
    fd = dipole_free_energy(p)
    return FreeEnergyReport(f, fc, fd, f - fc - fd)


def coupling_free_energy(params: ModelParams, trunc=None) -> float:
    return free_energy(thermal_ensemble(params, trunc)).f_g


# ---------------------------------------------------------------- observables

OBSERVABLES = ("Sx", "Sx2", "Sz", "AdagA", "Hem", "H", "H2")


def _level_values(ens: ThermalEnsemble, sp: SectorSpectrum, tag: str) -> np.ndarray:
    p = ens.params
    if tag == "H":
        return sp.eigenvalues
    if tag == "H2":
        return sp.eigenvalues**2
    vecs = sp.require_vectors()
    d_ph = ens.trunc.dim
    sq = vecs**2
    if tag in ("Sx", "Sx2"):
        m = sp.sector.m_values
        diag = np.repeat(m if tag == "Sx" else m**2, d_ph)
        return diag @ sq
    if tag in ("AdagA", "Hem"):
        diag = np.tile(np.arange(d_ph, dtype=float), sp.sector.dim)
        scale = 1.0 if tag == "AdagA" else p.omega_c
        return scale * (diag @ sq)
    if tag == "Sz":
        t = polaron_sz(p, sp.sector, ens.trunc)
        return np.einsum("ij,ij->j", vecs, t @ vecs)
    raise ValueError(f"unknown observable {tag!r}; expected one of {OBSERVABLES}")


def expectation(ensemble: ThermalEnsemble, tag: str) -> float:
    """Thermal average of a physical observable.

    ``Sz`` is evaluated through the polaron-transformed operator, ``AdagA``
    through a^dag a in the polaron frame (U A U^dag = a).  ``Hem`` is
    omega_c <A^dag A> without the vacuum offset.
    """
    if tag not in OBSERVABLES:
        raise ValueError(f"unknown observable {tag!r}; expected one of {OBSERVABLES}")
    if tag not in ("H", "H2") and not ensemble.has_vectors:
        raise MissingEigenvectorsError(f"observable {tag} needs eigenvectors")
    return float(
        sum(prob @ _level_values(ensemble, sp, tag) for prob, sp in zip(ensemble.probabilities, ensemble.spectra))
    )


def em_energy(ensemble: ThermalEnsemble, include_offset: bool = False) -> float:
    """<H_em> = omega_c <A^dag A>, optionally with the omega_c/2 offset."""
    e = expectation(ensemble, "Hem")
    return e + 0.5 * ensemble.params.omega_c if include_offset else e


def energy_moments(ensemble: ThermalEnsemble) -> tuple[float, float]:
    """Mean energy and variance, evaluated on ground-shifted energies."""
    e0 = ensemble.ground_energy
    mean = sum(float(p @ (sp.eigenvalues - e0)) for p, sp in zip(ensemble.probabilities, ensemble.spectra))
    second = sum(float(p @ (sp.eigenvalues - e0) ** 2) for p, sp in zip(ensemble.probabilities, ensemble.spectra))
    return mean + e0, second - mean**2


def entropy(ensemble: ThermalEnsemble) -> float:
    T = ensemble.temperature
    if T == 0:
        raise ValueError("entropy evaluated here only for T > 0")
    mean, _ = energy_moments(ensemble)
    return (mean - ensemble.free_energy_value) / T


class HeatCapacity(NamedTuple):
    total: float
    coupling: float


def heat_capacity(ensemble: ThermalEnsemble) -> HeatCapacity:
    """C from the energy variance and the coupling part C_g = C - C_c^0 - C_dip^0."""
    T = ensemble.temperature
    if T <= 0:
        raise ValueError("heat capacity requires T > 0")
    _, var = energy_moments(ensemble)
    c = var / T**2
    p = ensemble.params
    c_g = c - cavity_heat_capacity(T, p.omega_c) - dipole_heat_capacity(p)
    return HeatCapacity(c, c_g)


# ---------------------------------------------------------------- susceptibility


def susceptibility_curve(
    params: ModelParams,
    temperatures: Sequence[float],
    trunc: FockTruncation | int | None = None,
    step: float = 1e-3,
    richardson: bool = False,
) -> np.ndarray:
    """Zero-field susceptibility at several temperatures.

    Uses that F is even in omega0: chi_z = -(2/N) (F(h) - F(0)) / h^2.  The
    spectra at omega0 = h and 0 are computed once and re-weighted per T.
    """
    temps = np.asarray(temperatures, dtype=float)
    if np.any(temps <= 0):
        raise ValueError("susceptibility requires T > 0")
    if step <= 0:
        raise ValueError("step must be positive")
    if trunc is None:
        trunc = FockTruncation(default_cutoff(float(temps.max()), params.omega_c))
    trunc = resolve_truncation(params, trunc)
    n = params.n_dipoles

    def chi_for(h):
        base = _ensemble_from_spectra(params.replace(omega0=0.0), trunc, sector_spectra(params.replace(omega0=0.0), trunc))
        pert = _ensemble_from_spectra(params.replace(omega0=h), trunc, sector_spectra(params.replace(omega0=h), trunc))
        out = []
        for T in temps:
            f0 = base.at_temperature(T).free_energy_value
            fh = pert.at_temperature(T).free_energy_value
            out.append(-2.0 / n * (fh - f0) / h**2)
        return np.array(out)

    chi = chi_for(step)
    if richardson:
        chi_half = chi_for(step / 2)
        chi = (4 * chi_half - chi) / 3
    return chi


def zero_field_susceptibility(
    params: ModelParams, trunc: FockTruncation | int | None = None, step: float = 1e-3, richardson: bool = False
) -> float:
    """chi_z = -(1/N) d^2F/d omega0^2 at omega0 = 0, by central differences."""
    if params.temperature <= 0:
        raise ValueError("susceptibility requires T > 0")
    return float(susceptibility_curve(params, [params.temperature], trunc, step, richardson)[0])


class CurieFit(NamedTuple):
    alpha_c: float
    offset: float


def curie_fit(
    params: ModelParams,
    t_window: Sequence[float],
    trunc: FockTruncation | int | None = None,
    step: float = 1e-3,
) -> CurieFit:
    """Least-squares fit of T chi_z = alpha_C + offset * T over a low-T window.

    ``offset`` is the temperature-independent (plateau) contribution.
    """
    temps = np.asarray(t_window, dtype=float)
    if temps.size < 2:
        raise ValueError("need at least two temperatures")
    chi = susceptibility_curve(params, temps, trunc, step)
    slope, intercept = np.polyfit(temps, temps * chi, 1)
    return CurieFit(float(intercept), float(slope))


def curie_constant(params: ModelParams, trunc=None, t_fit_window: Sequence[float] = (0.02, 0.03, 0.04, 0.05)) -> float:
    return curie_fit(params, t_fit_window, trunc).alpha_c


# ---------------------------------------------------------------- ferroelectric phase


class Phase(enum.Enum):
    UNIMODAL = "unimodal"
    BIMODAL = "bimodal"


def mx_distribution(ensemble: ThermalEnsemble) -> np.ndarray:
    """p(m_x) for m_x = -N/2, ..., N/2.

    The projector on fixed m_x commutes with the polaron transformation, so
    it is evaluated directly on the polaron-frame eigenvectors.
    """
    n = ensemble.params.n_dipoles
    p = np.zeros(n + 1)
    for prob, sp in zip(ensemble.probabilities, ensemble.spectra):
        offset = (n - sp.sector.two_s) // 2
        p[offset : offset + sp.sector.dim] += sp.mx_profile @ prob
    return p


def classify_phase(p: np.ndarray, tol: float = 1e-12) -> Phase:
    """Bimodal iff the maximum over m_x >= 0 sits away from the centre."""
    p = np.asarray(p, dtype=float)
    # m_x >= 0 (m_x >= 1/2 for odd N)
    half = p[p.size // 2 :]
    inner = half[0]
    peak = half.max()
    if peak - inner <= tol * max(peak, 1e-300):
        return Phase.UNIMODAL
    return Phase.BIMODAL if int(np.argmax(half)) > 0 else Phase.UNIMODAL


def order_parameter(ensemble: ThermalEnsemble) -> float:
    """m_bar = sqrt(<S_x^2>)."""
    return math.sqrt(max(expectation(ensemble, "Sx2"), 0.0))


class BracketError(ValueError):
    pass


def critical_temperature(
    params: ModelParams,
    trunc: FockTruncation | int | None = None,
    t_bracket: tuple[float, float] = (0.02, 3.0),
    rel_width: float = 1e-3,
) -> float:
    """Temperature where p(m_x) turns from bimodal (below) to unimodal.

    Bisection on T; the spectrum is computed once.
    """
    lo, hi = map(float, t_bracket)
    if not 0 < lo < hi:
        raise BracketError("need 0 < t_lo < t_hi")
    if trunc is None:
        trunc = FockTruncation(default_cutoff(hi, params.omega_c))
    ens = thermal_ensemble(params.replace(temperature=hi), trunc, want_vectors=True)

    def phase(T):
        return classify_phase(mx_distribution(ens.at_temperature(T)))

    if phase(lo) is not Phase.BIMODAL or phase(hi) is not Phase.UNIMODAL:
        raise BracketError(f"no bimodal->unimodal change in [{lo}, {hi}]")
    while hi - lo > rel_width * 0.5 * (hi + lo):
        mid = 0.5 * (lo + hi)
        if phase(mid) is Phase.BIMODAL:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
