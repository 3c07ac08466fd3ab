"""Thermal emission from the cavity: line lists, spectra, power and the
Holstein-Primakoff polariton model used as a low-excitation reference.

The output field couples to A + A^dag, where A = a + (g/omega_c) S_x.  In the
polaron frame A maps onto the bare photon operator a, so matrix elements are
taken of a + a^dag between polaron-frame eigenvectors.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, thermal_occupation
from .thermo import MissingEigenvectorsError, SectorSpectrum, ThermalEnsemble

PRUNE_REL = 1e-14
MERGE_TOL = 1e-12
MIN_LINE_FREQ = 1e-12


class InstabilityError(ArithmeticError):
    pass


@dataclass(frozen=True)
class EmissionLineList:
    omega: np.ndarray
    weight: np.ndarray
    kappa: float
    gamma: float
    params: ModelParams

    def __len__(self) -> int:
        return self.omega.size


def _quadrature_elements(sp: SectorSpectrum) -> np.ndarray:
    """<E_n| a + a^dag |E_m> within one sector."""
    v = sp.require_vectors()
    d_spin = sp.sector.dim
    d_ph = v.shape[0] // d_spin
    x = np.sqrt(np.arange(1, d_ph, dtype=float))
    t = v.reshape(d_spin, d_ph, -1)
    xv = np.zeros_like(t)
    # (a + a^dag) acts on the photon index only
    xv[:, :-1, :] += x[None, :, None] * t[:, 1:, :]
    xv[:, 1:, :] += x[None, :, None] * t[:, :-1, :]
    return v.T @ xv.reshape(v.shape)


def sector_lines(ensemble: ThermalEnsemble, index: int) -> tuple[np.ndarray, np.ndarray]:
    """Unmerged, unpruned (omega_nm, weight) of one sector, ordered by (n, m)."""
    sp = ensemble.spectra[index]
    p = ensemble.probabilities[index]
    e = sp.eigenvalues
    x = _quadrature_elements(sp)
    omega = e[:, None] - e[None, :]
    n_idx, m_idx = np.nonzero(omega > MIN_LINE_FREQ)
    w = omega[n_idx, m_idx]
    weight = p[n_idx] * w**2 * x[n_idx, m_idx] ** 2
    return w, weight


def emission_lines(ensemble: ThermalEnsemble, kappa: float = 1.0, gamma: float = 0.04) -> EmissionLineList:
    """Black-body emission lines (omega_nm, weight) summed over all sectors.

    weight = p_n omega_nm^2 |<E_n|A + A^dag|E_m>|^2 with p_n including the
    sector multiplicity.  Lines below 1e-14 of the strongest are pruned and
    lines closer than 1e-12 are merged.
    """
    if not ensemble.has_vectors:
        raise MissingEigenvectorsError("emission lines need eigenvectors; build the ensemble with want_vectors=True")
    if kappa >= gamma:
        warnings.warn("kappa should be much smaller than gamma", RuntimeWarning, stacklevel=2)
    omegas, weights = [], []
    for i in range(len(ensemble.spectra)):
        w, wt = sector_lines(ensemble, i)
        omegas.append(w)
        weights.append(wt)
    omega = np.concatenate(omegas)
    weight = np.concatenate(weights)
    if weight.size:
        keep = weight >= PRUNE_REL * weight.max()
        omega, weight = omega[keep], weight[keep]
    order = np.argsort(omega, kind="stable")
    omega, weight = omega[order], weight[order]
    if omega.size > 1:
        new_group = np.concatenate([[True], np.diff(omega) >= MERGE_TOL])
        groups = np.cumsum(new_group) - 1
        merged_w = np.bincount(groups, weights=weight)
        merged_o = np.bincount(groups, weights=weight * omega) / np.where(merged_w > 0, merged_w, 1.0)
        first = omega[new_group]
        omega = np.where(merged_w > 0, merged_o, first)
        weight = merged_w
    if omega.size and gamma > 0.5 * omega.min():
        warnings.warn("gamma is not small compared with the lowest line frequency", RuntimeWarning, stacklevel=2)
    return EmissionLineList(omega, weight, float(kappa), float(gamma), ensemble.params)


def sampled_spectrum(lines: EmissionLineList, omega_grid) -> np.ndarray:
    """S_bb(omega) = (kappa gamma / 2 pi omega_c) sum_l w_l / ((omega - omega_l)^2 + gamma^2/4)."""
    grid = np.asarray(omega_grid, dtype=float)
    if len(lines) == 0:
        return np.zeros_like(grid)
    pref = lines.kappa * lines.gamma / (2 * math.pi * lines.params.omega_c)
    out = np.zeros_like(grid)
    # chunk so the (grid, lines) block stays around 2e6 entries
    step = max(1, 2_000_000 // max(grid.size, 1))
    for start in range(0, len(lines), step):
        o = lines.omega[start : start + step]
        w = lines.weight[start : start + step]
        out += ((grid[:, None] - o[None, :]) ** 2 + 0.25 * lines.gamma**2) ** -1 @ w
    return pref * out


def radiated_power(lines: EmissionLineList) -> tuple[float, float | None]:
    """Total power (kappa/omega_c) sum w and its ratio to omega_c kappa N_th.

    The ratio is None when N_th = 0 (T = 0).
    """
    p = lines.params
    power = lines.kappa / p.omega_c * float(lines.weight.sum())
    n_th = thermal_occupation(p.omega_c, p.temperature)
    if n_th == 0:
        return power, None
    return power, power / (p.omega_c * lines.kappa * n_th)


def single_excitation_energies(ensemble: ThermalEnsemble, count: int = 2) -> np.ndarray:
    """Lowest ``count`` excitation energies of the fully symmetric sector."""
    sp = max(ensemble.spectra, key=lambda s: s.sector.two_s)
    e = sp.eigenvalues
    return e[1 : count + 1] - e[0]


# ---------------------------------------------------------------- Holstein-Primakoff


@dataclass(frozen=True)
class HpPolaritons:
    omega_plus: float
    omega_minus: float
    v_plus: float
    v_minus: float
    phi_plus: float
    phi_minus: float
    # normal-mode eigenvectors in mass-weighted coordinates, rows (cavity, matter)
    modes: np.ndarray
    omega_c: float = 1.0
    omega0: float = 1.0

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([self.omega_plus, self.omega_minus])

    def bogoliubov(self) -> tuple[np.ndarray, np.ndarray]:
        """(alpha, beta) with c_eta = sum_j alpha_j a_j + beta_j a_j^dag, shape (2 modes, 2 bare)."""
        bare = np.array([self.omega_c, self.omega0])
        r = np.sqrt(self.frequencies[:, None] / bare[None, :])
        u = self.modes.T
        return 0.5 * u * (r + 1 / r), 0.5 * u * (r - 1 / r)


def hp_polaritons(params: ModelParams) -> HpPolaritons:
    """Bright polaritons of the linearized (Holstein-Primakoff) model, J = 0 only."""
    if params.j_coupling != 0:
        raise ValueError("the polariton model is implemented for J = 0 only")
    wc, w0 = params.omega_c, abs(params.omega0)
    G = params.collective_g
    if w0 == 0:
        raise InstabilityError("omega0 = 0 leaves a zero-frequency matter mode")
    off = G * math.sqrt(wc * w0)
    m = np.array([[wc * wc, off], [off, w0 * w0 + G * G * w0 / wc]])
    lam, u = np.linalg.eigh(m)
    if lam.min() <= 0:
        raise InstabilityError(f"imaginary normal-mode frequency at G={G}")
    freqs = np.sqrt(lam)
    # fix the sign so the cavity component is non-negative
    u = u * np.where(u[0] < 0, -1.0, 1.0)
    v = u[0] * np.sqrt(wc / freqs) + (G / wc) * u[1] * np.sqrt(w0 / freqs)
    phi = u[0] * np.sqrt(freqs / wc)
    # eigh sorts ascending: index 1 is the upper branch
    return HpPolaritons(
        omega_plus=float(freqs[1]),
        omega_minus=float(freqs[0]),
        v_plus=float(v[1]),
        v_minus=float(v[0]),
        phi_plus=float(phi[1]),
        phi_minus=float(phi[0]),
        modes=u[:, ::-1].copy(),
        omega_c=wc,
        omega0=w0,
    )


def hp_power_and_energy(hp: HpPolaritons, temperature: float, include_offset: bool = False) -> tuple[float | None, float]:
    """(power ratio P/P_0, <H_em>) of the polariton model.

    The ratio is None at T = 0.  <H_em> = omega_c <A^dag A> contains the
    vacuum term omega_c [sum (V^2 + Phi^2)/4 - 1/2]; ``include_offset`` adds
    omega_c / 2.
    """
    wc = hp.omega_c
    freqs = hp.frequencies
    v = np.array([hp.v_plus, hp.v_minus])
    phi = np.array([hp.phi_plus, hp.phi_minus])
    n_eta = np.array([thermal_occupation(f, temperature) for f in freqs])
    quad = v**2 + phi**2
    energy = wc * (float(quad @ n_eta) / 2 + float(quad.sum()) / 4 - 0.5)
    if include_offset:
        energy += 0.5 * wc
    n_c = thermal_occupation(wc, temperature)
    if n_c == 0:
        return None, energy
    ratio = float((v**2 * freqs**2 / wc**2) @ n_eta) / n_c
    return ratio, energy
