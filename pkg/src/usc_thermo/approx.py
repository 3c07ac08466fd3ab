"""Approximate and analytic descriptions of the coupled system.

Contents: mean-field theories (LMG and cavity), second-order perturbation
theory in g, the low-frequency series in omega0 in the polaron frame, the
Bogoliubov variational bound and the strong-coupling effective spin model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln, logsumexp

from .model import ModelParams, thermal_occupation
from .spin import SpinSector, sectors, spin_matrices
from .thermo import (
    cavity_free_energy,
    dipole_free_energy,
    dipole_spectra,
    dipole_thermo,
    _boltzmann,
)

RESONANCE_RADIUS = 1e-6
MF_SCAN_POINTS = 256
MF_TOL = 1e-10
MAX_SERIES_ORDER = 200
# (Delta S_x)^2 above its uncorrelated value N/4 by more than roundoff
ANOMALY_SLACK = 1e-9


class SeriesConvergenceError(RuntimeError):
    pass


# ------------------------------------------------------------------ helpers


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float = MF_TOL) -> float:
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def scan_minimize(f: Callable[[float], float], lo: float, hi: float,
                  n_scan: int = MF_SCAN_POINTS, tol: float = MF_TOL) -> tuple[float, float]:
    """Coarse scan followed by golden-section refinement around the best point."""
    if hi <= lo:
        return lo, f(lo)
    xs = np.linspace(lo, hi, n_scan)
    vals = np.array([f(x) for x in xs])
    i = int(np.argmin(vals))
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, n_scan - 1)]
    x = golden_section(f, a, b, tol)
    fx = f(x)
    # endpoints of the scan are legitimate minima (e.g. Sigma_x = 0)
    if vals[i] < fx:
        return float(xs[i]), float(vals[i])
    return x, fx


def kernel_g(x: np.ndarray) -> np.ndarray:
    """(e^x - 1 - x) / x^2, stable for all real x."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-2
    xs = x[small]
    out[small] = 0.5 + xs / 6 + xs**2 / 24 + xs**3 / 120 + xs**4 / 720
    xl = x[~small]
    out[~small] = (np.expm1(xl) - xl) / xl**2
    return out


def log_kernel_g(x: np.ndarray) -> np.ndarray:
    """log of :func:`kernel_g`, safe against overflow for large positive x."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    big = x > 20
    xb = x[big]
    out[big] = xb + np.log(-np.expm1(-xb) - xb * np.exp(-xb)) - 2 * np.log(xb)
    out[~big] = np.log(kernel_g(x[~big]))
    return out


def time_integral(delta, beta: float, omega_c: float = 1.0):
    """I(Delta) = (omega_c / beta) int_0^beta dt1 int_0^t1 dt2 exp(Delta (t1 - t2)).

    Closed form omega_c (e^{beta Delta} - 1 - beta Delta) / (beta Delta^2),
    with I(0) = omega_c beta / 2.
    """
    delta = np.asarray(delta, dtype=float)
    return omega_c * beta * kernel_g(beta * delta)


# ------------------------------------------------------------------ LMG mean field


@dataclass(frozen=True)
class LmgMeanField:
    free_energy: float
    sigma_x: float
    sigma_z: float
    phase: str
    scan_points: int = MF_SCAN_POINTS


def _lmg_mf_energy(sigma: float, params: ModelParams, omega0: float, cavity_coef: float = 0.0) -> float:
    """Mean-field free energy; ``cavity_coef`` adds the self-consistent cavity field.

    With the cavity also decoupled the spins feel 2 (g^2/omega_c)(Sigma_spin - Sigma_x),
    written here with Sigma_spin = Sigma_x, so the cavity terms vanish identically.
    """
    n, J, T = params.n_dipoles, params.j_coupling, params.temperature
    hx = 2 * J * sigma / n + 2 * cavity_coef * (sigma - sigma)
    omega = math.hypot(omega0, hx)
    if T == 0:
        spins = -n * omega / 2
    else:
        x = omega / (2 * T)
        spins = -T * n * (x + math.log1p(math.exp(-2 * x)))
    return spins - J / n * sigma**2 - cavity_coef * (sigma - sigma) ** 2


def _lmg_solve(params: ModelParams, omega0: float, cavity_coef: float = 0.0) -> tuple[float, float]:
    n = params.n_dipoles
    if params.j_coupling >= 0:
        return 0.0, _lmg_mf_energy(0.0, params, omega0, cavity_coef)
    return scan_minimize(lambda s: _lmg_mf_energy(s, params, omega0, cavity_coef), 0.0, n / 2)


def lmg_mean_field(params: ModelParams, omega0: float | None = None) -> LmgMeanField:
    """Mean-field free energy of the bare LMG model minimized over Sigma_x."""
    w0 = params.omega0 if omega0 is None else omega0
    n, J, T = params.n_dipoles, params.j_coupling, params.temperature
    sigma, f = _lmg_solve(params, w0)
    omega = math.hypot(w0, 2 * J * sigma / n)
    if omega == 0:
        sigma_z = 0.0
    else:
        th = 1.0 if T == 0 else math.tanh(omega / (2 * T))
        sigma_z = -n * w0 / (2 * omega) * th
    phase = "ferroelectric" if sigma > 1e-6 * n else "paraelectric"
    return LmgMeanField(f, sigma, sigma_z, phase)


def lmg_critical_temperature(omega0: float, j_coupling: float) -> float:
    """T_c solving tanh(omega0 / 2T_c) = -omega0 / J_c; 0 if there is no ordered phase."""
    w0 = abs(omega0)
    if j_coupling >= 0 or -j_coupling <= w0:
        return 0.0
    if w0 == 0:
        return -j_coupling / 2
    return w0 / (2 * math.atanh(-w0 / j_coupling))


def lmg_critical_coupling(omega0: float, temperature: float) -> float:
    """J_c at temperature T from the same relation."""
    w0 = abs(omega0)
    if temperature == 0:
        return -w0
    if w0 == 0:
        return -2 * temperature
    return -w0 / math.tanh(w0 / (2 * temperature))


def renormalized_omega0(params: ModelParams, temperature: float | None = None) -> float:
    """omega0 exp[-(g/omega_c)^2 (1 + 2 N_th) / 2]."""
    T = params.temperature if temperature is None else temperature
    n_th = thermal_occupation(params.omega_c, T)
    return params.omega0 * math.exp(-0.5 * params.lamb**2 * (1 + 2 * n_th))


def modified_mf_critical_temperature(params: ModelParams, t_bracket=(1e-3, 50.0)) -> float:
    """Mean-field T_c with omega0 replaced by the renormalized frequency.

    Solves tanh(w(T)/2T) = -w(T)/J for T, where w(T) depends on T through N_th.
    Returns 0 when no ordered phase exists in the bracket.
    """
    J = params.j_coupling
    if J >= 0:
        return 0.0

    def h(T):
        w = renormalized_omega0(params, T)
        return math.tanh(w / (2 * T)) + w / J

    lo, hi = t_bracket
    if h(lo) * h(hi) > 0:
        return 0.0
    return brentq(h, lo, hi, xtol=1e-12, rtol=1e-12)


# ------------------------------------------------------------------ cavity mean field


@dataclass(frozen=True)
class MeanFieldSolution:
    sigma_x: float
    alpha: float
    f_mf: float
    f_g_mf: float
    converged: bool
    scan_points: int = MF_SCAN_POINTS


def _log_z_spin(params: ModelParams, extra: Callable[[SpinSector], np.ndarray]) -> tuple[float, float]:
    """(log Z, E0) of omega0 S_z + (J/N) S_x^2 + extra(sector), all sectors."""
    n = params.n_dipoles
    vals, logm = [], []
    for sec in sectors(n):
        spin = spin_matrices(sec)
        h = params.omega0 * spin.sz + (params.j_coupling / n) * spin.sx2 + extra(sec)
        w = np.linalg.eigvalsh(h)
        vals.append(w)
        logm.append(np.full(w.size, math.log(sec.multiplicity)))
    w = np.concatenate(vals)
    e0 = w.min()
    T = params.temperature
    if T == 0:
        return math.inf, e0
    return float(logsumexp(np.concatenate(logm) - (w - e0) / T)), e0


def cavity_mean_field_fg(params: ModelParams) -> MeanFieldSolution:
    """Mean-field decoupling of the dipole-field coupling only.

    The dipole partition function with
    H_dip + (g^2/omega_c)(S_x - Sigma_x)^2 is evaluated exactly and the total
    free energy is minimized over Sigma_x.
    """
    T = params.temperature
    coef = params.g**2 / params.omega_c

    def f_of(sigma):
        def extra(sec):
            m = sec.m_values
            return np.diag(coef * (m - sigma) ** 2)

        log_z, e0 = _log_z_spin(params, extra)
        f_spin = e0 if T == 0 else e0 - T * log_z
        return cavity_free_energy(T, params.omega_c) + f_spin

    sigma, f = scan_minimize(f_of, 0.0, params.n_dipoles / 2)
    f_g = f - cavity_free_energy(T, params.omega_c) - dipole_free_energy(params)
    return MeanFieldSolution(sigma, -params.lamb * sigma, f, f_g, converged=True)


def full_mean_field_fg(params: ModelParams) -> float:
    """F_g when the dipoles are also decoupled at mean-field level.

    The cavity-induced field on the spins vanishes at self-consistency, so the
    result is the difference of two identical LMG minimizations.
    """
    coef = params.g**2 / params.omega_c
    _, f_coupled = _lmg_solve(params, params.omega0, coef)
    _, f_bare = _lmg_solve(params, params.omega0)
    return f_coupled - f_bare


# ------------------------------------------------------------------ perturbation theory in g


def fg_analytic(omega0: float, temperature: float, omega_c: float = 1.0) -> float:
    """Dimensionless second-order correction f_g for non-interacting dipoles."""
    w0, wc, T = abs(omega0), omega_c, temperature
    if T == 0:
        return w0 / (w0 + wc)
    beta = 1.0 / T
    t = math.tanh(beta * w0 / 2)
    c = 1.0 / math.tanh(beta * wc / 2)
    eps = w0 - wc
    if abs(eps) < RESONANCE_RADIUS * wc:
        # Taylor expansion of numerator around omega0 = omega_c; the 0/0 cancels
        tc = math.tanh(beta * wc / 2)
        t1 = 0.5 * beta * (1 - tc**2)
        t2 = -beta * tc * t1
        n1 = 2 * wc - wc * c * (tc + wc * t1)
        n2 = 0.5 * (2 - wc * c * (2 * t1 + wc * t2))
        return (n1 + n2 * eps) / (2 * wc + eps)
    return (w0**2 - w0 * wc * t * c) / (w0**2 - wc**2)


@dataclass(frozen=True)
class PerturbationResult:
    f_g2: float
    fg_dimensionless: float
    method: str
    bound: float
    anomalous_fluctuations: bool = False


def _spectral_fg2(params: ModelParams) -> tuple[float, float, float]:
    """Second-order F_g from the dipole spectrum; returns (F_g2, <S_x^2>, <S_x>)."""
    T = params.temperature
    wc = params.omega_c
    spectra = dipole_spectra(params)
    log_z, e0, probs = _boltzmann(spectra, T)
    n_th = thermal_occupation(wc, T)
    sx2_mean = 0.0
    sx_mean = 0.0
    correlated = 0.0
    for prob, sp in zip(probs, spectra):
        spin = spin_matrices(sp.sector)
        v = sp.eigenvectors
        x = v.T @ spin.sx @ v
        sx2_mean += float(prob @ np.einsum("ij,ij->j", x, x))
        sx_mean += float(prob @ np.diag(x))
        e = sp.eigenvalues
        omega_nm = e[:, None] - e[None, :]
        x2 = x**2
        if T == 0:
            # only the ground manifold is populated; Delta < 0 terms survive
            # (N_th = 0) and I(Delta) -> omega_c / |Delta|
            occ = prob > 0
            d = omega_nm[occ] - wc
            kern = wc / np.abs(d)
            correlated += float(prob[occ] @ (x2[occ] * kern).sum(axis=1))
            continue
        beta = 1.0 / T
        with np.errstate(divide="ignore"):
            logp = np.log(prob)
        mask = np.isfinite(logp)
        logp = np.where(mask, logp, -np.inf)
        for shift, occ in ((-wc, n_th + 1), (wc, n_th)):
            if occ == 0:
                continue
            arg = beta * (omega_nm + shift)
            logw = logp[:, None] + np.log(np.maximum(x2, 1e-300)) + math.log(occ)
            term = np.where(x2 > 0, np.exp(logw + log_kernel_g(arg)), 0.0)
            correlated += wc * beta * float(term.sum())
    f2 = params.g**2 / wc * (sx2_mean - correlated)
    return f2, sx2_mean, sx_mean


def perturbative_fg(params: ModelParams, method: str | None = None) -> PerturbationResult:
    """Second-order cavity correction F_g^(2) = N g^2 f_g / (4 omega_c).

    ``method`` is ``"AnalyticJ0"`` (closed form, J = 0 only) or ``"SpectralJ"``
    (imaginary-time integrals from the LMG spectrum).  Default: analytic when
    J = 0.
    """
    n, wc = params.n_dipoles, params.omega_c
    if method is None:
        method = "AnalyticJ0" if params.j_coupling == 0 else "SpectralJ"
    pref = n * params.g**2 / (4 * wc)
    if method == "AnalyticJ0":
        if params.j_coupling != 0:
            raise ValueError("analytic f_g only for J = 0")
        fg = fg_analytic(params.omega0, params.temperature, wc)
        bound = 1.0  # 4 <S_x^2>_0 / N with <S_x^2>_0 = N/4
        return PerturbationResult(pref * fg, fg, method, bound, False)
    if method != "SpectralJ":
        raise ValueError(f"unknown method {method!r}")
    f2, sx2, sx = _spectral_fg2(params)
    fg = f2 / pref if pref else fg_from_spectral_limit(params)
    var = sx2 - sx**2
    bound = 4 * var / n
    return PerturbationResult(f2, fg, method, bound, bound > 1.0 + ANOMALY_SLACK)


def fg_from_spectral_limit(params: ModelParams) -> float:
    """f_g at g -> 0 from the spectral path (F_g^(2) / g^2 is g independent)."""
    probe = params.replace(g=1.0)
    f2, _, _ = _spectral_fg2(probe)
    return f2 / (probe.n_dipoles / (4 * probe.omega_c))


def fluctuation_bound(params: ModelParams) -> float:
    """4 (Delta S_x)^2_0 / N for the bare dipoles."""
    d = dipole_thermo(params)
    return 4 * (d.sx2 - d.sx**2) / params.n_dipoles


# ------------------------------------------------------------------ low-frequency series


def _spin_pairs(params: ModelParams):
    """(log weight, Delta_spin) of every S_z transition under H_0 = (J/N) S_x^2."""
    n, J, T = params.n_dipoles, params.j_coupling, params.temperature
    logw, dspin, energies, logmult = [], [], [], []
    for sec in sectors(n):
        m = sec.m_values
        e = J / n * m**2
        energies.append(e)
        logmult.append(np.full(m.size, math.log(sec.multiplicity)))
    e_all = np.concatenate(energies)
    e0 = e_all.min()
    log_z0 = logsumexp(np.concatenate(logmult) - (e_all - e0) / T)
    for sec, e in zip(sectors(n), energies):
        if sec.dim == 1:
            continue
        sz = spin_matrices(sec).sz
        logp = math.log(sec.multiplicity) - (e - e0) / T - log_z0
        up = np.diag(sz, -1) ** 2  # |<m+1|S_z|m>|^2
        # transitions m -> m+1 and m+1 -> m, weighted by the initial state
        logw.append(logp[:-1] + np.log(up))
        dspin.append(e[:-1] - e[1:])
        logw.append(logp[1:] + np.log(up))
        dspin.append(e[1:] - e[:-1])
    return np.concatenate(logw), np.concatenate(dspin)


def low_frequency_series(params: ModelParams, series_tol: float = 1e-12) -> tuple[float, int]:
    """Sum of the two-photon-resolved series S with F_omega0^(2) = -omega0_tilde^2 S.

    Returns (S, highest shell r+q used).
    """
    T = params.temperature
    if T <= 0:
        raise ValueError("low-frequency series requires T > 0")
    wc = params.omega_c
    beta = 1.0 / T
    lam2 = params.lamb**2
    n_th = thermal_occupation(wc, T)
    logw, dspin = _spin_pairs(params)
    total = 0.0
    for k in range(MAX_SERIES_ORDER + 1):
        r = np.arange(k + 1)
        q = k - r
        with np.errstate(divide="ignore"):
            logc = (
                (k * math.log(lam2) if lam2 > 0 else (0.0 if k == 0 else -np.inf))
                + r * math.log1p(n_th)
                + (q * math.log(n_th) if n_th > 0 else np.where(q == 0, 0.0, -np.inf))
                - gammaln(r + 1)
                - gammaln(q + 1)
            )
        delta = (q - r)[:, None] * wc + dspin[None, :]
        log_terms = np.asarray(logc)[:, None] + logw[None, :] + log_kernel_g(beta * delta)
        shell = float(np.exp(log_terms).sum()) * beta  # I(Delta)/omega_c
        total += shell
        if k > 0 and shell <= series_tol * abs(total):
            return total, k
        if k > 0 and lam2 == 0:
            return total, k
    raise SeriesConvergenceError(f"low-frequency series not converged within r+q <= {MAX_SERIES_ORDER}")


def low_frequency_fg(params: ModelParams, series_tol: float = 1e-12) -> float:
    """Second-order correction in omega0 to the polaron-frame free energy.

    F ~ F_0 + F_omega0^(2), where F_0 is the free energy at omega0 = 0.
    """
    s, _ = low_frequency_series(params, series_tol)
    return -renormalized_omega0(params) ** 2 * s


def low_frequency_susceptibility(params: ModelParams, series_tol: float = 1e-12) -> float:
    """chi_z = -(2/N) F_omega0^(2) / omega0^2 (independent of omega0)."""
    s, _ = low_frequency_series(params, series_tol)
    n_th = thermal_occupation(params.omega_c, params.temperature)
    return 2.0 / params.n_dipoles * math.exp(-params.lamb**2 * (1 + 2 * n_th)) * s


def curie_constant_estimate(g: float, temperature: float, omega_c: float = 1.0) -> float:
    """alpha_C(g) ~ (1/4) exp[-(g/omega_c)^2 (1 + 2 N_th)]."""
    n_th = thermal_occupation(omega_c, temperature)
    return 0.25 * math.exp(-((g / omega_c) ** 2) * (1 + 2 * n_th))


# ------------------------------------------------------------------ variational bound


@dataclass(frozen=True)
class VariationalResult:
    omega0_tilde: float
    f_v: float
    f_g_v: float
    sz0: float


def variational_free_energy(params: ModelParams, omega0_trial: float) -> float:
    """Bogoliubov upper bound F_V for a trial dipole frequency."""
    T = params.temperature
    n_th = thermal_occupation(params.omega_c, T)
    damp = math.exp(-params.lamb**2 * (n_th + 0.5))
    sz0 = dipole_thermo(params, omega0_trial).sz
    return (
        cavity_free_energy(T, params.omega_c)
        + dipole_free_energy(params, omega0_trial)
        + (params.omega0 * damp - omega0_trial) * sz0
    )


def variational(params: ModelParams) -> VariationalResult:
    w = renormalized_omega0(params)
    f_v = variational_free_energy(params, w)
    f_g = f_v - cavity_free_energy(params.temperature, params.omega_c) - dipole_free_energy(params)
    return VariationalResult(w, f_v, f_g, dipole_thermo(params, w).sz)


# ------------------------------------------------------------------ effective spin model


def _effective_parts(params: ModelParams, sector: SpinSector, include_bare: bool):
    spin = spin_matrices(sector)
    lin = (math.exp(-0.5 * params.lamb**2) - 1) * spin.sz
    if include_bare:
        lin = lin + spin.sz
    s = sector.s
    if params.g == 0:
        quad = np.zeros_like(lin)
    else:
        quad = params.omega_c / (2 * params.g**2) * (spin.sx2 - s * (s + 1) * np.eye(sector.dim))
    return lin, quad


def effective_hamiltonian_spectrum(params: ModelParams, sector: SpinSector, include_bare: bool = False) -> np.ndarray:
    """Eigenvalues of the strong-coupling spin correction

        omega0 (e^{-g^2/2omega_c^2} - 1) S_z + (omega0^2 omega_c / 2g^2)(S_x^2 - S^2)

    in one sector; ``include_bare`` adds the bare ``omega0 S_z + (J/N) S_x^2``.
    """
    lin, quad = _effective_parts(params, sector, include_bare)
    w0 = params.omega0
    h = w0 * lin + w0**2 * quad
    if include_bare:
        h = h + params.j_coupling / params.n_dipoles * spin_matrices(sector).sx2
    return np.linalg.eigvalsh(h)


def effective_curvatures(params: ModelParams, sector: SpinSector, tol: float = 1e-9) -> np.ndarray:
    """d^2 E_n / d omega0^2 at omega0 = 0 for every level of the effective model.

    Degenerate perturbation theory: E_n = omega0 a_n + omega0^2 b_n, where b_n
    are eigenvalues of the quadratic part projected onto the degenerate
    eigenspaces of the linear part.
    """
    lin, quad = _effective_parts(params, sector, include_bare=False)
    a, v = np.linalg.eigh(lin)
    out = []
    start = 0
    while start < a.size:
        stop = start + 1
        while stop < a.size and abs(a[stop] - a[start]) < tol:
            stop += 1
        p = v[:, start:stop]
        out.append(np.linalg.eigvalsh(p.T @ quad @ p))
        start = stop
    return 2 * np.concatenate(out)


def effective_plateau(params: ModelParams) -> float:
    """-(1/N) sum_n p_n d^2E_n/d omega0^2 with all 2^N levels equally populated."""
    n = params.n_dipoles
    total = sum(sec.multiplicity * effective_curvatures(params, sec).sum() for sec in sectors(n))
    return -total / (n * 2.0**n)


# ------------------------------------------------------------------ heat-capacity correction


def c_g_dimensionless(omega0: float, temperatures: Sequence[float], omega_c: float = 1.0,
                      rel_step: float = 1e-3) -> np.ndarray:
    """c_g = -T^2 d^2 f_g / dT^2 for non-interacting dipoles (N independent)."""
    out = []
    for T in np.asarray(temperatures, dtype=float):
        if T <= 0:
            raise ValueError("temperatures must be positive")
        h = rel_step * T
        d2 = (fg_analytic(omega0, T + h, omega_c) - 2 * fg_analytic(omega0, T, omega_c)
              + fg_analytic(omega0, T - h, omega_c)) / h**2
        out.append(-T * T * d2)
    return np.array(out)


def perturbative_heat_capacity_g(params: ModelParams) -> float:
    """C_g ~ N g^2 c_g / (4 omega_c T) in the collective regime (J = 0)."""
    T = params.temperature
    cg = c_g_dimensionless(params.omega0, [T], params.omega_c)[0]
    return params.n_dipoles * params.g**2 / (4 * params.omega_c * T) * cg
