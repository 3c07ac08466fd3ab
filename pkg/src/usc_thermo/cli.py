"""Command-line front end: parameter sweeps writing CSV or JSON-lines.

All quantities are in natural units, hbar = k_B = omega_c = 1.

Examples
--------
usc-thermo free-energy --N 20 --omega0 1 --J 0 --T 0.1 --g 0:0.02:1 \
    --methods exact,perturbative,mean-field,variational
usc-thermo phase-diagram --N 20 --omega0 1 --g 0 --J -3:0.05:0 --T 0.02:0.02:1.6
usc-thermo spectrum --N 6 --J 0 --gamma 0.04 --T 0.5 --g 0:0.05:3
usc-thermo validate
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import re
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import approx, radiation, thermo
from .model import FockTruncation, ModelParams, assemble_sector, brute_force_lab_hamiltonian, default_cutoff
from .spin import SpinSector, sectors

UNITS_LINE = "# units: hbar = k_B = omega_c = 1"
RANGE_TOL = 1e-12
# value lists such as "-3:0.05:0" or "-2,-0.5" that argparse would take for options
NEGATIVE_VALUES = re.compile(r"^-[\d.][\d.eE+\-:,\s]*$")
GRID_KEYS = ("N", "omega0", "g", "J", "T")

ALL_METHODS = ("exact", "mean-field", "perturbative", "variational", "low-frequency", "effective")

# method -> ordered output columns, per command
COMMAND_COLUMNS: dict[str, dict[str, tuple[str, ...]]] = {
    "free-energy": {
        "exact": ("F_exact", "F_g_exact"),
        "perturbative": ("F_g_perturbative", "f_g_perturbative", "fluctuation_bound", "anomalous"),
        "mean-field": ("F_g_mean_field", "sigma_x_mean_field"),
        "variational": ("F_g_variational", "omega0_tilde"),
        "low-frequency": ("F_g_low_frequency",),
    },
    "susceptibility": {
        "exact": ("chi_exact",),
        "low-frequency": ("chi_low_frequency",),
        "effective": ("chi_effective",),
    },
    "heat-capacity": {
        "exact": ("C_exact", "C_g_exact"),
        "perturbative": ("C_g_perturbative",),
    },
    "phase-diagram": {
        "exact": ("phase_exact", "m_bar_exact"),
        "mean-field": ("phase_mean_field", "sigma_x_mean_field"),
    },
    "critical-temperature": {
        "exact": ("Tc_exact",),
        "mean-field": ("Tc_mean_field", "Tc_modified_mean_field"),
    },
    "spectrum": {"exact": ("omega", "S_exact")},
    "power": {"exact": ("P_exact", "P_ratio_exact", "Hem_exact")},
    "hp-compare": {
        "exact": ("omega_minus_exact", "omega_plus_exact", "P_ratio_exact", "Hem_exact"),
        "effective": (
            "omega_minus_hp", "omega_plus_hp", "V_minus", "V_plus", "Phi_minus", "Phi_plus",
            "P_ratio_hp", "Hem_hp",
        ),
    },
}
DEFAULT_METHODS = {
    "free-energy": ("exact",),
    "susceptibility": ("exact",),
    "heat-capacity": ("exact",),
    "phase-diagram": ("exact",),
    "critical-temperature": ("exact", "mean-field"),
    "spectrum": ("exact",),
    "power": ("exact",),
    "hp-compare": ("exact", "effective"),
}
META_COLUMNS = ("n_ph", "residual", "version", "error")


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------- parsing


def parse_values(text: str, integer: bool = False) -> list:
    """Comma-separated scalars and inclusive ranges ``start:step:stop``."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            bits = part.split(":")
            if len(bits) != 3:
                raise UsageError(f"range must be start:step:stop, got {part!r}")
            start, step, stop = (float(b) for b in bits)
            if step == 0 or (stop - start) * step < 0:
                raise UsageError(f"range {part!r} does not reach its end point")
            count = math.floor((stop - start) / step + RANGE_TOL / abs(step)) + 1
            vals = [round(start + i * step, 12) for i in range(count)]
            if abs(vals[-1] - stop) <= RANGE_TOL:
                vals[-1] = stop
            out.extend(vals)
        else:
            out.append(float(part))
    if not out:
        raise UsageError(f"empty value list {text!r}")
    if integer:
        if any(v != int(v) for v in out):
            raise UsageError(f"expected integers, got {text!r}")
        out = [int(v) for v in out]
    return out


def read_config(path: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    conf = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            conf[key.replace("-", "_")] = value
    return conf


@dataclass
class SweepSpec:
    command: str
    grid: dict[str, list]
    collective: bool
    trunc: FockTruncation
    methods: tuple[str, ...]
    output: str | None = None
    fmt: str = "csv"
    workers: int = 1
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.methods:
            raise UsageError("no methods requested")
        for key, vals in self.grid.items():
            if not vals:
                raise UsageError(f"empty grid for {key}")


# ---------------------------------------------------------------- evaluation


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _params(point: dict, collective: bool) -> ModelParams:
    kw = dict(n_dipoles=int(point["N"]), omega0=point["omega0"], j_coupling=point["J"], temperature=point["T"])
    if collective:
        return ModelParams.from_collective(G=point["g"], **kw)
    return ModelParams(g=point["g"], **kw)


class _Rows:
    """Rows of one task, with per-method error collection."""

    def __init__(self, points, collective, trunc):
        self.points = points
        self.params = [_params(p, collective) for p in points]
        self.values = [dict() for _ in points]
        self.errors = [[] for _ in points]
        self.residual = [None] * len(points)
        self.trunc = trunc

    def guard(self, method: str, idx: int, fn: Callable[[], dict]):
        try:
            self.values[idx].update(fn())
        except Exception as exc:  # recorded in the error column, never dropped
            self.errors[idx].append(f"{method}: {type(exc).__name__}: {exc}")

    def guard_all(self, method: str, fn: Callable[[], None]):
        try:
            fn()
        except Exception as exc:
            for e in self.errors:
                e.append(f"{method}: {type(exc).__name__}: {exc}")


def _eval_free_energy(rows: _Rows, methods, opts):
    base = rows.params[0]
    if "exact" in methods:
        def run():
            spectra = thermo.sector_spectra(base, rows.trunc)
            for i, p in enumerate(rows.params):
                ens = thermo._ensemble_from_spectra(p, rows.trunc, spectra)
                rep = thermo.free_energy(ens)
                rows.values[i].update(F_exact=rep.f_total, F_g_exact=rep.f_g)
        rows.guard_all("exact", run)
    for i, p in enumerate(rows.params):
        if "perturbative" in methods:
            def pert(p=p):
                r = approx.perturbative_fg(p)
                return dict(F_g_perturbative=r.f_g2, f_g_perturbative=r.fg_dimensionless,
                            fluctuation_bound=r.bound, anomalous=r.anomalous_fluctuations)
            rows.guard("perturbative", i, pert)
        if "mean-field" in methods:
            def mf(p=p):
                r = approx.cavity_mean_field_fg(p)
                return dict(F_g_mean_field=r.f_g_mf, sigma_x_mean_field=r.sigma_x)
            rows.guard("mean-field", i, mf)
        if "variational" in methods:
            def var(p=p):
                r = approx.variational(p)
                return dict(F_g_variational=r.f_g_v, omega0_tilde=r.omega0_tilde)
            rows.guard("variational", i, var)
        if "low-frequency" in methods:
            def low(p=p):
                f = (thermo.dipole_free_energy(p, 0.0) + approx.low_frequency_fg(p)
                     - thermo.dipole_free_energy(p))
                return dict(F_g_low_frequency=f)
            rows.guard("low-frequency", i, low)


def _eval_susceptibility(rows: _Rows, methods, opts):
    base = rows.params[0]
    temps = [p.temperature for p in rows.params]
    if "exact" in methods:
        def run():
            chi = thermo.susceptibility_curve(base, temps, rows.trunc)
            for i, c in enumerate(chi):
                rows.values[i]["chi_exact"] = float(c)
        rows.guard_all("exact", run)
    for i, p in enumerate(rows.params):
        if "low-frequency" in methods:
            rows.guard("low-frequency", i, lambda p=p: dict(chi_low_frequency=approx.low_frequency_susceptibility(p)))
        if "effective" in methods:
            def eff(p=p):
                if p.temperature <= 0:
                    raise ValueError("susceptibility requires T > 0")
                curie = approx.curie_constant_estimate(p.g, p.temperature, p.omega_c) / p.temperature
                plateau = approx.effective_plateau(p) if p.g > 0 else 0.0
                return dict(chi_effective=curie + plateau)
            rows.guard("effective", i, eff)


def _eval_heat_capacity(rows: _Rows, methods, opts):
    base = rows.params[0]
    if "exact" in methods:
        def run():
            spectra = thermo.sector_spectra(base, rows.trunc)
            for i, p in enumerate(rows.params):
                def one(p=p):
                    hc = thermo.heat_capacity(thermo._ensemble_from_spectra(p, rows.trunc, spectra))
                    return dict(C_exact=hc.total, C_g_exact=hc.coupling)
                rows.guard("exact", i, one)
        rows.guard_all("exact", run)
    if "perturbative" in methods:
        for i, p in enumerate(rows.params):
            def pert(p=p):
                if p.j_coupling != 0:
                    raise ValueError("perturbative heat capacity only for J = 0")
                return dict(C_g_perturbative=approx.perturbative_heat_capacity_g(p))
            rows.guard("perturbative", i, pert)


def _eval_phase(rows: _Rows, methods, opts):
    base = rows.params[0]
    if "exact" in methods:
        def run():
            spectra = thermo.sector_spectra(base, rows.trunc, want_vectors=True)
            for i, p in enumerate(rows.params):
                ens = thermo._ensemble_from_spectra(p, rows.trunc, spectra)
                rows.values[i].update(
                    phase_exact=thermo.classify_phase(thermo.mx_distribution(ens)).value,
                    m_bar_exact=thermo.order_parameter(ens),
                )
                rows.residual[i] = ens.residual
        rows.guard_all("exact", run)
    if "mean-field" in methods:
        for i, p in enumerate(rows.params):
            def mf(p=p):
                r = approx.lmg_mean_field(p)
                return dict(phase_mean_field=r.phase, sigma_x_mean_field=r.sigma_x)
            rows.guard("mean-field", i, mf)


def _eval_critical_temperature(rows: _Rows, methods, opts):
    bracket = (opts.get("t_lo", 0.02), opts.get("t_hi", 3.0))
    for i, p in enumerate(rows.params):
        if "exact" in methods:
            rows.guard("exact", i, lambda p=p: dict(Tc_exact=thermo.critical_temperature(p, rows.trunc, bracket)))
        if "mean-field" in methods:
            rows.guard("mean-field", i, lambda p=p: dict(
                Tc_mean_field=approx.lmg_critical_temperature(p.omega0, p.j_coupling),
                Tc_modified_mean_field=approx.modified_mf_critical_temperature(p),
            ))


def _eval_spectrum(rows: _Rows, methods, opts):
    """One input point expands into one row per frequency."""
    base = rows.params[0]
    grid = np.asarray(opts["omega_grid"], dtype=float)
    spectra = thermo.sector_spectra(base, rows.trunc, want_vectors=True)
    for i, p in enumerate(rows.params):
        ens = thermo._ensemble_from_spectra(p, rows.trunc, spectra)
        rows.residual[i] = ens.residual
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            lines = radiation.emission_lines(ens, kappa=1.0, gamma=opts["gamma"])
        s = radiation.sampled_spectrum(lines, grid)
        rows.values[i]["__expand__"] = [dict(omega=float(w), S_exact=float(v)) for w, v in zip(grid, s)]


def _exact_power(ens, gamma):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        lines = radiation.emission_lines(ens, kappa=1.0, gamma=gamma)
    power, ratio = radiation.radiated_power(lines)
    return power, ratio, thermo.em_energy(ens, include_offset=False)


def _eval_power(rows: _Rows, methods, opts):
    base = rows.params[0]

    def run():
        spectra = thermo.sector_spectra(base, rows.trunc, want_vectors=True)
        for i, p in enumerate(rows.params):
            ens = thermo._ensemble_from_spectra(p, rows.trunc, spectra)
            rows.residual[i] = ens.residual
            power, ratio, hem = _exact_power(ens, opts["gamma"])
            rows.values[i].update(P_exact=power, P_ratio_exact=ratio, Hem_exact=hem)
    rows.guard_all("exact", run)


def _eval_hp(rows: _Rows, methods, opts):
    base = rows.params[0]
    if "exact" in methods:
        def run():
            spectra = thermo.sector_spectra(base, rows.trunc, want_vectors=True)
            for i, p in enumerate(rows.params):
                ens = thermo._ensemble_from_spectra(p, rows.trunc, spectra)
                rows.residual[i] = ens.residual
                lo, hi = radiation.single_excitation_energies(ens)
                _, ratio, hem = _exact_power(ens, opts["gamma"])
                rows.values[i].update(omega_minus_exact=lo, omega_plus_exact=hi, P_ratio_exact=ratio, Hem_exact=hem)
        rows.guard_all("exact", run)
    if "effective" in methods:
        for i, p in enumerate(rows.params):
            def hp(p=p):
                r = radiation.hp_polaritons(p)
                ratio, hem = radiation.hp_power_and_energy(r, p.temperature)
                return dict(omega_minus_hp=r.omega_minus, omega_plus_hp=r.omega_plus, V_minus=r.v_minus,
                            V_plus=r.v_plus, Phi_minus=r.phi_minus, Phi_plus=r.phi_plus,
                            P_ratio_hp=ratio, Hem_hp=hem)
            rows.guard("effective", i, hp)


EVALUATORS = {
    "free-energy": _eval_free_energy,
    "susceptibility": _eval_susceptibility,
    "heat-capacity": _eval_heat_capacity,
    "phase-diagram": _eval_phase,
    "critical-temperature": _eval_critical_temperature,
    "spectrum": _eval_spectrum,
    "power": _eval_power,
    "hp-compare": _eval_hp,
}


def _columns(spec: SweepSpec) -> list[str]:
    g_name = "G" if spec.collective else "g"
    params = ["N", "omega0", g_name, "J", "T"]
    if spec.command == "critical-temperature":
        params.remove("T")
    table = COMMAND_COLUMNS[spec.command]
    cols = []
    for method in ALL_METHODS:
        if method in spec.methods:
            cols.extend(c for c in table[method] if c not in cols)
    return params + cols + list(META_COLUMNS)


def _run_task(task):
    """Evaluate one group of grid points that differ only in temperature."""
    command, points, collective, n_ph, methods, opts = task
    with threadpool_limits(limits=1):
        rows = _Rows(points, collective, FockTruncation(n_ph))
        try:
            EVALUATORS[command](rows, methods, opts)
        except Exception as exc:
            for e in rows.errors:
                e.append(f"{type(exc).__name__}: {exc}")
    out = []
    for pt, vals, errs, res in zip(points, rows.values, rows.errors, rows.residual):
        expand = vals.pop("__expand__", None)
        base = dict(pt, n_ph=n_ph, residual=res, version=__version__, error="; ".join(errs))
        if expand is None:
            out.append(dict(base, **vals))
        else:
            out.extend(dict(base, **v) for v in expand)
    return out


def build_tasks(spec: SweepSpec) -> list:
    keys = [k for k in GRID_KEYS if k in spec.grid]
    grid = [spec.grid[k] for k in keys]
    groups: dict[tuple, list] = {}
    order = []
    for combo in itertools.product(*grid):
        point = dict(zip(keys, combo))
        point.setdefault("T", 0.0)
        key = tuple(point[k] for k in keys if k != "T")
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(point)
    return [
        (spec.command, groups[k], spec.collective, spec.trunc.n_ph, spec.methods, spec.options)
        for k in order
    ]


def run_sweep(spec: SweepSpec) -> list[dict]:
    """Evaluate the grid; rows come back in lexicographic grid order."""
    tasks = build_tasks(spec)
    workers = max(1, min(spec.workers, len(tasks)))
    if workers == 1:
        results = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=1))
    return [row for group in results for row in group]


def render(spec: SweepSpec, rows: list[dict]) -> str:
    cols = _columns(spec)
    g_name = "G" if spec.collective else "g"
    meta = {
        "units": "hbar = k_B = omega_c = 1",
        "command": spec.command,
        "version": __version__,
        "coupling": "collective G = g sqrt(N)" if spec.collective else "single-dipole g",
        "mf_scan_points": approx.MF_SCAN_POINTS,
        "mf_tolerance": approx.MF_TOL,
    }
    buf = io.StringIO()
    if spec.fmt == "jsonl":
        buf.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
        for row in rows:
            rec = {}
            for c in cols:
                v = row.get("g" if c == g_name else c)
                if isinstance(v, (np.floating, np.integer, np.bool_)):
                    v = v.item()
                rec[c] = v
            buf.write(json.dumps(rec) + "\n")
        return buf.getvalue()
    buf.write(UNITS_LINE + "; " + "; ".join(f"{k}={v}" for k, v in meta.items() if k != "units") + "\r\n")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_fmt(row.get("g" if c == g_name else c)) for c in cols])
    return buf.getvalue()


# ---------------------------------------------------------------- validate


def _check(name, fn):
    try:
        ok, detail = fn()
    except Exception as exc:
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return name, bool(ok), detail


def _check_brute_force():
    worst = 0.0
    for n, g, J, T in ((2, 0.5, 0.0, 0.5), (3, 2.0, -0.7, 0.5), (4, 1.0, 0.5, 1.0)):
        p = ModelParams(n, 1.0, g, J, T)
        # the lab frame needs many more photons than the polaron frame at g ~ 2
        trunc = FockTruncation(100)
        ens = thermo.thermal_ensemble(p, trunc)
        w = np.linalg.eigvalsh(brute_force_lab_hamiltonian(p, trunc))
        log_z = -w[0] / T + math.log(np.exp(-(w - w[0]) / T).sum())
        worst = max(worst, abs(ens.log_z - log_z) / abs(log_z))
    return worst < 1e-9, f"max rel. deviation of log Z = {worst:.2e} (tol 1e-9)"


def _check_curie():
    p = ModelParams(4, 0.0, 0.0)
    temps = [0.05, 0.5, 2.0]
    chi = thermo.susceptibility_curve(p, temps, 4)
    dev = float(np.max(np.abs(np.asarray(temps) * chi / 0.25 - 1)))
    return dev < 5e-3, f"max |chi T / 0.25 - 1| = {dev:.2e} (tol 5e-3)"


def _check_bounds():
    worst = -math.inf
    for J, T in ((0.0, 0.1), (0.0, 1.0), (-1.5, 0.3), (0.5, 0.5)):
        r = approx.perturbative_fg(ModelParams(8, 1.0, 0.1, J, T), method="SpectralJ")
        if r.fg_dimensionless < 0:
            return False, f"negative f_g at J={J}, T={T}"
        worst = max(worst, r.fg_dimensionless - r.bound)
    return worst < 0, f"max f_g - bound = {worst:.3f}"


def _check_sandwich():
    worst = -math.inf
    for g, T, J in itertools.product((0.5, 2.0), (0.25, 1.0), (0.0, -1.0)):
        p = ModelParams(4, 1.0, g, J, T)
        f = thermo.thermal_ensemble(p, 60).free_energy_value
        worst = max(worst, f - approx.variational(p).f_v)
    return worst <= 1e-10, f"max F - F_V = {worst:.2e}"


def _check_hp():
    p = ModelParams.from_collective(48, 1.0, 0.3, temperature=0.5)
    spec = thermo.diagonalize(assemble_sector(p, SpinSector(24, 48), 30))
    e = spec.eigenvalues
    hp = radiation.hp_polaritons(p)
    dev = max(abs(e[1] - e[0] - hp.omega_minus), abs(e[2] - e[0] - hp.omega_plus))
    return dev < 1e-3, f"N=48, G=0.3: max |E_exc - omega_pm| = {dev:.2e} (tol 1e-3)"


def _check_null():
    worst = 0.0
    for g in (0.5, 2.0, 3.0):
        p = ModelParams(4, 0.0, g, -1.0, 0.5)
        worst = max(worst, abs(thermo.coupling_free_energy(p, 40)))
    return worst < 1e-9, f"max |F_g| at omega0 = 0: {worst:.2e}"


def cutoff_diagnostic(params: ModelParams, n_ph: int, tol: float = 1e-8) -> tuple[bool, str]:
    """Compare F and the ten lowest levels per sector at n_ph and 2 n_ph."""
    f1 = thermo.thermal_ensemble(params, n_ph)
    f2 = thermo.thermal_ensemble(params, 2 * n_ph)
    d_f = abs(f1.free_energy_value - f2.free_energy_value)
    d_e = 0.0
    for a, b in zip(f1.spectra, f2.spectra):
        k = min(10, a.eigenvalues.size)
        d_e = max(d_e, float(np.max(np.abs(a.eigenvalues[:k] - b.eigenvalues[:k]))))
    if d_f < tol * max(1.0, abs(f2.free_energy_value)) and d_e < tol:
        return True, f"N_ph={n_ph}: |dF|={d_f:.1e}, |dE_10|={d_e:.1e}"
    need = max(default_cutoff(params.temperature, params.omega_c), 2 * n_ph)
    return False, (
        f"N_ph={n_ph} not converged at T={params.temperature}, g={params.g}: |dF|={d_f:.1e}, "
        f"|dE_10|={d_e:.1e} on doubling; rerun with --nph {need} or larger"
    )


def validate(n_ph: int | None = None, temperature: float = 0.5, g: float = 1.0, n_dipoles: int = 4,
             stream=None) -> bool:
    stream = stream or sys.stdout
    p = ModelParams(n_dipoles, 1.0, g, 0.0, temperature)
    if n_ph is None:
        n_ph = default_cutoff(temperature)
    checks = [
        _check("brute-force equivalence", _check_brute_force),
        _check("Curie law (g = 0)", _check_curie),
        _check("perturbative bounds", _check_bounds),
        _check("variational sandwich", _check_sandwich),
        _check("polariton single excitations", _check_hp),
        _check("omega0 = 0 null", _check_null),
        _check("cutoff convergence", lambda: cutoff_diagnostic(p, n_ph)),
    ]
    width = max(len(c[0]) for c in checks)
    for name, ok, detail in checks:
        stream.write(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}\n")
    return all(ok for _, ok, _ in checks)


# ---------------------------------------------------------------- argparse


def _add_grid_args(p: argparse.ArgumentParser, defaults: dict):
    p.add_argument("--config", help="file with key = value lines; flags override it")
    p.add_argument("--N", default=defaults.get("N", "20"), help="number of dipoles")
    p.add_argument("--omega0", default=defaults.get("omega0", "1"), help="dipole frequency")
    cg = p.add_mutually_exclusive_group()
    cg.add_argument("--g", default=None, help="single-dipole coupling")
    cg.add_argument("--G", default=None, help="collective coupling g sqrt(N)")
    p.add_argument("--J", default=defaults.get("J", "0"), help="dipole-dipole coupling")
    p.add_argument("--T", default=defaults.get("T", "0.1"), help="temperature")
    p.add_argument("--nph", default="auto", help="photon cutoff or 'auto'")
    p.add_argument("--methods", default=None, help="comma-separated subset of " + ",".join(ALL_METHODS))
    p.add_argument("--format", dest="fmt", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="usc-thermo", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMAND_COLUMNS:
        sp = sub.add_parser(name, help=f"{name} sweep")
        _add_grid_args(sp, {})
        if name in ("spectrum", "power", "hp-compare"):
            sp.add_argument("--gamma", type=float, default=0.04, help="line width")
        if name == "spectrum":
            sp.add_argument("--omega", default="0:0.005:3", help="frequency grid")
        if name == "critical-temperature":
            sp.add_argument("--t-lo", type=float, default=0.02)
            sp.add_argument("--t-hi", type=float, default=3.0)
    vp = sub.add_parser("validate", help="run the oracle and invariant checks")
    vp.add_argument("--nph", default="auto", help="photon cutoff for the convergence check")
    vp.add_argument("--T", type=float, default=0.5, help="temperature for the convergence check")
    vp.add_argument("--g", type=float, default=1.0, help="coupling for the convergence check")
    vp.add_argument("--N", type=int, default=4, help="dipoles for the convergence check")
    return parser


def _worker_cap(requested: int) -> int:
    env = os.environ.get("USC_THERMO_THREADS")
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise UsageError("USC_THERMO_THREADS must be an integer")
        return max(1, min(requested, cap))
    return max(1, requested)


def spec_from_args(args) -> SweepSpec:
    cmd = args.command
    coupling = args.G if args.G is not None else args.g
    collective = args.G is not None
    if coupling is None:
        coupling = "0"
    grid = {
        "N": parse_values(args.N, integer=True),
        "omega0": parse_values(args.omega0),
        "g": parse_values(coupling),
        "J": parse_values(args.J),
    }
    if cmd != "critical-temperature":
        grid["T"] = parse_values(args.T)
    if any(n < 1 for n in grid["N"]):
        raise UsageError("N must be >= 1")
    if "T" in grid and any(t < 0 for t in grid["T"]):
        raise UsageError("temperatures must be non-negative")
    methods = tuple(m.strip() for m in args.methods.split(",")) if args.methods else DEFAULT_METHODS[cmd]
    allowed = COMMAND_COLUMNS[cmd]
    bad = [m for m in methods if m not in allowed]
    if bad:
        raise UsageError(f"{cmd} supports methods {','.join(allowed)}; got {','.join(bad)}")
    if args.nph == "auto":
        t_max = max(grid.get("T", [getattr(args, "t_hi", 0.0)]))
        trunc = FockTruncation(default_cutoff(t_max))
    else:
        try:
            trunc = FockTruncation(int(args.nph))
        except ValueError as exc:
            raise UsageError(f"--nph: {exc}")
    opts = {}
    if hasattr(args, "gamma"):
        if args.gamma <= 0:
            raise UsageError("gamma must be positive")
        opts["gamma"] = args.gamma
    if cmd == "spectrum":
        opts["omega_grid"] = parse_values(args.omega)
    if cmd == "critical-temperature":
        opts["t_lo"], opts["t_hi"] = args.t_lo, args.t_hi
    return SweepSpec(cmd, grid, collective, trunc, tuple(dict.fromkeys(methods)), args.out, args.fmt,
                     _worker_cap(args.workers), opts)


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    conf = read_config(known.config)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in subparsers.choices.values():
        dests = {a.dest for a in sp._actions}
        sp.set_defaults(**{k: v for k, v in conf.items() if k in dests})


def _join_negative_values(argv: list[str]) -> list[str]:
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok.startswith("--") and "=" not in tok and i + 1 < len(argv) and NEGATIVE_VALUES.match(argv[i + 1]):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv: list[str] | None = None) -> int:
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (OSError, UsageError) as exc:
        parser.error(str(exc))
    args = parser.parse_args(argv)
    if args.command == "validate":
        n_ph = None if str(args.nph) == "auto" else int(args.nph)
        ok = validate(n_ph, float(args.T), float(args.g), int(args.N))
        return 0 if ok else 1
    try:
        spec = spec_from_args(args)
    except (UsageError, ValueError) as exc:
        parser.error(str(exc))
    rows = run_sweep(spec)
    text = render(spec, rows)
    if spec.output:
        with open(spec.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    failed = sum(1 for r in rows if r["error"])
    if failed:
        print(f"warning: {failed} grid point(s) failed; see the error column", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
