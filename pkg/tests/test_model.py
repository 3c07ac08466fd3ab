import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from usc_thermo.model import (
    FockTruncation,
    ModelParams,
    assemble_sector,
    brute_force_lab_hamiltonian,
    default_cutoff,
    displacement_block,
    polaron_sz,
    resolve_truncation,
    thermal_occupation,
)
from usc_thermo.spin import SpinSector, sectors


def _expm_displacement(alpha, n_ph, pad=200):
    dim = n_ph + pad
    a = np.diag(np.sqrt(np.arange(1, dim)), 1)
    return expm(alpha * (a.T - a))[: n_ph + 1, : n_ph + 1]


@pytest.mark.parametrize("alpha", [0.3, -1.0, 2.0, 3.0])
def test_displacement_matches_matrix_exponential(alpha):
    n_ph = 60
    assert np.max(np.abs(displacement_block(alpha, n_ph) - _expm_displacement(alpha, n_ph))) < 1e-12


def test_displacement_single_element_high_precision():
    # <n'|D(alpha)|n> = sqrt(n!/n'!) alpha^(n'-n) e^{-alpha^2/2} L_n^(n'-n)(alpha^2)
    alpha, n, m = 2.5, 7, 12
    mpmath.mp.dps = 40
    ref = (mpmath.sqrt(mpmath.factorial(n) / mpmath.factorial(m)) * mpmath.mpf(alpha) ** (m - n)
           * mpmath.exp(-mpmath.mpf(alpha) ** 2 / 2) * mpmath.laguerre(n, m - n, mpmath.mpf(alpha) ** 2))
    assert displacement_block(alpha, 20)[m, n] == pytest.approx(float(ref), rel=1e-12, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-3, max_value=3, allow_nan=False))
def test_displacement_transpose_is_inverse_displacement(alpha):
    d = displacement_block(alpha, 30)
    assert np.allclose(d.T, displacement_block(-alpha, 30), atol=1e-13)


def test_displacement_unitary_on_low_block():
    d = displacement_block(1.5, 120)
    # columns with small n are fully contained in the truncated space
    low = d[:, :20]
    assert np.allclose(low.T @ low, np.eye(20), atol=1e-12)


def test_displacement_zero_is_identity():
    assert np.array_equal(displacement_block(0.0, 5), np.eye(6))


def test_sector_hamiltonian_symmetric_and_bare_diagonal():
    p = ModelParams(4, 0.7, 1.2, -0.5, 0.3)
    h = assemble_sector(p, SpinSector(2, 4), 10).matrix
    assert np.allclose(h, h.T)
    bare = assemble_sector(p.replace(omega0=0.0), SpinSector(2, 4), 10).matrix
    assert np.count_nonzero(bare - np.diag(np.diag(bare))) == 0


def test_polaron_sz_reduces_to_sz_at_zero_coupling():
    p = ModelParams(3, 1.0, 0.0)
    sec = SpinSector(1.5, 3)
    t = polaron_sz(p, sec, FockTruncation(4))
    from usc_thermo.spin import spin_matrices
    assert np.allclose(t, np.kron(spin_matrices(sec).sz, np.eye(5)))


@pytest.mark.parametrize("n, g, j", [(2, 0.4, 0.0), (3, 1.5, -0.6)])
def test_sector_spectrum_matches_lab_frame(n, g, j):
    p = ModelParams(n, 0.8, g, j)
    trunc = FockTruncation(80)
    lab = np.linalg.eigvalsh(brute_force_lab_hamiltonian(p, trunc))[:12]
    pol = np.sort(np.concatenate([
        np.repeat(np.linalg.eigvalsh(assemble_sector(p, sec, trunc).matrix), sec.multiplicity)
        for sec in sectors(n)
    ]))[:12]
    assert np.allclose(lab, pol, atol=1e-9)


def test_brute_force_refuses_large_n():
    with pytest.raises(ValueError):
        brute_force_lab_hamiltonian(ModelParams(7, 1.0, 0.1), 2)


def test_params_validation_and_collective():
    with pytest.raises(ValueError):
        ModelParams(0, 1.0, 0.1)
    with pytest.raises(ValueError):
        ModelParams(2, 1.0, 0.1, temperature=-1)
    p = ModelParams.from_collective(16, 1.0, 0.8)
    assert p.g == pytest.approx(0.2) and p.collective_g == pytest.approx(0.8)
    assert math.isinf(ModelParams(2, 1.0, 0.1).beta)


def test_cutoff_heuristic_and_resolution():
    assert default_cutoff(0.0) == 40
    assert default_cutoff(2.0) == 40
    assert default_cutoff(3.0) == 60
    p = ModelParams(2, 1.0, 0.1, temperature=5.0)
    assert resolve_truncation(p, None).n_ph == 100
    assert resolve_truncation(p, 7).n_ph == 7
    with pytest.raises(ValueError):
        FockTruncation(0)


def test_thermal_occupation():
    assert thermal_occupation(1.0, 0.0) == 0.0
    assert thermal_occupation(1.0, 0.5) == pytest.approx(1 / (math.e**2 - 1))
    assert thermal_occupation(1.0, 1e-4) == 0.0 or thermal_occupation(1.0, 1e-4) < 1e-300
