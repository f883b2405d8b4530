import json
import math

import numpy as np
import pytest
from scipy.linalg import expm

from fockforge import table1
from fockforge.errors import ConfigError, GridTooSmall
from fockforge.fock import DensityMatrix, HilbertSpace, coherent_state, fock_state
from fockforge.kerr import PulseSequence, PulseStep, run_protocol
from fockforge.phase_space import (
    PhaseSpaceGrid,
    husimi,
    local_maxima,
    negativity_volume,
    sign_changes_along_ray,
    wigner,
)

SPACE = HilbertSpace(40)


def brute_force_wigner(rho, x, p, cutoff):
    """(1/pi) Tr[rho D(a) P D(a)^dag] with dense expm displacements."""
    alpha = (x + 1j * p) / math.sqrt(2)
    a = np.diag(np.sqrt(np.arange(1, cutoff)), 1).astype(complex)
    d = expm(alpha * a.conj().T - np.conj(alpha) * a)
    parity = np.diag((-1.0) ** np.arange(cutoff))
    return float(np.trace(rho @ d @ parity @ d.conj().T).real) / math.pi


def test_grid_validation():
    with pytest.raises(ConfigError):
        PhaseSpaceGrid(1, -1, -1, 1, 20, 20)
    with pytest.raises(ConfigError):
        PhaseSpaceGrid(-1, 1, -1, 1, 7, 20)
    g = PhaseSpaceGrid.default_for(9)
    assert (g.x_min, g.x_max, g.n_x) == (-7.0, 7.0, 201)


def test_vacuum_is_gaussian():
    g = PhaseSpaceGrid.square(4, 81)
    w = wigner(fock_state(0, SPACE), g)
    xs, ps = g.mesh()
    assert np.max(np.abs(w.values - np.exp(-(xs**2) - ps**2) / math.pi)) < 1e-12
    assert w.value_at(0, 0) == pytest.approx(1 / math.pi, abs=1e-12)


@pytest.mark.parametrize("n", range(26))
def test_origin_parity(n):
    space = HilbertSpace(n + 2)
    g = PhaseSpaceGrid.square(math.sqrt(n) + 4.5, 9)
    w = wigner(fock_state(n, space), g)
    assert w.value_at(0.0, 0.0) == pytest.approx((-1) ** n / math.pi, abs=1e-8)


def test_matches_displaced_parity_brute_force():
    rng = np.random.default_rng(3)
    cutoff = 40
    psi = np.zeros(cutoff, complex)
    psi[:6] = rng.normal(size=6) + 1j * rng.normal(size=6)
    psi /= np.linalg.norm(psi)
    rho = np.outer(psi, psi.conj())
    g = PhaseSpaceGrid(-4.0, 4.0, -3.5, 4.5, 9, 11)
    w = wigner(DensityMatrix(rho, HilbertSpace(cutoff)), g)
    for i in (0, 3, 8):
        for j in (0, 5, 10):
            # the oracle needs room for the displaced support, so pad it
            big = np.zeros((2 * cutoff, 2 * cutoff), complex)
            big[:cutoff, :cutoff] = rho
            ref = brute_force_wigner(big, g.x[i], g.p[j], 2 * cutoff)
            assert w.values[i, j] == pytest.approx(ref, abs=1e-9)


@pytest.mark.parametrize("alpha", [1.3, 1j * 1.2, 1.0 + 0.5j, math.sqrt(3)])
def test_coherent_peak_and_positivity(alpha):
    g = PhaseSpaceGrid.square(5, 201)
    w = wigner(coherent_state(alpha, SPACE), g)
    i, j = np.unravel_index(np.argmax(w.values), w.values.shape)
    cell = g.x[1] - g.x[0]
    assert abs(g.x[i] - math.sqrt(2) * alpha.real if isinstance(alpha, complex) else g.x[i] - math.sqrt(2) * alpha) <= cell
    assert abs(g.p[j] - math.sqrt(2) * complex(alpha).imag) <= cell
    assert w.values.min() >= -1e-9
    assert negativity_volume(w) < 1e-6


@pytest.mark.parametrize("state", [fock_state(3, SPACE), coherent_state(1.5, SPACE)])
def test_normalization_and_bound(state):
    w = wigner(state, PhaseSpaceGrid.default_for(3))
    assert w.integral() == pytest.approx(1.0, abs=2e-2)
    assert np.max(np.abs(w.values)) <= 1 / math.pi + 1e-9


def test_single_photon_negativity():
    w = wigner(fock_state(1, SPACE), PhaseSpaceGrid.square(5, 201))
    # (1/pi)(2r^2 - 1)e^{-r^2} is negative for r < 1/sqrt(2): volume 2 e^{-1/2} - 1
    assert negativity_volume(w) == pytest.approx(0.2132, abs=1e-3)
    assert negativity_volume(w) == pytest.approx(2 * math.exp(-0.5) - 1, abs=5e-4)


def test_density_and_pure_paths_agree():
    st = run_protocol(table1.sequence(3))
    g = PhaseSpaceGrid.default_for(3, 61)
    a = wigner(st, g).values
    b = wigner(DensityMatrix.from_pure(st), g).values
    assert np.max(np.abs(a - b)) < 1e-12


def test_grid_too_small():
    with pytest.raises(GridTooSmall):
        wigner(coherent_state(3.0, HilbertSpace(60)), PhaseSpaceGrid.square(2, 21))
    with pytest.raises(GridTooSmall):
        husimi(coherent_state(3.0, HilbertSpace(60)), PhaseSpaceGrid.square(2, 21))


@pytest.mark.parametrize("n", range(7))
def test_ring_count(n):
    w = wigner(fock_state(n, HilbertSpace(10)), PhaseSpaceGrid.square(math.sqrt(n) + 4, 401))
    assert sign_changes_along_ray(w) == n


def test_reference_state_rings_match_fock_three():
    g = PhaseSpaceGrid.default_for(3)
    out = wigner(run_protocol(table1.sequence(3)), g)
    ref = wigner(fock_state(3, SPACE), g)
    assert sign_changes_along_ray(out) == sign_changes_along_ray(ref) == 3


def test_husimi_basics():
    g = PhaseSpaceGrid.square(4, 81)
    q0 = husimi(fock_state(0, SPACE), g)
    q1 = husimi(fock_state(1, SPACE), g)
    assert q0.value_at(0, 0) == pytest.approx(1 / math.pi, abs=1e-12)
    assert q1.value_at(0, 0) == pytest.approx(0.0, abs=1e-15)
    xs, ps = g.mesh()
    assert np.max(np.abs(q0.values - np.exp(-(xs**2 + ps**2) / 2) / math.pi)) < 1e-12
    rho = DensityMatrix.from_pure(run_protocol(table1.sequence(2)))
    assert husimi(rho, g).values.min() >= -1e-12


def test_husimi_cat_state_two_peaks():
    cat = run_protocol(PulseSequence(2.0, (PulseStep(0.0, math.pi / 2),)))
    g = PhaseSpaceGrid.default_for(4)
    peaks = local_maxima(husimi(cat, g))
    assert len(peaks) == 2
    cell = g.x[1] - g.x[0]
    angles = sorted(math.atan2(p, x) for x, p, _ in peaks)
    for (x, p, _), ang in zip(sorted(peaks, key=lambda t: t[1]), (-math.pi / 2, math.pi / 2)):
        assert abs(math.hypot(x, p) - 2 * math.sqrt(2)) <= cell
        assert abs(x) <= cell and np.sign(p) == np.sign(ang)
    assert angles[0] < 0 < angles[1]


def test_exports(tmp_path):
    g = PhaseSpaceGrid(-3, 3, -2.6, 2.6, 13, 9)
    w = wigner(fock_state(1, SPACE), g)
    w.to_csv(tmp_path / "w.csv")
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert lines[0] == "x,p,value" and len(lines) == 1 + 13 * 9
    head, binp = w.to_binary(tmp_path / "w")
    meta = json.loads(head.read_text())
    assert meta["convention"] == w.convention
    data = np.fromfile(binp, dtype="<f8").reshape(meta["shape"])
    # row-major with x fastest: data[j_p, i_x]
    assert data[4, 6] == w.values[6, 4]
    assert np.array_equal(data.T, w.values)
