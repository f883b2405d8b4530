import math

import numpy as np
import pytest

from fockforge import table1
from fockforge.dissipation import (
    DissipativeConfig,
    apply_instant_pulse,
    is_non_increasing,
    lindblad_evolve,
    loss_sweep,
    region_map,
    region_summary,
    run_dissipative_protocol,
)
from fockforge.errors import ConfigError, MissingParameters, StepTooLarge
from fockforge.fock import DensityMatrix, HilbertSpace, coherent_state, fock_state, mean_and_variance
from fockforge.kerr import PulseSequence, PulseStep, apply_step, protocol_fidelity


def free_config(alpha, **kw):
    return DissipativeConfig(PulseSequence(alpha), **kw)


def test_config_validation():
    seq = table1.sequence(3)
    with pytest.raises(ConfigError):
        DissipativeConfig(seq, gamma_over_k=-1e-3)
    with pytest.raises(ConfigError):
        DissipativeConfig(seq, integrator_step=0.0)
    with pytest.raises(ConfigError):
        DissipativeConfig(PulseSequence(1.0, (PulseStep(0.1, -0.2),)))


def test_unitary_limit_single_segment():
    cfg = free_config(1.3)
    rho0 = DensityMatrix.from_pure(coherent_state(1.3, cfg.space))
    out = lindblad_evolve(rho0, 0.74 * math.pi, cfg)
    psi = apply_step(coherent_state(1.3, cfg.space), PulseStep(0.0, 0.74 * math.pi)).amplitudes
    fid = np.vdot(psi, out.elements @ psi).real
    assert 1 - fid < 1e-6


@pytest.mark.parametrize("gt", [0.1, 1.0, 5.0])
def test_damped_cavity_mean_photon_number(gt):
    alpha = 1.5
    cfg = free_config(alpha, kerr_strength=0.0, gamma_over_k=1.0, integrator_step=2e-3)
    rho = lindblad_evolve(DensityMatrix.from_pure(coherent_state(alpha, cfg.space)), gt, cfg)
    mean, _ = mean_and_variance(rho)
    expected = alpha**2 * math.exp(-gt)
    assert abs(mean - expected) / expected < 1e-5


def test_damped_cavity_with_kerr_keeps_mean_law():
    # Kerr commutes with n, so the mean photon number decays identically
    cfg = free_config(1.2, gamma_over_k=0.3, integrator_step=5e-3)
    rho = lindblad_evolve(DensityMatrix.from_pure(coherent_state(1.2, cfg.space)), 2.0, cfg)
    assert mean_and_variance(rho)[0] == pytest.approx(1.44 * math.exp(-0.6), rel=1e-5)


def test_single_photon_half_life():
    space = HilbertSpace(6)
    cfg = DissipativeConfig(PulseSequence(0.0), kerr_strength=0.0, gamma_over_k=1.0, integrator_step=1e-3, space=space)
    rho = lindblad_evolve(DensityMatrix.from_pure(fock_state(1, space)), math.log(2), cfg)
    p = np.diagonal(rho.elements).real
    assert p[1] == pytest.approx(0.5, abs=1e-5)
    assert p[0] == pytest.approx(0.5, abs=1e-5)


def test_stability_guard():
    cfg = free_config(1.0, gamma_over_k=1.0, integrator_step=0.1)
    with pytest.raises(StepTooLarge):
        lindblad_evolve(DensityMatrix.from_pure(coherent_state(1.0, cfg.space)), 1.0, cfg)


def test_negative_duration_rejected():
    cfg = free_config(1.0)
    with pytest.raises(ConfigError):
        lindblad_evolve(DensityMatrix.from_pure(coherent_state(1.0, cfg.space)), -1.0, cfg)


def test_instant_pulse_properties():
    space = HilbertSpace(30)
    vac = DensityMatrix.from_pure(fock_state(0, space))
    assert np.array_equal(apply_instant_pulse(vac, 0.0).elements, vac.elements)
    out = apply_instant_pulse(vac, 0.5)
    psi = coherent_state(0.5, space).amplitudes
    assert np.vdot(psi, out.elements @ psi).real > 1 - 1e-9
    mixed = DensityMatrix(np.diag([0.5, 0.3, 0.2] + [0.0] * 27), space)
    pulsed = apply_instant_pulse(mixed, 0.7)
    assert pulsed.purity() == pytest.approx(mixed.purity(), abs=1e-9)
    assert np.max(np.abs(pulsed.elements - pulsed.elements.conj().T)) < 1e-9


@pytest.mark.parametrize("n", [3, 5])
def test_lossless_protocol_matches_pure_state(n):
    seq = table1.sequence(n, 3)
    res = run_dissipative_protocol(DissipativeConfig(seq), n)
    assert res.fidelity == pytest.approx(protocol_fidelity(seq, n), abs=1e-5)


def test_small_loss_reference_n5():
    res = run_dissipative_protocol(DissipativeConfig(table1.sequence(5), gamma_over_k=1e-5), 5)
    assert res.fidelity == pytest.approx(0.97, abs=0.02)
    assert res.trace_drift < 1e-6
    rho = res.final_rho.elements
    assert np.max(np.abs(rho - rho.conj().T)) < 1e-9
    assert np.linalg.eigvalsh(rho).min() > -1e-7


def test_protocol_rejects_bad_inputs():
    cfg = DissipativeConfig(table1.sequence(3))
    with pytest.raises(ConfigError):
        run_dissipative_protocol(cfg, cfg.space.cutoff)
    with pytest.raises(ConfigError):
        run_dissipative_protocol(DissipativeConfig(PulseSequence(1.0)), 1)


def test_timeline_sampling():
    cfg = DissipativeConfig(table1.sequence(2), gamma_over_k=1e-3, sample_every=100)
    res = run_dissipative_protocol(cfg, 2)
    assert res.timeline
    times = [t for t, _, _ in res.timeline]
    assert times == sorted(times)
    assert all(0 <= p <= 1 for _, p, _ in res.timeline)


def test_loss_sweep_monotone_and_shape():
    cfg = DissipativeConfig(table1.sequence(5))
    rows = loss_sweep(cfg, [0, 1e-5, 1e-4, 1e-3], 5)
    fids = [r.fidelity for r in rows]
    assert fids[0] == pytest.approx(0.97, abs=0.01)
    assert is_non_increasing(fids)
    assert loss_sweep(cfg, [], 5) == []
    dup = loss_sweep(cfg, [1e-4, 1e-4], 5)
    assert dup[0].fidelity == pytest.approx(dup[1].fidelity, abs=1e-12)


def test_loss_sweep_validation():
    cfg = DissipativeConfig(table1.sequence(2))
    with pytest.raises(ConfigError):
        loss_sweep(cfg, [1e-3, 0.0], 2)
    with pytest.raises(ConfigError):
        loss_sweep(cfg, [-1.0], 2)


def test_step_halving_order():
    seq = table1.sequence(3)
    gamma = 0.01
    dts = [0.04, 0.02, 0.01, 0.005]
    fids = [run_dissipative_protocol(DissipativeConfig(seq, gamma_over_k=gamma, integrator_step=dt), 3).fidelity for dt in dts]
    errs = np.abs(np.diff(fids))
    ratios = errs[:-1] / errs[1:]
    assert np.all(ratios > 8)


def test_default_step_is_converged():
    seq = table1.sequence(5)
    base = DissipativeConfig(seq, gamma_over_k=1e-3)
    a = run_dissipative_protocol(base, 5).fidelity
    b = run_dissipative_protocol(base.with_(integrator_step=base.integrator_step / 2), 5).fidelity
    assert abs(a - b) < 1e-6


def test_region_map_examples():
    mask, fids = region_map([5], [1e-5], 0.9)
    assert mask.shape == (1, 1) and mask[0, 0]
    # absurd loss: the cheapest row already collapses toward vacuum
    mask, fids = region_map([1], [1e-5, 10.0], 0.9)
    assert list(mask[:, 0]) == [True, False]
    assert fids[1, 0] < 0.1
    mask0, _ = region_map([1], [1e-5, 10.0], 0.0)
    assert mask0.all()
    assert region_summary([1], [1e-5, 10.0], mask) == {1: 1e-5}


def test_region_map_prefix_property():
    grid = [0.0, 1e-3, 1e-2, 1e-1]
    mask, fids = region_map([2, 3], grid)
    for j in range(mask.shape[1]):
        col = list(mask[:, j])
        assert col == sorted(col, reverse=True)


def test_region_map_missing_row():
    with pytest.raises(MissingParameters):
        region_map([11], [0.0])
