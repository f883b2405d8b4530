import math

import numpy as np
import pytest

from fockforge.errors import ConfigError, PulseOutsideWindow, StepTooLarge
from fockforge.fock import HilbertSpace, coherent_state
from fockforge.kerr import PulseStep, apply_step
from fockforge.pulses import PulseShape, convergence_study, finite_pulse_propagate

CHI = 0.74 * math.pi


@pytest.mark.parametrize("kind", ["gaussian", "square"])
def test_envelope_unit_area(kind):
    shape = PulseShape(kind, 0.05, 0.5)
    t = np.linspace(-1, 1, 400_001)
    area = np.trapezoid(shape.envelope(t, 0.0), t) if hasattr(np, "trapezoid") else np.trapz(shape.envelope(t, 0.0), t)
    assert area == pytest.approx(1.0, abs=5e-4)


def test_shape_validation():
    with pytest.raises(PulseOutsideWindow):
        PulseShape("gaussian", 0.0, 0.5)
    with pytest.raises(ConfigError):
        PulseShape("lorentzian", 0.1, 0.5)


def test_window_guards():
    with pytest.raises(PulseOutsideWindow):
        finite_pulse_propagate(1.0, PulseShape("gaussian", 0.5, 0.5), CHI)
    with pytest.raises(PulseOutsideWindow):
        finite_pulse_propagate(1.0, PulseShape("gaussian", 0.01, 0.5, center=0.01), CHI)
    with pytest.raises(StepTooLarge):
        finite_pulse_propagate(1.0, PulseShape("gaussian", 0.01, 0.5), CHI, steps_per_width=20)


def test_zero_area_is_pure_kerr():
    space = HilbertSpace(30)
    out = finite_pulse_propagate(1.0, PulseShape("gaussian", 0.01, 0.0), CHI, space)
    ref = apply_step(coherent_state(1.0, space), PulseStep(0.0, CHI))
    assert 1 - abs(np.vdot(ref.amplitudes, out.amplitudes)) < 1e-8


def test_narrow_pulse_close_to_kick():
    space = HilbertSpace(30)
    out = finite_pulse_propagate(1.0, PulseShape("gaussian", 1e-3, 0.5), CHI, space)
    ref = apply_step(coherent_state(1.0, space), PulseStep(0.5, CHI))
    assert abs(np.vdot(ref.amplitudes, out.amplitudes)) > 1 - 1e-3
    assert abs(out.norm_deficit) < 1e-8


@pytest.mark.parametrize("width", [0.2, 0.05])
def test_zero_kerr_is_exact_displacement(width):
    space = HilbertSpace(30)
    out = finite_pulse_propagate(0.0, PulseShape("gaussian", width, 0.5), CHI, space, kerr_strength=0.0)
    assert 1 - abs(np.vdot(coherent_state(0.5, space).amplitudes, out.amplitudes)) < 1e-6


@pytest.mark.parametrize("kind", ["gaussian", "square"])
def test_convergence_study_decreasing(kind):
    table = convergence_study([1e-1, 1e-2, 1e-3], PulseStep(0.5, CHI), 1.0, kind=kind)
    assert table.strictly_decreasing()
    assert table.deficits[-1] < 1e-3
    assert table.fitted_order >= 1.0
    assert [r[0] for r in table.rows()] == [1e-1, 1e-2, 1e-3]


def test_convergence_without_drive():
    table = convergence_study([1e-1, 1e-2, 1e-3], PulseStep(0.0, CHI), 1.0)
    assert max(table.deficits) < 1e-8
    assert math.isnan(table.fitted_order)


def test_convergence_study_validation():
    step = PulseStep(0.5, CHI)
    with pytest.raises(ConfigError):
        convergence_study([1e-1, 1e-2], step)
    with pytest.raises(PulseOutsideWindow):
        convergence_study([1e-1, 1e-2, 0.0], step)
    with pytest.raises(ConfigError):
        convergence_study([1e-3, 1e-2, 1e-1], step)
