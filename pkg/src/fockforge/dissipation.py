"""Photon loss during the protocol: Lindblad evolution between instantaneous pulses.

Between pulses

    drho/dt = -i[H, rho] + (gamma/2)(2 a rho a+ - a+a rho - rho a+a),   H = K a+^2 a^2

In the Fock basis this splits into a diagonal part acting elementwise,
``-(i(E_n - E_m) + gamma(n+m)/2) rho_nm``, and the jump term
``gamma sqrt((n+1)(m+1)) rho_{n+1,m+1}``. The diagonal part is integrated
exactly (integrating factor) and the jump term with classical RK4, so the
step size is limited by ``gamma * cutoff`` rather than by the Kerr spectrum.
Time is measured in units of ``1/K``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, LeakageExceeded, StepTooLarge, TraceDriftExceeded
from .fock import LEAKAGE_THRESHOLD, DensityMatrix, HilbertSpace, coherent_state
from .kerr import PulseSequence, displacement_matrix
from . import table1

DEFAULT_DT = 1e-3 * math.pi
STABILITY_LIMIT = 0.1
TRACE_DRIFT_LIMIT = 1e-6


@dataclass(frozen=True)
class DissipativeConfig:
    sequence: PulseSequence
    gamma_over_k: float = 0.0
    kerr_strength: float = 1.0
    integrator_step: float = DEFAULT_DT
    space: HilbertSpace | None = None
    sample_every: int | None = None

    def __post_init__(self):
        if not self.gamma_over_k >= 0:
            raise ConfigError("gamma_over_k must be >= 0")
        if not self.integrator_step > 0:
            raise ConfigError("integrator_step must be > 0")
        if self.kerr_strength < 0:
            raise ConfigError("kerr_strength must be >= 0")
        if any(s.chi < 0 for s in self.sequence.steps):
            raise ConfigError("Kerr segment durations must be >= 0")
        if self.space is None:
            object.__setattr__(self, "space", self.sequence.auto_space())

    @property
    def gamma(self) -> float:
        return self.gamma_over_k * (self.kerr_strength or 1.0)

    def with_(self, **kw) -> "DissipativeConfig":
        params = {f: getattr(self, f) for f in self.__dataclass_fields__}
        params.update(kw)
        return DissipativeConfig(**params)

    def durations(self) -> list[float]:
        """Kerr segment lengths ``t_k - t_{k-1} = chi_k / K``."""
        k = self.kerr_strength or 1.0
        return [s.chi / k for s in self.sequence.steps]


@dataclass
class DissipativeResult:
    final_rho: DensityMatrix
    fidelity: float
    trace_drift: float
    timeline: list = field(default_factory=list)


def stable_step(gamma: float, cutoff: int, dt: float = DEFAULT_DT) -> float:
    """Largest step not above ``dt`` that passes the stability guard with margin."""
    if gamma == 0:
        return dt
    return min(dt, 0.5 * STABILITY_LIMIT / (gamma * cutoff))


def _generator_parts(space: HilbertSpace, kerr: float, gamma: float):
    n = space.n.astype(float)
    energy = kerr * n * (n - 1)
    diag = -1j * (energy[:, None] - energy[None, :]) - 0.5 * gamma * (n[:, None] + n[None, :])
    jump = gamma * np.sqrt(np.outer(n[1:], n[1:]))
    return diag, jump


def _apply_jump(rho, jump):
    out = np.zeros_like(rho)
    out[:-1, :-1] = jump * rho[1:, 1:]
    return out


def lindblad_evolve(
    rho: DensityMatrix,
    duration: float,
    config: DissipativeConfig,
    *,
    timeline: list | None = None,
    t_offset: float = 0.0,
) -> DensityMatrix:
    """Integrate the master equation for ``duration`` (units of 1/K).

    Fixed-step RK4 in the interaction frame of the diagonal generator. The
    state is re-Hermitized after each step; the trace is renormalized at the
    end only if its drift is below 1e-6.

    Raises
    ------
    StepTooLarge
        if ``dt * gamma * cutoff > 0.1``
    TraceDriftExceeded
        if ``|Tr rho - 1| >= 1e-6`` at the end of the segment
    """
    return _evolve(rho, duration, config, timeline, t_offset)[0]


def _evolve(rho, duration, config, timeline=None, t_offset=0.0):
    if duration < 0:
        raise ConfigError("duration must be >= 0")
    space = rho.space
    space.check_same(config.space)
    gamma = config.gamma
    dt = config.integrator_step
    if dt * gamma * space.cutoff > STABILITY_LIMIT:
        raise StepTooLarge(f"dt * gamma * cutoff = {dt * gamma * space.cutoff:.3g} > {STABILITY_LIMIT}")
    if duration == 0:
        return rho, 0.0
    steps = max(1, math.ceil(duration / dt - 1e-9))
    h = duration / steps
    diag, jump = _generator_parts(space, config.kerr_strength, gamma)
    e_half = np.exp(0.5 * h * diag)
    e_full = e_half * e_half
    r = np.array(rho.elements)
    every = config.sample_every
    for i in range(steps):
        if gamma == 0:
            r = e_full * r
        else:
            k1 = _apply_jump(r, jump)
            k2 = _apply_jump(e_half * (r + 0.5 * h * k1), jump)
            k3 = _apply_jump(e_half * r + 0.5 * h * k2, jump)
            k4 = _apply_jump(e_full * r + h * e_half * k3, jump)
            r = e_full * r + (h / 6.0) * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4)
        r = 0.5 * (r + r.conj().T)
        if timeline is not None and every and (i + 1) % every == 0:
            p = np.diagonal(r).real
            timeline.append((t_offset + (i + 1) * h, p.copy()))
    drift = abs(np.trace(r).real - 1.0)
    if drift >= TRACE_DRIFT_LIMIT:
        raise TraceDriftExceeded(f"trace drifted by {drift:.3g}")
    return DensityMatrix(r / np.trace(r).real, space), drift


def apply_instant_pulse(rho: DensityMatrix, beta: float, leakage_threshold: float = LEAKAGE_THRESHOLD) -> DensityMatrix:
    """Delta-pulse drive: ``rho -> D(beta) rho D(beta)+``."""
    d = displacement_matrix(beta, rho.space).entries
    out = d @ rho.elements @ d.T
    out = 0.5 * (out + out.conj().T)
    top = out[-1, -1].real
    if top >= leakage_threshold:
        raise LeakageExceeded(f"top-level population {top:.3g} at cutoff {rho.space.cutoff}")
    tr = np.trace(out).real
    if abs(tr - 1.0) > 1e-6:
        raise LeakageExceeded(f"pulse lost trace {1.0 - tr:.3g} to truncation")
    return DensityMatrix(out / tr, rho.space)


def run_dissipative_protocol(config: DissipativeConfig, n: int) -> DissipativeResult:
    """Start from ``|alpha><alpha|``; for each step evolve ``chi_k / K`` then pulse ``beta_k``."""
    space = config.space
    if not 0 <= n < space.cutoff:
        raise ConfigError(f"N = {n} outside cutoff {space.cutoff}")
    if not config.sequence.steps:
        raise ConfigError("sequence has no steps")
    rho = DensityMatrix.from_pure(coherent_state(config.sequence.alpha, space))
    timeline = [] if config.sample_every else None
    t = 0.0
    max_drift = 0.0
    for step, duration in zip(config.sequence.steps, config.durations()):
        rho, drift = _evolve(rho, duration, config, timeline, t)
        t += duration
        rho = apply_instant_pulse(rho, step.beta)
        max_drift = max(max_drift, drift)
    fid = float(rho.elements[n, n].real)
    samples = []
    if timeline is not None:
        for ts, p in timeline:
            samples.append((ts, float(p[n]), float(np.dot(np.arange(len(p)), p))))
    return DissipativeResult(rho, fid, max_drift, samples)


@dataclass(frozen=True)
class SweepRow:
    gamma_over_k: float
    n: int
    fidelity: float
    trace_drift: float
    wall_ms: float

    def as_tuple(self):
        return (self.gamma_over_k, self.n, self.fidelity, self.trace_drift, self.wall_ms)


def loss_sweep(config: DissipativeConfig, gamma_over_k_values: Sequence[float], n: int, *, auto_step: bool = True) -> list[SweepRow]:
    """One dissipative run per loss rate.

    With ``auto_step`` the integrator step is shrunk where the stability guard
    would otherwise trip (large ``gamma``).
    """
    values = [float(g) for g in gamma_over_k_values]
    if any(g < 0 for g in values):
        raise ConfigError("loss rates must be >= 0")
    if values != sorted(values):
        raise ConfigError("loss rates must be sorted ascending")
    out = []
    for g in values:
        cfg = config.with_(gamma_over_k=g)
        if auto_step:
            cfg = cfg.with_(integrator_step=stable_step(cfg.gamma, cfg.space.cutoff, config.integrator_step))
        t0 = time.perf_counter()
        res = run_dissipative_protocol(cfg, n)
        out.append(SweepRow(g, n, res.fidelity, res.trace_drift, 1e3 * (time.perf_counter() - t0)))
    return out


def is_non_increasing(values: Sequence[float], slack: float = 1e-4) -> bool:
    return all(b <= a + slack for a, b in zip(values, values[1:]))


def region_map(
    n_values: Sequence[int],
    gamma_grid: Sequence[float],
    threshold: float = 0.9,
    *,
    m: int = 3,
    integrator_step: float = DEFAULT_DT,
) -> tuple[np.ndarray, np.ndarray]:
    """Where the reference parameters still beat ``threshold`` under loss.

    Returns ``(mask, fidelities)``, both indexed ``[i_gamma, i_N]``.

    Raises
    ------
    MissingParameters
        for an ``N`` without reference parameters
    """
    seqs = {n: table1.sequence(n, m) for n in n_values}  # fail before any work
    fids = np.empty((len(gamma_grid), len(n_values)))
    for j, n in enumerate(n_values):
        cfg = DissipativeConfig(seqs[n], integrator_step=integrator_step)
        rows = loss_sweep(cfg, sorted(gamma_grid), n)
        by_gamma = {r.gamma_over_k: r.fidelity for r in rows}
        fids[:, j] = [by_gamma[float(g)] for g in gamma_grid]
    return fids > threshold, fids


def region_summary(n_values, gamma_grid, mask) -> dict:
    """``{N: largest gamma/K with fidelity above threshold}`` (None if none)."""
    out = {}
    for j, n in enumerate(n_values):
        ok = [g for g, flag in zip(gamma_grid, mask[:, j]) if flag]
        out[int(n)] = max(ok) if ok else None
    return out

