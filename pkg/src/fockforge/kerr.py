"""Iterated Kerr-phase plus displacement protocol.

The state after ``M`` steps is

    |psi_M> = D(beta_M) U_K(chi_M) ... D(beta_1) U_K(chi_1) |alpha>

with ``U_K(chi) = exp(-i chi a+^2 a^2)`` diagonal in the Fock basis and the
displacement matrix elements built from associated Laguerre polynomials.
Step ``k = 1`` acts first; ``steps[0]`` is that first step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigError, CutoffConvergenceFailed, CutoffTooSmall, LeakageExceeded
from .fock import (
    LEAKAGE_THRESHOLD,
    HilbertSpace,
    PhotonDistribution,
    PureState,
    auto_cutoff,
    coherent_amplitudes,
    coherent_state,
    fock_fidelity,
    photon_distribution,
)
from .special import genlaguerre_table, log_factorial

MAX_BETA = 10.0
NORM_DEFICIT_LIMIT = 1e-6
CONVERGENCE_TOL = 1e-6


@dataclass(frozen=True)
class PulseStep:
    """One protocol step: Kerr phase ``chi`` (radians) then displacement ``beta``."""

    beta: float
    chi: float

    def __post_init__(self):
        if not (math.isfinite(self.beta) and math.isfinite(self.chi)):
            raise ConfigError(f"non-finite step parameters ({self.beta}, {self.chi})")
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "chi", float(self.chi))

    @classmethod
    def from_chi_over_pi(cls, beta: float, chi_over_pi: float) -> "PulseStep":
        return cls(beta, chi_over_pi * math.pi)

    @property
    def chi_over_pi(self) -> float:
        return self.chi / math.pi


@dataclass(frozen=True)
class PulseSequence:
    alpha: complex
    steps: tuple[PulseStep, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "steps", tuple(self.steps))

    @classmethod
    def from_lists(cls, alpha, betas: Sequence[float], chis_over_pi: Sequence[float]) -> "PulseSequence":
        if len(betas) != len(chis_over_pi):
            raise ConfigError("betas and chis must have the same length")
        return cls(alpha, tuple(PulseStep.from_chi_over_pi(b, c) for b, c in zip(betas, chis_over_pi)))

    @classmethod
    def for_target(cls, n: int, betas: Sequence[float] = (), chis_over_pi: Sequence[float] = ()) -> "PulseSequence":
        """Sequence starting from the coherent state ``|sqrt(n)>``."""
        return cls.from_lists(math.sqrt(n), betas, chis_over_pi)

    @property
    def m(self) -> int:
        return len(self.steps)

    @property
    def betas(self) -> list[float]:
        return [s.beta for s in self.steps]

    @property
    def chis(self) -> list[float]:
        return [s.chi for s in self.steps]

    @property
    def chis_over_pi(self) -> list[float]:
        return [s.chi_over_pi for s in self.steps]

    def auto_space(self) -> HilbertSpace:
        return HilbertSpace(auto_cutoff(abs(self.alpha) + sum(abs(b) for b in self.betas)))

    def to_json(self) -> dict:
        return {
            "alpha": [self.alpha.real, self.alpha.imag],
            "steps": [{"beta": s.beta, "chi_over_pi": s.chi_over_pi} for s in self.steps],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PulseSequence":
        a = doc.get("alpha", [0.0, 0.0])
        alpha = complex(a[0], a[1]) if isinstance(a, (list, tuple)) else complex(a)
        steps = [PulseStep.from_chi_over_pi(s["beta"], s["chi_over_pi"]) for s in doc.get("steps", [])]
        return cls(alpha, tuple(steps))


@dataclass(frozen=True)
class DisplacementMatrix:
    entries: np.ndarray
    beta: float
    space: HilbertSpace

    def safe_block(self) -> int:
        """Size of the upper-left block unaffected by truncation."""
        return max(0, self.space.cutoff - math.ceil(8 * abs(self.beta) + 10))


@lru_cache(maxsize=512)
def _displacement_entries(beta: float, cutoff: int) -> np.ndarray:
    if beta == 0.0:
        out = np.eye(cutoff)
        out.setflags(write=False)
        return out
    x = beta * beta
    n = np.arange(cutoff)[:, None]
    m = np.arange(cutoff)[None, :]
    lo = np.minimum(n, m)
    k = np.abs(n - m)
    # lag[p, q] = L_p^q(beta^2); only p + q < cutoff is ever read
    lag = genlaguerre_table(cutoff - 1, np.arange(cutoff), x)
    lval = lag[lo, k]
    with np.errstate(divide="ignore"):
        log_mag = (
            -0.5 * x
            + 0.5 * (log_factorial(lo) - log_factorial(lo + k))
            + k * math.log(abs(beta))
            + np.log(np.abs(lval))
        )
    # n >= m carries beta^k, n < m carries (-beta)^k
    sign = np.sign(lval) * np.where((k % 2 == 1) & ((n < m) ^ (beta < 0)), -1.0, 1.0)
    out = sign * np.exp(log_mag)
    out.setflags(write=False)
    return out


def displacement_matrix(beta: float, space: HilbertSpace) -> DisplacementMatrix:
    """Matrix elements ``<n|D(beta)|m>`` for real ``beta``.

    Laguerre values come from the three-term recurrence; the factorial and
    power prefactors are combined in log space with signs carried separately.
    """
    beta = float(beta)
    if not abs(beta) <= MAX_BETA:
        raise ConfigError(f"|beta| = {abs(beta)} exceeds {MAX_BETA}")
    if space.cutoff < 4:
        raise CutoffTooSmall("displacement needs cutoff >= 4")
    return DisplacementMatrix(_displacement_entries(beta, space.cutoff), beta, space)


def kerr_phases(chi: float, space: HilbertSpace) -> np.ndarray:
    """Diagonal of ``U_K(chi)``: ``exp(-i chi n(n-1))``.

    ``n(n-1)`` is even, so ``chi`` is reduced modulo pi first; this keeps the
    pi-periodicity exact up to a single rounding of ``chi``.
    """
    n = space.n
    chi_r = math.fmod(chi, math.pi)
    return np.exp(-1j * chi_r * (n * (n - 1)))


def apply_step(state: PureState, step: PulseStep, leakage_threshold: float = LEAKAGE_THRESHOLD) -> PureState:
    """Apply ``D(beta) U_K(chi)`` and renormalize.

    Raises
    ------
    LeakageExceeded
        if the norm lost to truncation exceeds 1e-6 or the top basis state
        is populated above ``leakage_threshold``
    """
    space = state.space
    d = displacement_matrix(step.beta, space).entries
    out = d @ (kerr_phases(step.chi, space) * state.amplitudes)
    norm2 = float(np.vdot(out, out).real)
    deficit = 1.0 - norm2
    if deficit > NORM_DEFICIT_LIMIT:
        raise LeakageExceeded(f"norm deficit {deficit:.3g} after step {step} at cutoff {space.cutoff}")
    top = abs(out[-1]) ** 2 / norm2
    if top >= leakage_threshold:
        raise LeakageExceeded(f"top-level population {top:.3g} at cutoff {space.cutoff}")
    return PureState(out / math.sqrt(norm2), space, norm_deficit=deficit)


def propagate_amplitudes(alpha: complex, betas, chis, cutoff: int) -> np.ndarray:
    """Unchecked fast path used by the optimizer; returns a normalized vector."""
    space = HilbertSpace(cutoff)
    psi = coherent_amplitudes(alpha, cutoff)
    for beta, chi in zip(betas, chis):
        psi = _displacement_entries(float(beta), cutoff) @ (kerr_phases(chi, space) * psi)
    return psi / np.linalg.norm(psi)


def _run(seq: PulseSequence, space: HilbertSpace, leakage_threshold: float) -> PureState:
    state = coherent_state(seq.alpha, space)
    for step in seq.steps:
        state = apply_step(state, step, leakage_threshold)
    top = abs(state.amplitudes[-1]) ** 2
    if top >= leakage_threshold:
        raise LeakageExceeded(f"top-level population {top:.3g} at cutoff {space.cutoff}")
    return state


def convergence_delta(seq: PulseSequence, space: HilbertSpace, state: PureState | None = None) -> float:
    """Largest change in any photon probability when the cutoff is doubled."""
    if state is None:
        state = _run(seq, space, LEAKAGE_THRESHOLD)
    big = _run(seq, space.doubled(), 1.0)
    p = np.abs(state.amplitudes) ** 2
    q = np.abs(big.amplitudes) ** 2
    c = space.cutoff
    return float(max(np.max(np.abs(p - q[:c])), q[c:].sum()))


def run_protocol(
    seq: PulseSequence,
    space: HilbertSpace | None = None,
    *,
    check_convergence: bool = True,
    leakage_threshold: float = LEAKAGE_THRESHOLD,
) -> PureState:
    """Evolve ``|alpha>`` through every step of ``seq``.

    With ``check_convergence`` the run is repeated at twice the cutoff and
    :class:`CutoffConvergenceFailed` is raised if any photon probability moves
    by 1e-6 or more.
    """
    space = space or seq.auto_space()
    state = _run(seq, space, leakage_threshold)
    if check_convergence:
        delta = convergence_delta(seq, space, state)
        if delta >= CONVERGENCE_TOL:
            raise CutoffConvergenceFailed(f"doubling the cutoff moved P_n by {delta:.3g}")
    return state


def protocol_fidelity(
    seq: PulseSequence,
    n: int,
    space: HilbertSpace | None = None,
    *,
    check_convergence: bool = True,
) -> float:
    """``|<N|psi_M>|^2`` by sequential state propagation."""
    state = run_protocol(seq, space, check_convergence=check_convergence)
    return fock_fidelity(state, n)


@dataclass(frozen=True)
class ProtocolResult:
    target_n: int | None
    fidelity: float | None
    distribution: PhotonDistribution
    state: PureState
    sequence: PulseSequence
    meta: dict = field(default_factory=dict)


def evaluate_protocol(seq: PulseSequence, target_n: int | None = None, space: HilbertSpace | None = None) -> ProtocolResult:
    """Run the protocol with all guards and collect provenance metadata."""
    space = space or seq.auto_space()
    state = run_protocol(seq, space, check_convergence=False)
    delta = convergence_delta(seq, space, state)
    if delta >= CONVERGENCE_TOL:
        raise CutoffConvergenceFailed(f"doubling the cutoff moved P_n by {delta:.3g}")
    fid = None if target_n is None else fock_fidelity(state, target_n)
    meta = {
        "cutoff": space.cutoff,
        "convergence_delta": delta,
        "convergence_ok": True,
        "norm_deficit_last_step": state.norm_deficit,
    }
    return ProtocolResult(target_n, fid, photon_distribution(state), state, seq, meta)
