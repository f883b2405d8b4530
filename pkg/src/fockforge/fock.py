"""Single-mode truncated Fock space: states, preparation and photon statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import (
    ConfigError,
    CutoffTooSmall,
    IndexOutOfCutoff,
    SpaceMismatch,
    ZeroMeanPhoton,
)
from .special import log_factorial

NORM_TOL = 1e-9
TRACE_TOL = 1e-7
HERMITIAN_TOL = 1e-9
LEAKAGE_THRESHOLD = 1e-8


def _frozen(a, dtype=complex):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HilbertSpace:
    """Basis ``|0>, ..., |cutoff-1>`` of one bosonic mode."""

    cutoff: int

    def __post_init__(self):
        if int(self.cutoff) != self.cutoff or self.cutoff < 2:
            raise CutoffTooSmall(f"cutoff must be an integer >= 2, got {self.cutoff}")
        object.__setattr__(self, "cutoff", int(self.cutoff))

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.cutoff)

    def doubled(self) -> "HilbertSpace":
        return HilbertSpace(2 * self.cutoff)

    def check_same(self, other: "HilbertSpace"):
        if self.cutoff != other.cutoff:
            raise SpaceMismatch(f"cutoff {self.cutoff} != {other.cutoff}")


def auto_cutoff(radius: float) -> int:
    """Cutoff that keeps a Poisson-like tail of mean ``radius**2`` below ~1e-10.

    ``radius`` is an amplitude scale, e.g. ``|alpha| + sum(|beta_k|)``.
    """
    r = abs(radius)
    return max(4, math.ceil(r * r + 8 * r + 10))


@dataclass(frozen=True)
class PureState:
    """Normalized amplitude vector over the Fock basis.

    ``norm_deficit`` records ``1 - sum|c_n|^2`` measured before the last
    renormalization (truncation bookkeeping).
    """

    amplitudes: np.ndarray
    space: HilbertSpace
    norm_deficit: float = 0.0

    def __post_init__(self):
        amps = _frozen(self.amplitudes)
        if amps.shape != (self.space.cutoff,):
            raise SpaceMismatch(f"amplitude vector of shape {amps.shape} for cutoff {self.space.cutoff}")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ConfigError(f"state not normalized: sum|c|^2 = {norm!r}")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_unnormalized(cls, amplitudes, space: HilbertSpace) -> "PureState":
        amps = np.asarray(amplitudes, dtype=complex)
        norm2 = float(np.vdot(amps, amps).real)
        if norm2 == 0.0:
            raise ConfigError("zero vector cannot be normalized")
        return cls(amps / math.sqrt(norm2), space, norm_deficit=1.0 - norm2)

    @property
    def cutoff(self) -> int:
        return self.space.cutoff

    def to_json(self) -> dict:
        return {
            "cutoff": self.cutoff,
            "amplitudes": [[float(c.real), float(c.imag)] for c in self.amplitudes],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PureState":
        amps = np.array([complex(re, im) for re, im in doc["amplitudes"]])
        return cls.from_unnormalized(amps, HilbertSpace(doc["cutoff"]))


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace matrix over the Fock basis."""

    elements: np.ndarray
    space: HilbertSpace

    def __post_init__(self):
        rho = _frozen(self.elements)
        c = self.space.cutoff
        if rho.shape != (c, c):
            raise SpaceMismatch(f"matrix of shape {rho.shape} for cutoff {c}")
        if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
            raise ConfigError("density matrix is not Hermitian")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ConfigError(f"density matrix trace {tr!r} != 1")
        object.__setattr__(self, "elements", rho)

    @classmethod
    def from_pure(cls, state: PureState) -> "DensityMatrix":
        psi = state.amplitudes
        return cls(np.outer(psi, psi.conj()), state.space)

    @property
    def cutoff(self) -> int:
        return self.space.cutoff

    def purity(self) -> float:
        rho = self.elements
        return float(np.einsum("ij,ji->", rho, rho).real)

    def to_json(self) -> dict:
        return {
            "cutoff": self.cutoff,
            "rho": [[[float(z.real), float(z.imag)] for z in row] for row in self.elements],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DensityMatrix":
        rho = np.array([[complex(re, im) for re, im in row] for row in doc["rho"]])
        return cls(rho, HilbertSpace(doc["cutoff"]))


State = Union[PureState, DensityMatrix]


def state_from_json(doc: dict) -> State:
    """Load either state flavour from its JSON document."""
    if "amplitudes" in doc:
        return PureState.from_json(doc)
    if "rho" in doc:
        return DensityMatrix.from_json(doc)
    raise ConfigError("state document needs an 'amplitudes' or 'rho' entry")


@dataclass(frozen=True)
class PhotonDistribution:
    probabilities: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        p = _frozen(self.probabilities, dtype=float)
        if abs(p.sum() - 1.0) > 1e-8:
            raise ConfigError(f"probabilities sum to {p.sum()!r}")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ConfigError("probabilities outside [0, 1]")
        object.__setattr__(self, "probabilities", p)

    def __getitem__(self, n):
        return self.probabilities[n]

    def __len__(self):
        return len(self.probabilities)


def fock_state(n: int, space: HilbertSpace) -> PureState:
    if not 0 <= n < space.cutoff:
        raise IndexOutOfCutoff(f"|{n}> outside cutoff {space.cutoff}")
    amps = np.zeros(space.cutoff, dtype=complex)
    amps[n] = 1.0
    return PureState(amps, space)


def coherent_amplitudes(alpha: complex, cutoff: int) -> np.ndarray:
    """Unnormalized truncated expansion ``e^{-|a|^2/2} a^n / sqrt(n!)``."""
    n = np.arange(cutoff)
    out = np.zeros(cutoff, dtype=complex)
    if alpha == 0:
        out[0] = 1.0
        return out
    r = abs(alpha)
    log_mag = -0.5 * r * r + n * math.log(r) - 0.5 * log_factorial(n)
    return np.exp(log_mag + 1j * n * np.angle(alpha))


def coherent_state(alpha: complex, space: HilbertSpace) -> PureState:
    """Coherent state ``|alpha>``, renormalized over the truncated basis.

    Raises
    ------
    CutoffTooSmall
        if ``|alpha|^2 + 8|alpha| + 10 > cutoff``
    """
    r = abs(alpha)
    if r * r + 8 * r + 10 > space.cutoff:
        raise CutoffTooSmall(
            f"cutoff {space.cutoff} too small for |alpha| = {r:.4g} (need {r * r + 8 * r + 10:.1f})"
        )
    return PureState.from_unnormalized(coherent_amplitudes(alpha, space.cutoff), space)


def photon_distribution(state) -> PhotonDistribution:
    if isinstance(state, PhotonDistribution):
        return state
    if isinstance(state, PureState):
        return PhotonDistribution(np.abs(state.amplitudes) ** 2)
    if isinstance(state, DensityMatrix):
        diag = np.diagonal(state.elements)
        if np.max(np.abs(diag.imag)) >= 1e-10:
            raise ConfigError("density matrix diagonal has an imaginary part")
        return PhotonDistribution(diag.real.copy())
    raise TypeError(f"not a state: {type(state).__name__}")


def fock_fidelity(state: State, n: int) -> float:
    """Population ``<N|rho|N>`` of the target Fock state."""
    if not 0 <= n < state.space.cutoff:
        raise IndexOutOfCutoff(f"N = {n} outside cutoff {state.space.cutoff}")
    if isinstance(state, PureState):
        return float(abs(state.amplitudes[n]) ** 2)
    return float(state.elements[n, n].real)


def mean_and_variance(state) -> tuple[float, float]:
    """Return ``(<n>, <dn^2>)`` computed from the photon distribution."""
    p = photon_distribution(state).probabilities
    n = np.arange(len(p))
    mean = float(np.dot(n, p))
    var = float(np.dot((n - mean) ** 2, p))
    return mean, var


def second_order_coherence(state) -> float:
    """Zero-delay ``g2(0) = <n(n-1)> / <n>^2``."""
    p = photon_distribution(state).probabilities
    n = np.arange(len(p))
    mean = float(np.dot(n, p))
    if mean < 1e-12:
        raise ZeroMeanPhoton("g2(0) undefined for <n> ~ 0")
    return float(np.dot(n * (n - 1), p)) / mean**2


def overlap(a: PureState, b: PureState) -> complex:
    """Inner product ``<a|b>``."""
    a.space.check_same(b.space)
    return complex(np.vdot(a.amplitudes, b.amplitudes))
