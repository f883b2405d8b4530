"""Wigner and Husimi functions on rectangular phase-space grids.

Coordinates are ``x = sqrt(2) Re(alpha)``, ``p = sqrt(2) Im(alpha)``, so a
vacuum Wigner function is ``exp(-x^2 - p^2) / pi`` and ``W_n(0, 0) = (-1)^n / pi``.
Arrays are indexed ``[i_x, i_p]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import maximum_filter

from .errors import ConfigError, GridTooSmall
from .fock import DensityMatrix, PureState, mean_and_variance
from .special import genlaguerre_table, log_factorial

WIGNER_CONVENTION = "W_n(0,0)=(-1)^n/pi; x=sqrt2*Re(alpha), p=sqrt2*Im(alpha); integral dx dp = 1"
HUSIMI_CONVENTION = "Q(alpha)=<alpha|rho|alpha>/pi; x=sqrt2*Re(alpha), p=sqrt2*Im(alpha); integral dx dp = 2"


@dataclass(frozen=True)
class PhaseSpaceGrid:
    x_min: float
    x_max: float
    p_min: float
    p_max: float
    n_x: int
    n_p: int

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.p_max > self.p_min):
            raise ConfigError("grid bounds must satisfy max > min")
        if self.n_x < 8 or self.n_p < 8:
            raise ConfigError("grid needs at least 8 points per axis")

    @classmethod
    def square(cls, half_width: float, points: int = 201) -> "PhaseSpaceGrid":
        return cls(-half_width, half_width, -half_width, half_width, points, points)

    @classmethod
    def default_for(cls, n: float, points: int = 201) -> "PhaseSpaceGrid":
        return cls.square(math.sqrt(n) + 4.0, points)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_x)

    @property
    def p(self) -> np.ndarray:
        return np.linspace(self.p_min, self.p_max, self.n_p)

    @property
    def cell_area(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x - 1) * (self.p_max - self.p_min) / (self.n_p - 1)

    @property
    def radius(self) -> float:
        return min(abs(self.x_min), abs(self.x_max), abs(self.p_min), abs(self.p_max))

    def mesh(self):
        return np.meshgrid(self.x, self.p, indexing="ij")


@dataclass(frozen=True)
class PhaseSpaceField:
    values: np.ndarray
    grid: PhaseSpaceGrid
    convention: str

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_area)

    def value_at(self, x: float, p: float) -> float:
        i = int(np.argmin(np.abs(self.grid.x - x)))
        j = int(np.argmin(np.abs(self.grid.p - p)))
        return float(self.values[i, j])

    def to_csv(self, path) -> None:
        from .io import write_csv

        xs, ps = self.grid.mesh()
        rows = zip(xs.ravel(), ps.ravel(), self.values.ravel())
        write_csv(path, ["x", "p", "value"], rows)

    def to_binary(self, stem) -> tuple[Path, Path]:
        """Write ``stem.json`` (header) and ``stem.bin`` (float64, row-major, x fastest)."""
        from .io import atomic_write

        stem = Path(stem)
        header = {
            "convention": self.convention,
            "grid": self.grid.__dict__,
            "dtype": "float64",
            "byteorder": "little",
            "shape": [self.grid.n_p, self.grid.n_x],
            "layout": "row-major, x index fastest",
        }
        data = np.ascontiguousarray(self.values.T, dtype="<f8").tobytes()
        bin_path, json_path = stem.with_suffix(".bin"), stem.with_suffix(".json")
        atomic_write(bin_path, data)
        atomic_write(json_path, json.dumps(header, indent=2) + "\n")
        return json_path, bin_path


WignerField = PhaseSpaceField


def _density(state) -> np.ndarray:
    if isinstance(state, PureState):
        psi = state.amplitudes
        return np.outer(psi, psi.conj())
    if isinstance(state, DensityMatrix):
        return np.asarray(state.elements)
    raise TypeError(f"not a state: {type(state).__name__}")


def _effective_dim(rho: np.ndarray, tol: float = 1e-16) -> int:
    occupied = np.nonzero(np.abs(np.diagonal(rho)) > tol)[0]
    return int(occupied[-1]) + 1 if occupied.size else 1


def _check_grid(state, grid: PhaseSpaceGrid) -> None:
    mean, _ = mean_and_variance(state)
    need = mean + 4 * math.sqrt(mean + 1)
    if need > grid.radius**2:
        raise GridTooSmall(f"state needs radius^2 >= {need:.2f}, grid has {grid.radius**2:.2f}")


def wigner(state, grid: PhaseSpaceGrid) -> PhaseSpaceField:
    """Wigner function from the generalized-Laguerre closed form.

    For ``m = n + k``:
    ``W_{mn} = (-1)^n sqrt(n!/m!) A^k L_n^k(|A|^2) exp(-|A|^2/2) / pi`` with
    ``A = sqrt(2)(x - i p)``; prefactors are combined in log space.
    """
    _check_grid(state, grid)
    rho = _density(state)
    dim = _effective_dim(rho)
    xs, ps = grid.mesh()
    b = 2.0 * (xs * xs + ps * ps).ravel()
    theta = np.arctan2(-ps, xs).ravel()
    with np.errstate(divide="ignore"):
        log_abs_a = 0.5 * np.log(b)
    total = np.zeros(b.shape)
    n_all = np.arange(dim)
    for k in range(dim):
        coeff = np.diagonal(rho, offset=-k)[: dim - k]  # rho[n+k, n]
        if np.max(np.abs(coeff)) < 1e-15:
            continue
        n = n_all[: dim - k]
        lag = genlaguerre_table(dim - 1 - k, k, b)
        log_pref = 0.5 * (log_factorial(n) - log_factorial(n + k))
        with np.errstate(divide="ignore", invalid="ignore"):
            log_mag = log_pref[:, None] - 0.5 * b[None, :] + np.log(np.abs(lag))
            if k:
                log_mag = log_mag + k * log_abs_a[None, :]
        terms = np.sign(lag) * np.exp(log_mag)
        weights = coeff * np.where(n % 2 == 0, 1.0, -1.0)
        s = weights @ terms
        if k == 0:
            total += s.real
        else:
            total += 2.0 * (s * np.exp(1j * k * theta)).real
    return PhaseSpaceField((total / math.pi).reshape(xs.shape), grid, WIGNER_CONVENTION)


def husimi(state, grid: PhaseSpaceGrid) -> PhaseSpaceField:
    """Husimi ``Q(alpha) = <alpha|rho|alpha> / pi``."""
    _check_grid(state, grid)
    rho = _density(state)
    dim = _effective_dim(rho)
    xs, ps = grid.mesh()
    alpha = ((xs + 1j * ps) / math.sqrt(2)).ravel()
    r2 = np.abs(alpha) ** 2
    n = np.arange(dim)
    with np.errstate(divide="ignore"):
        log_r = np.log(np.abs(alpha))
    log_mag = n[:, None] * np.where(r2 > 0, log_r, 0.0)[None, :] - 0.5 * log_factorial(n)[:, None] - 0.5 * r2
    coh = np.exp(log_mag + 1j * n[:, None] * np.angle(alpha)[None, :])
    coh[1:, r2 == 0] = 0.0
    if isinstance(state, PureState):
        amp = state.amplitudes[:dim] @ coh.conj()
        q = np.abs(amp) ** 2
    else:
        q = np.einsum("np,nm,mp->p", coh.conj(), rho[:dim, :dim], coh).real
    return PhaseSpaceField((q / math.pi).reshape(xs.shape), grid, HUSIMI_CONVENTION)


def negativity_volume(field: PhaseSpaceField) -> float:
    """Riemann sum of the negative part of the field (>= 0)."""
    return float(np.sum(np.clip(-field.values, 0.0, None)) * field.grid.cell_area)


def local_maxima(field: PhaseSpaceField, rel_threshold: float = 1e-3) -> list[tuple[float, float, float]]:
    """Interior strict local maxima above ``rel_threshold * max``, as ``(x, p, value)``."""
    v = field.values
    peak = maximum_filter(v, size=3, mode="constant", cval=-np.inf)
    is_max = (v == peak) & (v >= rel_threshold * v.max())
    is_max[[0, -1], :] = False
    is_max[:, [0, -1]] = False
    # reject plateaus: the maximum must be unique in its neighbourhood
    out = []
    for i, j in zip(*np.nonzero(is_max)):
        block = v[i - 1 : i + 2, j - 1 : j + 2]
        if np.count_nonzero(block == v[i, j]) == 1:
            out.append((float(field.grid.x[i]), float(field.grid.p[j]), float(v[i, j])))
    return out


def sign_changes_along_ray(field: PhaseSpaceField, rel_tol: float = 1e-6) -> int:
    """Sign changes of the field along ``p = 0, x >= 0``.

    Values below ``rel_tol * max|W|`` are ignored.
    """
    j = int(np.argmin(np.abs(field.grid.p)))
    mask = field.grid.x >= 0
    ray = field.values[mask, j]
    ray = ray[np.abs(ray) > rel_tol * np.max(np.abs(field.values))]
    return int(np.count_nonzero(np.diff(np.sign(ray)) != 0))
