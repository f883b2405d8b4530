"""Derivative-free search for protocol parameters.

Parameters are flattened per step as ``[beta_1, chi_1/pi, beta_2, chi_2/pi, ...]``.
Grid points are enumerated lexicographically in that order and ties keep the
first point encountered.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import BudgetExceeded, ConfigError
from .fock import HilbertSpace, auto_cutoff, coherent_amplitudes
from .kerr import PulseSequence, _displacement_entries, kerr_phases, propagate_amplitudes

MAX_GRID_DIM = 8
CACHE_QUANTUM = 1e-12


@dataclass(frozen=True)
class SearchConfig:
    """Search settings.

    ``chi_grid_points`` defaults to ``max(grid_points_per_axis, 4 N + 1)``:
    the Kerr phase on ``|N>`` winds ~2N times as ``chi/pi`` sweeps a period,
    so a fixed 21-point axis cannot resolve the basins for large N.
    """

    target_n: int
    m: int
    beta_range: tuple[float, float] = (-1.0, 2.0)
    chi_over_pi_range: tuple[float, float] = (0.0, 1.0)
    grid_points_per_axis: int = 21
    chi_grid_points: int | None = None
    refine_iterations: int = 200
    seed: int = 0
    budget_evals: int = 200_000
    beam_width: int = 20
    refine_candidates: int = 5
    alpha: complex | None = None
    optimize_chi: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.target_n < 0 or self.m < 0:
            raise ConfigError("target_n and m must be non-negative")
        for lo, hi in (self.beta_range, self.chi_over_pi_range):
            if not hi > lo:
                raise ConfigError(f"degenerate range ({lo}, {hi})")
        if self.grid_points_per_axis < 3:
            raise ConfigError("grid_points_per_axis must be >= 3")
        if self.chi_grid_points is not None and self.chi_grid_points < 3:
            raise ConfigError("chi_grid_points must be >= 3")
        if self.beam_width < 1 or self.refine_candidates < 1:
            raise ConfigError("beam_width and refine_candidates must be >= 1")

    @property
    def start_alpha(self) -> complex:
        return complex(math.sqrt(self.target_n) if self.alpha is None else self.alpha)

    def beta_grid(self) -> np.ndarray:
        lo, hi = self.beta_range
        return np.linspace(lo, hi, self.grid_points_per_axis)

    def chi_grid(self) -> np.ndarray:
        """``chi/pi`` axis over the half-open range (one Kerr period)."""
        g = self.chi_grid_points or max(self.grid_points_per_axis, 4 * self.target_n + 1)
        lo, hi = self.chi_over_pi_range
        return lo + (hi - lo) * np.arange(g) / g

    def grid_cutoff(self) -> int:
        bmax = max(abs(b) for b in self.beta_range)
        return max(auto_cutoff(abs(self.start_alpha) + self.m * bmax), self.target_n + 2)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["alpha"] = None if self.alpha is None else [self.start_alpha.real, self.start_alpha.imag]
        return doc


@dataclass
class SearchResult:
    best_params: PulseSequence
    best_fidelity: float
    evals_used: int
    trace: list = field(default_factory=list)
    config: SearchConfig | None = None
    wall_time: float = 0.0
    mode: str = ""

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "config": None if self.config is None else self.config.to_json(),
            "target_n": None if self.config is None else self.config.target_n,
            "alpha": [self.best_params.alpha.real, self.best_params.alpha.imag],
            "beta": self.best_params.betas,
            "chi_over_pi": self.best_params.chis_over_pi,
            "fidelity": self.best_fidelity,
            "evals_used": self.evals_used,
            "wall_time_s": self.wall_time,
        }

    def trace_rows(self):
        for params, fid in self.trace:
            yield list(params) + [fid]


def _vector_to_sequence(alpha: complex, v) -> PulseSequence:
    v = np.asarray(v, dtype=float)
    return PulseSequence.from_lists(alpha, v[0::2].tolist(), v[1::2].tolist())


def _sequence_to_vector(seq: PulseSequence) -> np.ndarray:
    v = np.empty(2 * seq.m)
    v[0::2] = seq.betas
    v[1::2] = seq.chis_over_pi
    return v


class Objective:
    """Memoized fidelity of a flat parameter vector, evaluated at the auto cutoff.

    Counts distinct evaluations and records every improvement.
    """

    def __init__(self, target_n: int, alpha: complex):
        self.target_n = target_n
        self.alpha = alpha
        self.evals = 0
        self.best = -math.inf
        self.trace: list = []
        self._cache: dict = {}

    def __call__(self, v) -> float:
        v = np.asarray(v, dtype=float)
        key = tuple(np.round(v / CACHE_QUANTUM).astype(np.int64).tolist())
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        betas = v[0::2]
        cutoff = max(auto_cutoff(abs(self.alpha) + float(np.abs(betas).sum())), self.target_n + 2)
        psi = propagate_amplitudes(self.alpha, betas, np.pi * v[1::2], cutoff)
        fid = float(abs(psi[self.target_n]) ** 2)
        self._cache[key] = fid
        self.evals += 1
        if fid > self.best:
            self.best = fid
            self.trace.append((v.tolist(), fid))
        return fid


def _prefix_state(alpha, prefix, cutoff):
    space = HilbertSpace(cutoff)
    psi = coherent_amplitudes(alpha, cutoff)
    for beta, chi_over_pi in prefix:
        psi = _displacement_entries(float(beta), cutoff) @ (kerr_phases(math.pi * chi_over_pi, space) * psi)
    return psi


def _last_step_block(psi, target_n, betas, chis_over_pi, cutoff, score="fidelity"):
    """Score every (beta, chi) of one step applied to ``psi``.

    Returns an array indexed ``[i_beta, i_chi]``.
    """
    n = np.arange(cutoff)
    phased = np.exp(-1j * np.pi * np.fmod(chis_over_pi, 1.0)[:, None] * (n * (n - 1))[None, :]) * psi
    if score == "fidelity":
        rows = np.array([_displacement_entries(float(b), cutoff)[target_n] for b in betas])
        return np.abs(rows @ phased.T) ** 2
    # number-squeezing surrogate: -<(n - N)^2>
    out = np.empty((len(betas), len(chis_over_pi)))
    w = (n - target_n) ** 2
    for i, b in enumerate(betas):
        probs = np.abs(phased @ _displacement_entries(float(b), cutoff).T) ** 2
        out[i] = -(probs @ w) / probs.sum(axis=1)
    return out


def _finish(objective: Objective, alpha, v, config, t0, mode, extra_evals=0) -> SearchResult:
    v = np.asarray(v, dtype=float).copy()
    lo = config.chi_over_pi_range[0]
    v[1::2] = lo + np.mod(v[1::2] - lo, 1.0)
    seq = _vector_to_sequence(alpha, v)
    fid = objective(v) if len(v) else objective(np.zeros(0))
    return SearchResult(
        seq, fid, objective.evals + extra_evals, list(objective.trace), config, time.perf_counter() - t0, mode
    )


def grid_search(config: SearchConfig) -> SearchResult:
    """Exhaustive Cartesian grid over all ``2M`` parameters.

    Raises
    ------
    BudgetExceeded
        if the grid has more points than ``config.budget_evals``
    """
    t0 = time.perf_counter()
    if 2 * config.m > MAX_GRID_DIM:
        raise ConfigError(f"exhaustive grid limited to {MAX_GRID_DIM} dimensions; use staged_search")
    betas, chis = config.beta_grid(), config.chi_grid()
    per_step = len(betas) * len(chis)
    total = per_step**config.m
    if total > config.budget_evals:
        raise BudgetExceeded(f"grid of {total} points exceeds budget {config.budget_evals}")
    alpha = config.start_alpha
    objective = Objective(config.target_n, alpha)
    if config.m == 0:
        return _finish(objective, alpha, np.zeros(0), config, t0, "grid")
    cutoff = config.grid_cutoff()
    axis = [(b, c) for b in betas for c in chis]

    def prefixes(depth):
        if depth == 0:
            yield ()
            return
        for head in prefixes(depth - 1):
            for p in axis:
                yield head + (p,)

    def best_of(prefix):
        psi = _prefix_state(alpha, prefix, cutoff)
        block = _last_step_block(psi, config.target_n, betas, chis, cutoff)
        i = int(np.argmax(block))
        return float(block.flat[i]), prefix + ((betas[i // len(chis)], chis[i % len(chis)]),)

    all_prefixes = list(prefixes(config.m - 1))
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            results = list(pool.map(best_of, all_prefixes))
    else:
        results = [best_of(p) for p in all_prefixes]
    best_val, best_point = -1.0, None
    for val, point in results:  # ordered reduction: first maximum wins
        if val > best_val:
            best_val, best_point = val, point
    v = np.array([x for step in best_point for x in step])
    return _finish(objective, alpha, v, config, t0, "grid", extra_evals=total)


def _nelder_mead(objective, x0, config, max_evals):
    dim = len(x0)
    if dim == 0 or max_evals <= 0:
        return np.asarray(x0, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if config.optimize_chi:
        step = np.where(np.arange(dim) % 2 == 0, 0.05, 0.02 / math.sqrt(config.target_n + 1))
    else:
        step = np.full(dim, 0.05)
    simplex = np.vstack([x0, x0 + np.diag(step)])
    bounds = [config.beta_range if (i % 2 == 0 or not config.optimize_chi) else (None, None) for i in range(dim)]
    res = minimize(
        lambda x: -objective(x),
        x0,
        method="Nelder-Mead",
        bounds=bounds,
        options={
            "initial_simplex": simplex,
            "xatol": 1e-5,
            "fatol": np.inf,
            "maxiter": config.refine_iterations,
            "maxfev": max_evals,
            "adaptive": dim > 2,
        },
    )
    return res.x


def _refine_vector(objective: Objective, v0, config: SearchConfig, max_evals: int) -> np.ndarray:
    """Simplex ascent from ``v0`` plus one seeded jittered restart; never regresses."""
    v0 = np.asarray(v0, dtype=float)
    rng = np.random.default_rng(config.seed)
    if config.optimize_chi:
        def wrap(x):
            return x

        def unwrap(x):
            return x
        x0 = v0
    else:
        def wrap(x):
            full = v0.copy()
            full[0::2] = x
            return full

        def unwrap(x):
            return x[0::2]
        x0 = unwrap(v0)

    def f(x):
        return objective(wrap(x))

    best_x, best_f = x0, f(x0)
    start_evals = objective.evals
    for attempt in range(2):
        remaining = max_evals - (objective.evals - start_evals)
        if remaining <= 0:
            break
        start = best_x if attempt == 0 else best_x + rng.normal(scale=1e-3, size=len(best_x))
        if attempt:
            lo, hi = config.beta_range
            idx = slice(0, None, 2) if config.optimize_chi else slice(None)
            start[idx] = np.clip(start[idx], lo, hi)
        x = _nelder_mead(f, start, config, remaining)
        fx = f(x)
        if fx > best_f:
            best_x, best_f = x, fx
    return wrap(best_x)


def refine(start: PulseSequence, config: SearchConfig) -> SearchResult:
    """Local derivative-free ascent from ``start`` (never returns a worse point)."""
    t0 = time.perf_counter()
    lo, hi = config.beta_range
    if any(not lo <= b <= hi for b in start.betas):
        raise ConfigError("start betas outside the configured range")
    objective = Objective(config.target_n, start.alpha)
    v = _refine_vector(objective, _sequence_to_vector(start), config, config.budget_evals)
    return _finish(objective, start.alpha, v, config, t0, "refine")


def staged_search(config: SearchConfig) -> SearchResult:
    """Step-by-step beam grid search followed by joint refinement.

    Step ``k`` is gridded with steps ``1..k-1`` held at each beam candidate
    and steps ``k+1..M`` left at zero. Intermediate steps are ranked by the
    number-squeezing score ``-<(n - N)^2>``; the final step by the target
    fidelity. The best ``refine_candidates`` beam members are refined jointly
    over all ``2M`` parameters.
    """
    t0 = time.perf_counter()
    if config.m < 2:
        raise ConfigError("staged_search needs M >= 2")
    betas, chis = config.beta_grid(), config.chi_grid()
    per_step = len(betas) * len(chis)
    k = min(config.beam_width, per_step)
    planned = per_step + (config.m - 1) * k * per_step
    if planned > config.budget_evals:
        raise BudgetExceeded(f"staged grid needs {planned} evaluations, budget is {config.budget_evals}")
    alpha = config.start_alpha
    cutoff = config.grid_cutoff()
    beam = [(0.0, ())]
    for stage in range(config.m):
        score = "fidelity" if stage == config.m - 1 else "squeezing"
        candidates = []
        for _, prefix in beam:
            psi = _prefix_state(alpha, prefix, cutoff)
            block = _last_step_block(psi, config.target_n, betas, chis, cutoff, score).ravel()
            order = np.argsort(-block, kind="stable")[:k]
            candidates += [
                (float(block[i]), prefix + ((betas[i // len(chis)], chis[i % len(chis)]),)) for i in order
            ]
        candidates.sort(key=lambda c: -c[0])  # stable: ties keep enumeration order
        beam = candidates[:k]

    objective = Objective(config.target_n, alpha)
    best_v, best_f = None, -1.0
    for _, point in beam[: config.refine_candidates]:
        v0 = np.array([x for step in point for x in step])
        f0 = objective(v0)
        remaining = config.budget_evals - planned - objective.evals
        v = _refine_vector(objective, v0, config, remaining) if remaining > 0 else v0
        f = objective(v)
        if f > best_f:
            best_v, best_f = v, f
        if f0 > best_f:
            best_v, best_f = v0, f0
    return _finish(objective, alpha, best_v, config, t0, "staged", extra_evals=planned)
