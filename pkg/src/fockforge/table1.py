"""Bundled reference parameters (two- and three-step protocols)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .errors import MissingParameters
from .kerr import PulseSequence


@dataclass(frozen=True)
class TableRow:
    n: int
    m: int
    betas: tuple[float, ...]
    chis_over_pi: tuple[float, ...]
    fidelity: float

    def sequence(self) -> PulseSequence:
        return PulseSequence.for_target(self.n, self.betas, self.chis_over_pi)


@lru_cache(maxsize=None)
def _load() -> dict:
    text = resources.files("fockforge").joinpath("data/table1.json").read_text()
    return json.loads(text)


def rows(m: int) -> list[TableRow]:
    key = f"M{m}"
    doc = _load()
    if key not in doc:
        raise MissingParameters(f"no reference rows for M = {m}")
    return [
        TableRow(r["N"], m, tuple(r["beta"]), tuple(r["chi_over_pi"]), r["fidelity"])
        for r in doc[key]
    ]


def row(n: int, m: int = 3) -> TableRow:
    for r in rows(m):
        if r.n == n:
            return r
    raise MissingParameters(f"no reference row for N = {n}, M = {m}")


def sequence(n: int, m: int = 3) -> PulseSequence:
    return row(n, m).sequence()
