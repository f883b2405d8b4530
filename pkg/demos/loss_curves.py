"""Fidelity of the three-step protocol as cavity loss grows.

Run: python3 demos/loss_curves.py [N ...]
"""

import sys

from fockforge import table1
from fockforge.dissipation import DissipativeConfig, loss_sweep

GAMMAS = [0.0, 1e-5, 1e-4, 1e-3]


def main(argv: list[str]) -> None:
    targets = [int(a) for a in argv] or [1, 3, 5, 10]
    print("N   " + "  ".join(f"g/K={g:<7g}" for g in GAMMAS))
    for n in targets:
        rows = loss_sweep(DissipativeConfig(table1.sequence(n)), GAMMAS, n)
        print(f"{n:<3} " + "  ".join(f"{r.fidelity:<11.4f}" for r in rows))


if __name__ == "__main__":
    main(sys.argv[1:])
