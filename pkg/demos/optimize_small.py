"""Search for two-step parameters that herald a single photon, from scratch.

Run: python3 demos/optimize_small.py
"""

from fockforge import table1
from fockforge.optimize import SearchConfig, staged_search


def main() -> None:
    for n in (1, 2, 3):
        res = staged_search(SearchConfig(n, 2, seed=0))
        ref = table1.row(n, 2).fidelity
        print(f"N={n}: found {res.best_fidelity:.4f} (stored {ref:.2f}) after {res.evals_used} evaluations")


if __name__ == "__main__":
    main()
