"""Compare the Wigner ring structure of a protocol output with an exact Fock state.

Run: python3 demos/wigner_rings.py [N]
"""

import sys

from fockforge import table1
from fockforge.fock import HilbertSpace, fock_state
from fockforge.kerr import run_protocol
from fockforge.phase_space import PhaseSpaceGrid, negativity_volume, sign_changes_along_ray, wigner


def main(n: int) -> None:
    grid = PhaseSpaceGrid.default_for(n)
    made = wigner(run_protocol(table1.sequence(n)), grid)
    exact = wigner(fock_state(n, HilbertSpace(n + 5)), grid)
    for label, w in (("protocol", made), (f"|{n}>", exact)):
        print(
            f"{label:>9}: W(0,0)={w.value_at(0, 0):+.4f}  min={w.values.min():+.4f}  "
            f"negativity={negativity_volume(w):.4f}  sign changes={sign_changes_along_ray(w)}"
        )


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
