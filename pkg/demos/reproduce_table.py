"""Recompute every stored reference row and compare with its printed fidelity.

Run: python3 demos/reproduce_table.py
"""

from fockforge import table1
from fockforge.kerr import protocol_fidelity


def main() -> None:
    print(f"{'M':>2} {'N':>3} {'printed':>8} {'computed':>9} {'diff':>8}")
    for m in (2, 3):
        for row in table1.rows(m):
            got = protocol_fidelity(row.sequence(), row.n)
            flag = "" if abs(got - row.fidelity) <= 0.01 else "  <- outside 0.01"
            print(f"{m:>2} {row.n:>3} {row.fidelity:>8.2f} {got:>9.4f} {got - row.fidelity:>+8.4f}{flag}")


if __name__ == "__main__":
    main()
