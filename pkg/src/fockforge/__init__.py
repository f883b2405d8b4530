"""Fock-state engineering with iterated Kerr phases and displacements."""

__version__ = "0.1.0"
