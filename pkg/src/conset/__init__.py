"""Consistent-set objects, the consensus and test-and-set protocols built on them,
an exhaustive interleaving checker, and executable impossibility constructions."""

__version__ = "0.1.0"
