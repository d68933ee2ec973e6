"""catamp core package.

Simulation of deterministic Schrödinger-cat amplification by repeated
one-photon shifts in a driven Jaynes-Cummings system. Absolute imports like
`from catamp.states import cat_ket` work when `catamp/src` is on PYTHONPATH.
"""

__version__ = "0.4.0"

__all__ = ["__version__"]
