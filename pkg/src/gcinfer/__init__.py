"""Secure two-party neural-network inference over garbled Boolean circuits.

The library compiles fixed-point networks into netlists optimized for the
free-XOR cost model, garbles and evaluates them under a half-gates scheme,
and runs the two-party (or outsourced three-party) protocol over any
ordered byte stream.  Offline passes shrink the circuits first: a streaming
dictionary projector reduces input dimensionality and magnitude pruning
drops connections the netlist then never materializes.
"""

__version__ = "0.1.0"

from . import activations, circuit, compiler, costmodel, fixedpt, garble
from . import gclib, ot, preprocess, session

__all__ = [
    "activations", "circuit", "compiler", "costmodel", "fixedpt",
    "garble", "gclib", "ot", "preprocess", "session", "__version__",
]
