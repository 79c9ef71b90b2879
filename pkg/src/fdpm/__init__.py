"""
Free decompression of spectral densities through algebraic spectral curves.

The package is organized in layers.  ``spectra`` handles eigenvalue data,
``ensembles`` provides closed-form laws and matrix samplers, ``curvefit``
fits the algebraic relation ``P(z, m) = 0``, ``curve`` evaluates the physical
branch of a fitted relation, ``decompress`` evolves it in the decompression
ratio, and ``features`` tracks edges, cusps, atoms and moments directly.

Submodules are not imported eagerly so that ``fdpm.cli`` can configure
thread pools before numpy is loaded.
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
