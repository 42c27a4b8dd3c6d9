"""Flux-mediated cavity electromechanics: spectra, backaction and stability."""

__version__ = "0.1.0"
