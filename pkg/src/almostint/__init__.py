"""Universal almost-integer spectra: finite constructions and their numerical checks."""

__version__ = "0.1.0"
