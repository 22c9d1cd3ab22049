"""Coupled forward-backward SDEs driven by Teugels martingales of a Levy process."""

__version__ = "0.1.0"
