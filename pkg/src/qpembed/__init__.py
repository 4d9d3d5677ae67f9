"""qpembed: embedding quasi-periodic SL(2,R) cocycles into quasi-periodic linear flows."""

__version__ = "0.1.0"
