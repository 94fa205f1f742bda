"""Digital twin of a robotic soil-sieving workstation for nematode diagnostics."""

__version__ = "0.1.0"
