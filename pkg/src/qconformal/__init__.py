"""Distribution-free uncertainty sets for simulated two-qubit measurement distributions."""

__version__ = "0.1.0"
