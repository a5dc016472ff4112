"""Pattern-based generalized deduplication stream compression for DLMS meter readings."""

__version__ = "0.1.0"
