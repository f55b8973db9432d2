"""Picard iteration on the coefficients of linear McKean-Vlasov SDEs with Lévy jumps."""

__version__ = "0.1.0"
