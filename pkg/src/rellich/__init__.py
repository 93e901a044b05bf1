"""
Numerical checks of the Hardy and Rellich equalities with remainder terms
"""

__version__ = "0.1.0"
