"""
Utility functions for the Rellich verification lab
"""
