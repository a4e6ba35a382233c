"""
QPuzzle Lab - desk-scale verification of one-way puzzle reductions.
"""

__version__ = "0.1.0"
