"""
Experiments module for QPuzzle Lab: config schema and per-kind runners.
"""
