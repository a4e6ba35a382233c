"""
Services module for QPuzzle Lab.
"""
