"""
Delta stability test suite
"""
