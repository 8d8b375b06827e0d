"""
Test suite of the rerf package.
"""
