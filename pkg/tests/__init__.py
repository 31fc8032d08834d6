"""
Tests package for the ribbon Gamma-convergence toolkit
"""
