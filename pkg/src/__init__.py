"""Delta stability - delta-complete stability analysis of nonlinear continuous and hybrid systems"""

__version__ = "1.0.0"
