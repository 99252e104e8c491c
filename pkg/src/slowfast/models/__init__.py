"""Concrete models: chemostat, epidemic (tabulated center manifold) and analytic toys."""
