"""
costate_fusion is a Python package for co-state based risk monitoring of
powered descents: regularized co-states, regime clustering, generator
learning and the EKF baseline they are compared against.
"""

__version__ = "1.0.26101800"
