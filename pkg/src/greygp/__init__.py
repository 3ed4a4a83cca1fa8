"""Exact GP regression with grey-box kernels, plus a coverage/emissions benchmark harness."""

__version__ = "0.1.0"
