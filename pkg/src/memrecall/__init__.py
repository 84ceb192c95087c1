"""Memory Recall Agent toolkit.

Subpackages: ``diffcore`` (tape autodiff), ``controller``, ``epmem``,
``auxloss``, ``learner``, ``taskforge`` (task suite) and ``harness``.
"""
__version__ = "0.1.0"
