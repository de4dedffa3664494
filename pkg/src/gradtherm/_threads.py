"""BLAS thread control for tight loops of small dense operations.

Interleaving small GEMM and TRSM calls across a multi-threaded BLAS pool
stalls badly on low-core machines; the dense time-stepping loops pin the
pool to one thread for their duration. One-shot large factorizations and
eigensolves keep the default pool.
"""

from __future__ import annotations

import contextlib

try:
    from threadpoolctl import threadpool_limits

    def single_thread_blas():
        return threadpool_limits(limits=1, user_api="blas")
except ImportError:   # pragma: no cover - threadpoolctl ships with scipy stacks
    def single_thread_blas():
        return contextlib.nullcontext()
