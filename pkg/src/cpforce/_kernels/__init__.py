"""Backend selection for the stack kernel.

The compiled extension is optional; set CPFORCE_PURE=1 to force the numpy
fallback (used by the benchmark and the backend agreement test).
"""

import os

if os.environ.get("CPFORCE_PURE", "") == "1":
    from .pure import BACKEND, stack_solve
else:
    try:
        from ._stack import BACKEND, stack_solve
    except ImportError:
        from .pure import BACKEND, stack_solve

__all__ = ["stack_solve", "BACKEND"]
