"""Select the compiled kernel core when available.

Set ``ULTRASUM_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

if os.environ.get("ULTRASUM_PURE_PYTHON", "") not in ("", "0"):
    from ._pycore import direct_sums, log_h_v, ti2, BACKEND
else:
    try:
        from ._ccore import direct_sums, log_h_v, ti2, BACKEND
    except ImportError:  # extension not built
        from ._pycore import direct_sums, log_h_v, ti2, BACKEND

__all__ = ["direct_sums", "log_h_v", "ti2", "BACKEND"]
