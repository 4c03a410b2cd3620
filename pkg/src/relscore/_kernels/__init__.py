"""Box-arithmetic kernels: compiled Cython core with a pure-Python twin.

``load_backend`` picks the compiled module when it is importable and
the ``RELSCORE_PURE_PYTHON`` environment variable is unset; the
pure-Python module otherwise.  Both expose identical functions.
"""

from __future__ import annotations

import os


def load_backend(force_pure: bool | None = None):
    if force_pure is None:
        force_pure = os.environ.get("RELSCORE_PURE_PYTHON", "") not in ("", "0")
    if not force_pure:
        try:
            from relscore._kernels import _boxops_cy

            return _boxops_cy
        except ImportError:
            pass
    from relscore._kernels import _boxops_py

    return _boxops_py
