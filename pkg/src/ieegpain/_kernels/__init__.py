"""Hot-loop kernels with a compiled backend and a pure-Python fallback.

The compiled extension (``_core``) is used when it was built; otherwise, or
when ``IEEGPAIN_PURE_PYTHON=1`` is set, the functions come from
``_fallback``. ``BACKEND`` names the active implementation.
"""

import importlib
import os

from . import _fallback

_force_python = os.environ.get("IEEGPAIN_PURE_PYTHON", "") not in ("", "0")

_core = None
if not _force_python:
    try:
        _core = importlib.import_module(__name__ + "._core")
    except ImportError:  # extension not built
        _core = None

_impl = _core if _core is not None else _fallback
BACKEND = "cython" if _core is not None else "python"

sosfilt = _impl.sosfilt
grow_tree = _impl.grow_tree
apply_tree = _impl.apply_tree
smo_solve = _impl.smo_solve

__all__ = ["BACKEND", "sosfilt", "grow_tree", "apply_tree", "smo_solve"]
