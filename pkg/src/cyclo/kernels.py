"""Select the compiled kernel if it is importable, else the numpy fallback.

Set ``CYCLO_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("CYCLO_PURE_PYTHON") == "1":
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        from . import _kernels_py as _impl

rref_mod_p = _impl.rref_mod_p
rank_mod_p = _impl.rank_mod_p
ratrecon_array = _impl.ratrecon_array
IMPLEMENTATION = _impl.IMPLEMENTATION

__all__ = ["rref_mod_p", "rank_mod_p", "ratrecon_array", "IMPLEMENTATION"]
