"""Backend selection for the hot kernels.

The compiled extension ``wgdark._kernels`` is used when it imports; otherwise,
or when ``WGDARK_PURE_PYTHON=1`` is set, the numpy fallback in
``wgdark._kernels_py`` is used.  ``BACKEND`` names the active one.
"""

import os

from . import _kernels_py as _py

if os.environ.get("WGDARK_PURE_PYTHON", "") not in ("", "0"):
    _impl = _py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _py
        BACKEND = "python"

csr_matmul = _impl.csr_matmul
reduced_rhs = _impl.reduced_rhs
reduced_rk4 = _impl.reduced_rk4

python = _py
