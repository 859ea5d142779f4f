"""Kernel dispatch: compiled extension when available, pure Python otherwise.

Set ``SKEWFSV_PURE_PYTHON=1`` to force the fallback (used by the
twin-equivalence tests and the benchmark).
"""

from __future__ import annotations

import os

if os.environ.get("SKEWFSV_PURE_PYTHON", "").strip() in ("1", "true", "yes"):
    from skewfsv import _kernels_py as _impl

    HAVE_COMPILED_KERNELS = False
else:
    try:
        from skewfsv import _kernels as _impl  # type: ignore[attr-defined]

        HAVE_COMPILED_KERNELS = True
    except ImportError:
        from skewfsv import _kernels_py as _impl

        HAVE_COMPILED_KERNELS = False

sv_loglik = _impl.sv_loglik
hpath_block_update = _impl.hpath_block_update
