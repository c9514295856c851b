"""Kernel backend selection.

The compiled ``_core`` extension is used when importable; otherwise the
numpy twins in ``_core_py`` take over. Set ``DIFFDOMAIN_PURE_PYTHON=1`` to
force the fallback.
"""
from __future__ import annotations

import os

if os.environ.get("DIFFDOMAIN_PURE_PYTHON", "") not in ("", "0"):
    from . import _core_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _core_py as _impl

        BACKEND = "python"

csr_matvec = _impl.csr_matvec
pcg_csr = _impl.pcg_csr
nearest_segment = _impl.nearest_segment


def load_backend(name: str):
    """Return the kernel module for ``name`` ("compiled" or "python")."""
    if name == "python":
        from . import _core_py

        return _core_py
    if name == "compiled":
        from . import _core  # type: ignore[attr-defined]

        return _core
    raise ValueError(f"unknown kernel backend {name!r}")
