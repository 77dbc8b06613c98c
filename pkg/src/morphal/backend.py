"""Kernel backend selection.

Prefers the compiled Cython kernels and falls back to the pure-Python
twins when the extension is unavailable. Set ``MORPHAL_BACKEND`` to
``cython`` or ``python`` to force one (``cython`` raises if the extension
is missing). Both backends produce bit-identical results.
"""

from __future__ import annotations

import os


def _load():
    choice = os.environ.get("MORPHAL_BACKEND", "auto").lower()
    if choice not in ("auto", "cython", "python"):
        raise ValueError(f"MORPHAL_BACKEND must be auto/cython/python, got {choice!r}")
    if choice in ("auto", "cython"):
        try:
            from morphal import _ckernels

            return _ckernels, "cython"
        except ImportError:
            if choice == "cython":
                raise
    from morphal import _pykernels

    return _pykernels, "python"


kernels, BACKEND = _load()
