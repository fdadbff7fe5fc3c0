"""Kernel dispatch.

The jitted kernels are used when numba imports and ``SUBPERC_DISABLE_NUMBA``
is unset or ``0``; otherwise the numpy/Python reference versions.  The flag is
read once, at import.
"""

import os

_disabled = os.environ.get("SUBPERC_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

if _disabled:
    from subperc import _kernels_numpy as _impl

    BACKEND = "numpy"
else:
    try:
        from subperc import _kernels_numba as _impl

        BACKEND = "numba"
    except ImportError:
        from subperc import _kernels_numpy as _impl

        BACKEND = "numpy"

mix64 = _impl.mix64
to_unit = _impl.to_unit
edge_keys = _impl.edge_keys
edge_uniforms = _impl.edge_uniforms
components = _impl.components
invade = _impl.invade
walk = _impl.walk
sweep_counts = _impl.sweep_counts
free_invade = _impl.free_invade
free_walk = _impl.free_walk
invade_batch = _impl.invade_batch
free_invade_batch = _impl.free_invade_batch
connect_batch = _impl.connect_batch

__all__ = [
    "BACKEND",
    "components",
    "connect_batch",
    "edge_keys",
    "edge_uniforms",
    "free_invade",
    "free_invade_batch",
    "free_walk",
    "invade",
    "invade_batch",
    "mix64",
    "sweep_counts",
    "to_unit",
    "walk",
]
