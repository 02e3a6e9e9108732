"""Kernel selection: the Cython extension when importable, else the numpy fallback.

Set ``HOMPVAR_BACKEND=python`` to force the fallback.
"""
import os

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("HOMPVAR_BACKEND", "").lower() not in ("python", "py", "fallback"):
    try:
        from . import _kernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback

ar1_filter = _impl.ar1_filter
crossing_points = _impl.crossing_points
pvar_dp = _impl.pvar_dp
delta_select = _impl.delta_select


def kernels(name=None):
    """Return the kernel namespace for ``name`` ('cython' or 'python'), default active."""
    if name is None:
        return _impl
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
