"""Backend selection for the O(N^2) history kernels.

The compiled extension is used for nonuniform grids when it imports; otherwise
the numpy fallback.
Set ``FRACTHERMISTOR_PURE=1`` to force the fallback (used by the benchmark and
by the backend-agreement tests).
"""

import os

from . import _kernels_py
from ._kernels_py import cell_weights

__all__ = ["BACKEND", "cell_weights", "get_backend", "l1_sums", "product_sums", "toeplitz_sums"]


def _load():
    if os.environ.get("FRACTHERMISTOR_PURE"):
        return _kernels_py, "python"
    try:
        from . import _kernels
    except ImportError:
        return _kernels_py, "python"
    return _kernels, "cython"


_impl, BACKEND = _load()


def get_backend(name=None):
    """Return the kernel module for ``name`` ('cython', 'python') or the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


def product_sums(t, v, mu, k0, c_lo, c_hi):
    return _impl.product_sums(t, v, mu, k0, c_lo, c_hi)


def l1_sums(t, q, mu):
    return _impl.l1_sums(t, q, mu)


def toeplitz_sums(tab, x, k0, c_lo, c_hi, n):
    # numpy's convolution outruns the compiled loop here; both backends share it
    return _kernels_py.toeplitz_sums(tab, x, k0, c_lo, c_hi, n)
