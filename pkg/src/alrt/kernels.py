"""Select the recurrent-network kernels at import time.

The compiled ``_rnn_ext`` module is preferred. Set ``ALRT_PURE_PYTHON=1`` to
force the NumPy fallback. ``BACKEND`` names the module in use.
"""
import os

from . import _rnn_py

if os.environ.get("ALRT_PURE_PYTHON", "") == "1":
    _impl = _rnn_py
else:
    try:
        from . import _rnn_ext as _impl
    except ImportError:
        _impl = _rnn_py

BACKEND = "python" if _impl is _rnn_py else "cython"
forward = _impl.forward
backward = _impl.backward


def get_backend(name):
    """Return the kernel module called ``name`` ("python" or "cython")."""
    if name == "python":
        return _rnn_py
    if name == "cython":
        from . import _rnn_ext

        return _rnn_ext
    raise ValueError(f"unknown backend {name!r}")
