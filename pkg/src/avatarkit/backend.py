"""Kernel backend selection.

The compiled extension (avatarkit._kernels, Cython) is preferred; the numpy
implementation in avatarkit._pykernels is the fallback. Override with
AVATARKIT_BACKEND=python or AVATARKIT_BACKEND=native.
"""

import os

from . import _pykernels

_choice = os.environ.get("AVATARKIT_BACKEND", "").strip().lower()

if _choice == "python":
    kernels = _pykernels
elif _choice == "native":
    from . import _kernels as kernels  # raises if the extension is missing
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _pykernels

BACKEND = kernels.BACKEND_NAME


def active_backend():
    """Name of the kernel backend in use: 'native' or 'python'."""
    return BACKEND
