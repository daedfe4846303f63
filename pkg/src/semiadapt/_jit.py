"""Backend switch for the compiled kernels.

Set ``SEMIADAPT_BACKEND=numpy`` to bypass numba and run the vectorised
numpy implementations instead. Any other value (or unset) uses numba when it
is importable.
"""
import os
import warnings

BACKEND_ENV = "SEMIADAPT_BACKEND"

_requested = os.environ.get(BACKEND_ENV, "numba").strip().lower()

try:
    import numba as _nb
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    _nb = None
    if _requested == "numba":
        warnings.warn("numba not importable, falling back to numpy kernels")

USE_NUMBA = _nb is not None and _requested != "numpy"
HAVE_NUMBA = _nb is not None


def njit(func):
    """Compile ``func`` with numba if available, else return it unchanged.

    Compilation is attempted regardless of ``USE_NUMBA`` so the benchmark can
    compare both paths in one process; ``USE_NUMBA`` only controls which
    implementation the public dispatchers pick.
    """
    if _nb is None:
        return func
    return _nb.njit(cache=True)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
