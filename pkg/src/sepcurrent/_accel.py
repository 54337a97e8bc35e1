"""Backend selection for the compiled event kernels.

Set ``SEPCURRENT_BACKEND=python`` to run every kernel as plain Python over
the same numpy arrays (slow, but identical arithmetic). The default uses
numba when it can be imported.
"""

import os

BACKEND_ENV = "SEPCURRENT_BACKEND"

_requested = os.environ.get(BACKEND_ENV, "numba").strip().lower()
if _requested not in ("numba", "python"):
    raise ImportError(f"{BACKEND_ENV} must be 'numba' or 'python', got {_requested!r}")

NUMBA_AVAILABLE = False
if _requested == "numba":
    try:
        import numba

        NUMBA_AVAILABLE = True
    except ImportError:  # pragma: no cover - numba is a hard dependency in CI
        pass

BACKEND = "numba" if NUMBA_AVAILABLE else "python"


if NUMBA_AVAILABLE:

    def njit(*args, **kwargs):
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

else:

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorator(func):
            return func

        return decorator
