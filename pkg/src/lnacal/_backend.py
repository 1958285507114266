"""Numba/NumPy backend selection for the hot training kernels.

The environment variable ``LNACAL_BACKEND`` picks the implementation:

* ``auto`` (default, or unset): numba when importable, else numpy
* ``numba``: force the JIT kernels, error if numba is missing
* ``numpy``: force the pure-numpy fallback

Both paths implement the same arithmetic in the same order; they agree to
floating-point roundoff (BLAS vs. loop summation order), not bit-exactly.
"""

import os

ENV_VAR = "LNACAL_BACKEND"

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def active_backend() -> str:
    """Resolve the backend name ("numba" or "numpy") from the environment."""
    choice = os.environ.get(ENV_VAR, "auto").strip().lower()
    if choice in ("", "auto"):
        return "numba" if HAS_NUMBA else "numpy"
    if choice == "numba":
        if not HAS_NUMBA:
            raise ImportError(
                f"{ENV_VAR}=numba requested but numba is not installed"
            )
        return "numba"
    if choice == "numpy":
        return "numpy"
    raise ValueError(
        f"unknown {ENV_VAR}={choice!r}; expected auto, numba or numpy"
    )
