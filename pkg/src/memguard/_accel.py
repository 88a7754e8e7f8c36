"""Backend switch for the hot kernels.

Every kernel in this package exists twice: a numba ``@njit`` loop and a plain
numpy version.  The numba path is used when numba imports and the environment
variable ``MEMGUARD_NO_NUMBA`` is unset (or ``0``).
"""
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAVE_NUMBA = False


def _env_disabled():
    return os.environ.get("MEMGUARD_NO_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    kwargs.setdefault("cache", True)
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]):
        return args[0]
    return lambda fn: fn


def pick(fast, slow, backend=None):
    """Choose the numba kernel or the numpy fallback.

    ``backend`` overrides the environment: ``"numba"``, ``"numpy"`` or None.
    """
    if backend is None:
        return fast if USE_NUMBA else slow
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return fast
    if backend == "numpy":
        return slow
    raise ValueError(f"unknown backend {backend!r}")
