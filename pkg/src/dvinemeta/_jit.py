"""Numba dispatch: JIT-compiled kernels with a pure-numpy fallback.

The accelerated path is used when numba imports cleanly and the environment
variable ``DVINEMETA_NUMBA`` is not set to ``0``/``off``/``false``.  All hot
kernels in ``_kernels.py`` are written twice (scalar-loop njit and vectorised
numpy); this module decides which implementation the rest of the package sees.

``DVINEMETA_THREADS`` caps the numba thread pool when set.
"""

import os


def _env_flag(name, default=True):
    raw = os.environ.get(name)
    if raw is None:
        return default
    return raw.strip().lower() not in ("0", "off", "false", "no")


_WANT_NUMBA = _env_flag("DVINEMETA_NUMBA", default=True)

NUMBA_ENABLED = False

if _WANT_NUMBA:
    try:
        import numba as _nb

        NUMBA_ENABLED = True
        _threads = os.environ.get("DVINEMETA_THREADS")
        if _threads:
            _nb.set_num_threads(max(1, int(_threads)))
    except ImportError:
        NUMBA_ENABLED = False


if NUMBA_ENABLED:
    njit = _nb.njit
else:

    def njit(*args, **kwargs):
        """No-op decorator standing in for numba.njit."""

        def wrap(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return wrap
