"""Zeroth-order meta-policy optimization over ergodic LQR task sets."""

try:
    from ._metalqr import *  # noqa: F401,F403  (installed wheel layout)
except ImportError:
    # Development layout: the extension lives in the CMake build directory,
    # which the caller puts on sys.path.
    from _metalqr import *  # noqa: F401,F403

__version__ = "0.1.0"
