"""Kernel backend selection.

The compiled Cython backend is used when its extension imports; otherwise the
pure-Python reference backend takes over with identical semantics. Set
STABILSIM_BACKEND=python or =compiled to force one (forcing "compiled" on an
environment without the built extension is an error rather than a silent
fallback). use_backend() rebinds at runtime, which the benchmark and the
equivalence tests rely on.
"""

from __future__ import annotations

import os

from . import _ref

BACKENDS = ("compiled", "python")

BACKEND = "python"
lu_solve = _ref.lu_solve
stamp_nonlinear = _ref.stamp_nonlinear


def _compiled_module():
    from . import _core  # noqa: PLC0415 (deferred: extension may be absent)

    return _core


def compiled_available() -> bool:
    try:
        _compiled_module()
    except ImportError:
        return False
    return True


def use_backend(name: str) -> str:
    """Select the kernel backend by name; returns the active backend."""
    global BACKEND, lu_solve, stamp_nonlinear
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choose from {BACKENDS}")
    if name == "compiled":
        core = _compiled_module()
        lu_solve = core.lu_solve
        stamp_nonlinear = core.stamp_nonlinear
    else:
        lu_solve = _ref.lu_solve
        stamp_nonlinear = _ref.stamp_nonlinear
    BACKEND = name
    return BACKEND


def _initial_backend() -> str:
    forced = os.environ.get("STABILSIM_BACKEND", "").strip().lower()
    if forced:
        return use_backend(forced)
    try:
        return use_backend("compiled")
    except ImportError:
        return use_backend("python")


_initial_backend()
