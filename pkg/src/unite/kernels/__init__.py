"""Backend dispatch for the hot numeric kernels.

Two interchangeable implementations exist: a numba @njit build and a pure
numpy fallback. Selection order:

  * ``UNITE_BACKEND=numba`` forces numba (error if it cannot be imported),
  * ``UNITE_BACKEND=numpy`` forces the fallback,
  * unset/``auto`` prefers numba and silently falls back to numpy.

``benchmarks/bench_kernels.py`` compares the two on realistic shapes.
"""

from __future__ import annotations

import os

from ..errors import ValidationError

_VALID = ("numba", "numpy", "auto")
_active_name: str | None = None
_active_mod = None
_forced: str | None = None


def _load(name: str):
    if name == "numpy":
        from . import _numpy_impl

        return _numpy_impl
    from . import _numba_impl

    return _numba_impl


def _resolve():
    global _active_name, _active_mod
    if _active_mod is not None:
        return _active_mod
    requested = _forced if _forced is not None else os.environ.get("UNITE_BACKEND", "auto")
    requested = requested.strip().lower() or "auto"
    if requested not in _VALID:
        raise ValidationError(
            f"UNITE_BACKEND must be one of {_VALID}, got {requested!r}"
        )
    if requested == "auto":
        try:
            _active_mod = _load("numba")
            _active_name = "numba"
        except ImportError:
            _active_mod = _load("numpy")
            _active_name = "numpy"
    else:
        try:
            _active_mod = _load(requested)
        except ImportError as exc:
            raise ValidationError(f"backend {requested!r} unavailable: {exc}") from exc
        _active_name = requested
    return _active_mod


def active_backend() -> str:
    """Name of the backend in use ('numba' or 'numpy')."""
    _resolve()
    return _active_name  # type: ignore[return-value]


def set_backend(name: str | None) -> None:
    """Override the environment selection (None restores env behaviour).

    Testing and benchmarking hook; callers in the pipeline never use it.
    """
    global _forced, _active_name, _active_mod
    _forced = name
    _active_name = None
    _active_mod = None


def bm25_score_all(*args):
    return _resolve().bm25_score_all(*args)


def knn_distances(*args):
    return _resolve().knn_distances(*args)


def softmax_rows(*args):
    return _resolve().softmax_rows(*args)


def eu_rows(*args):
    return _resolve().eu_rows(*args)


def entropy_rows(*args):
    return _resolve().entropy_rows(*args)
