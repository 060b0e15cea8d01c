"""Hot-kernel backend selection.

The compiled Cython extension is preferred when importable; the numpy
fallback is used otherwise. Set VOLSTREAM_KERNELS=python or =compiled to
force a backend (the latter raises if the extension is missing).
"""

from __future__ import annotations

import os

from . import _fallback

_choice = os.environ.get("VOLSTREAM_KERNELS", "auto").lower()

if _choice == "python":
    _impl = _fallback
elif _choice == "compiled":
    from . import _compiled as _impl  # type: ignore[no-redef]
else:
    try:
        from . import _compiled as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _fallback

lk_points = _impl.lk_points
fast_scores = _impl.fast_scores
splat_render = _impl.splat_render

FAST_CIRCLE = _fallback.FAST_CIRCLE
FAST_ARC_MIN = _fallback.FAST_ARC_MIN


def backend_name() -> str:
    return _impl.BACKEND


def available_backends() -> list[str]:
    names = ["python"]
    try:
        from . import _compiled  # noqa: F401
        names.append("compiled")
    except ImportError:
        pass
    return names


def get_backend(name: str):
    """Fetch a specific backend module (for the benchmark and parity tests)."""
    if name == "python":
        return _fallback
    if name == "compiled":
        from . import _compiled
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")
