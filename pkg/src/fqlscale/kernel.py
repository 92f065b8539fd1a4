"""Event-kernel backend selection.

Prefers the compiled extension (``fqlscale._core``) and falls back to the
pure-Python twin. ``FQLSCALE_KERNEL=python|compiled`` forces a backend;
forcing ``compiled`` raises if the extension is not built.
"""

from __future__ import annotations

import os

from fqlscale import _pycore

try:
    from fqlscale import _core as _compiled
except ImportError:  # extension not built; pure-Python fallback
    _compiled = None


def available_backends() -> dict:
    """Backend name -> module, for benchmarks and parity tests."""
    out = {"python": _pycore}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out


_forced = os.environ.get("FQLSCALE_KERNEL")
if _forced == "python":
    _active = _pycore
elif _forced == "compiled":
    if _compiled is None:
        raise ImportError("FQLSCALE_KERNEL=compiled but fqlscale._core is not built")
    _active = _compiled
elif _forced:
    raise ImportError(f"FQLSCALE_KERNEL must be 'python' or 'compiled', got {_forced!r}")
else:
    _active = _compiled if _compiled is not None else _pycore

BACKEND = "compiled" if _active is _compiled else "python"
EventCore = _active.EventCore
