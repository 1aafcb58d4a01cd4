"""Selects the compiled core if built, else the numpy fallback.

``SSAD_BACKEND=python`` or ``SSAD_BACKEND=compiled`` forces a choice;
the latter raises if the extension is missing.
"""

import os

_forced = os.environ.get("SSAD_BACKEND", "").strip().lower()

if _forced == "python":
    from . import _core_py as core
elif _forced == "compiled":
    from . import _core as core  # type: ignore[attr-defined]
else:
    try:
        from . import _core as core  # type: ignore[attr-defined]
    except ImportError:
        from . import _core_py as core

backend_name = core.IMPL
