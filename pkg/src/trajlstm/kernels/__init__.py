"""Kernel backend selection for the hot cell loops.

The compiled extension is preferred when it imported cleanly; otherwise
the numpy fallback is used. Set TRAJLSTM_KERNEL=py or TRAJLSTM_KERNEL=c
to force a backend (forcing "c" fails loudly if the extension is absent).
"""

import os

from . import pure

_forced = os.environ.get("TRAJLSTM_KERNEL", "").strip().lower()

if _forced == "py":
    _impl = pure
    BACKEND = "py"
elif _forced == "c":
    from . import _lstm_ext as _impl  # noqa: F401

    BACKEND = "c"
else:
    try:
        from . import _lstm_ext as _impl  # type: ignore[no-redef]

        BACKEND = "c"
    except ImportError:
        _impl = pure
        BACKEND = "py"

lstmp_forward = _impl.lstmp_forward
lstmp_backward = _impl.lstmp_backward


def backend_name() -> str:
    return BACKEND
