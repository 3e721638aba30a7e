"""Hot-kernel dispatch.

Uses the compiled ``_ckernels`` extension when it was built, otherwise the
pure-Python ``_purekernels``.  Set ``SCSIM_PURE_PYTHON=1`` to force the
fallback (handy for parity tests and benchmarks).
"""

import os

from scsim import _purekernels as pure

cython = None
if os.environ.get("SCSIM_PURE_PYTHON", "") in ("", "0"):
    try:
        from scsim import _ckernels as cython
    except ImportError:
        cython = None

_impl = cython if cython is not None else pure
BACKEND = "cython" if cython is not None else "python"

encode_length = _impl.encode_length
read_tlv = _impl.read_tlv
encode_sv_frame = _impl.encode_sv_frame
decode_sv_apdu = _impl.decode_sv_apdu
RmsWindow = _impl.RmsWindow
window_rms = _impl.window_rms


def available_backends():
    """Map backend name to kernel module for every backend importable here."""
    backends = {"python": pure}
    try:
        from scsim import _ckernels
    except ImportError:
        pass
    else:
        backends["cython"] = _ckernels
    return backends
