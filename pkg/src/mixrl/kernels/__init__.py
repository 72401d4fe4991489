"""Hot-kernel backend selection.

Prefers the compiled `_fastpath` extension; falls back to the NumPy
`reference` implementation if the extension was not built. Set
``MIXRL_PURE_PYTHON=1`` to force the fallback (useful for benchmarking and
for ruling the extension out when debugging).
"""

import os

from . import reference

_force_pure = os.environ.get("MIXRL_PURE_PYTHON", "").strip() not in ("", "0")

if _force_pure:
    _impl = reference
    BACKEND = "reference"
else:
    try:
        from . import _fastpath as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = reference
        BACKEND = "reference"

fiala_force = _impl.fiala_force
fiala_force_arr = _impl.fiala_force_arr
vehicle_rates = _impl.vehicle_rates
vehicle_rates_batch = _impl.vehicle_rates_batch
vehicle_step = _impl.vehicle_step
vehicle_step_batch = _impl.vehicle_step_batch

__all__ = [
    "BACKEND",
    "reference",
    "fiala_force",
    "fiala_force_arr",
    "vehicle_rates",
    "vehicle_rates_batch",
    "vehicle_step",
    "vehicle_step_batch",
]
