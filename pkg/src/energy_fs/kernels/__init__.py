"""Hot numeric kernels, each with a numba loop and a pure-numpy twin.

The public function in each module dispatches on
:func:`energy_fs._accel.use_numba`.
"""
from .asof import asof_indices
from .rolling import rolling_window_stats
from .solar import solar_geometry

__all__ = ["asof_indices", "rolling_window_stats", "solar_geometry"]
