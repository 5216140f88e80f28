"""Ray-casting backend selection.

Prefers the compiled Cython core when it is built; otherwise falls back to
the NumPy implementation.  Both expose the same ``cast_rays`` signature and
run the same algorithm, so results agree to float tolerance.  Set
``TRSIM_FORCE_NUMPY=1`` to force the fallback (used by the benchmark).
"""

import os

from . import raycast_np

if os.environ.get("TRSIM_FORCE_NUMPY"):
    cast_rays = raycast_np.cast_rays
    BACKEND = "numpy"
else:
    try:
        from . import _raycast_cy

        cast_rays = _raycast_cy.cast_rays
        BACKEND = "cython"
    except ImportError:
        cast_rays = raycast_np.cast_rays
        BACKEND = "numpy"

__all__ = ["cast_rays", "BACKEND", "raycast_np"]
