"""Kernel backend selection.

The compiled extension is used when it was built; otherwise, or when
``SUBGROUP_AUDIT_PURE_PYTHON=1`` is set, the numpy implementation is used.
Both expose the same functions and return identical results.
"""

import os

from . import _kernels_py

python_backend = _kernels_py
compiled_backend = None

if os.environ.get("SUBGROUP_AUDIT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend or python_backend

BACKEND = _active.BACKEND
best_ordered_cut = _active.best_ordered_cut
best_subset = _active.best_subset
quadratic_stat = _active.quadratic_stat
mc_exceed = _active.mc_exceed
block_permutations = _active.block_permutations
