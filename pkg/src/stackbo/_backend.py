"""Select the MLP kernel backend at import time.

The compiled extension is preferred; set ``STACKBO_BACKEND=python`` to force
the numpy fallback.
"""

import os

from stackbo import _kernels_py

python_kernels = _kernels_py

try:
    from stackbo import _kernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

if compiled_kernels is not None and os.environ.get("STACKBO_BACKEND", "").lower() != "python":
    kernels = compiled_kernels
    BACKEND = "cython"
else:
    kernels = _kernels_py
    BACKEND = "python"

mlp_forward = kernels.mlp_forward
mlp_backward = kernels.mlp_backward
