"""Backend selection for the NB-GLM fit kernel.

The compiled extension is used when importable; otherwise the pure-numpy
implementation in glm.py takes over. Set VCTRACE_PURE_PYTHON=1 to force
the fallback (useful for benchmarking and debugging).
"""

from __future__ import annotations

import os

from vctrace.delabel import glm as _pure

if os.environ.get("VCTRACE_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from vctrace.delabel import _nbglm as _compiled
    except ImportError:
        _compiled = None

HAVE_COMPILED = _compiled is not None
BACKEND = "compiled" if HAVE_COMPILED else "pure"

nb_glm_fit_many = _compiled.nb_glm_fit_many if HAVE_COMPILED else _pure.nb_glm_fit_many

# cheap, vectorized pieces always come from the pure module
size_factors = _pure.size_factors
moment_dispersion = _pure.moment_dispersion
wald_test = _pure.wald_test
wald_test_many = _pure.wald_test_many
bh_adjust = _pure.bh_adjust
