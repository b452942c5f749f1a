"""FoSS: a dual-branch (time + frequency) trajectory predictor.

Importing this package caps BLAS thread pools from the FOSS_THREADS
environment variable (default 1) before numpy is loaded, which keeps
training and benchmark runs deterministic and reproducible.
"""
import os as _os

_threads = _os.environ.get("FOSS_THREADS", "1")
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS"):
    _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
