"""Deep oscillatory neural networks with complex-valued weights.

Networks of Hopf-oscillator neurons interleaved with complex dense and
convolutional stages, trained end to end by backpropagation through
time over a reverse-mode tape.  Ships with synthetic signal and video
benchmark generators and a from-scratch Butterworth band-pass oracle.
"""

__version__ = "0.1.0"

import os as _os

# Thread cap must land before numpy initializes its BLAS thread pools.
if "OSCNET_THREADS" in _os.environ:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS",
                 "VECLIB_MAXIMUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["OSCNET_THREADS"])

from .tensor import (
    ComplexTensor,
    GradCheckReport,
    Parameter,
    Tape,
    backward,
    complex_matmul,
    grad_check,
    split_activation,
)

__all__ = [
    "ComplexTensor",
    "GradCheckReport",
    "Parameter",
    "Tape",
    "backward",
    "complex_matmul",
    "grad_check",
    "split_activation",
    "__version__",
]
