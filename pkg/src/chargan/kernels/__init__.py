"""Convolution kernel backends.

The compiled Cython extension is used for float32 when it is available;
the numpy implementation is the fallback and always handles float64 (the
precision the gradient-check oracle runs at). Set CHARGAN_BACKEND=numpy to
force the fallback, CHARGAN_BACKEND=native to require the extension.
"""

import importlib
import os

import numpy as np

from . import reference

_choice = os.environ.get("CHARGAN_BACKEND", "auto")
if _choice not in ("auto", "native", "numpy"):
    raise ValueError(f"CHARGAN_BACKEND must be auto|native|numpy, got {_choice!r}")

_native = None
if _choice in ("auto", "native"):
    try:
        _native = importlib.import_module("._native", __name__)
    except ImportError:
        if _choice == "native":
            raise


def backend_name():
    return "native" if _native is not None else "numpy"


def _use_native(x):
    return _native is not None and x.dtype == np.float32


def conv_forward(x, w, stride, pad):
    if _use_native(x):
        return _native.conv_forward(np.ascontiguousarray(x), w, stride, pad)
    return reference.conv_forward(x, w, stride, pad)


def conv_bwd_input(gy, w, stride, pad, h, wd):
    if _use_native(gy):
        return _native.conv_bwd_input(np.ascontiguousarray(gy), w, stride, pad, h, wd)
    return reference.conv_bwd_input(gy, w, stride, pad, h, wd)


def conv_bwd_kernel(x, gy, stride, pad, kh, kw):
    if _use_native(x):
        return _native.conv_bwd_kernel(np.ascontiguousarray(x), gy, stride, pad, kh, kw)
    return reference.conv_bwd_kernel(x, gy, stride, pad, kh, kw)


conv_out_size = reference.conv_out_size
