"""Layer specs, sequential networks, parameter init.

Parameters live in an ordered ``{name: Tensor}`` dict per network; batchnorm
running statistics live in a parallel buffer dict of plain arrays. Names are
"{layer_name}.{leaf}" where the layer name defaults to "{index}.{kind}" but
can be set explicitly, which the model builders use so that layers shared
between progressive stages keep identical names.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ShapeError, SpecError, UsageError
from .tensor import Tensor

KINDS = ("dense", "conv", "conv_transpose", "batchnorm", "leaky_relu", "dropout", "reshape", "softmax")

_GEOMETRY = {
    "dense": ("units_in", "units_out"),
    "conv": ("in_channels", "out_channels", "kernel"),
    "conv_transpose": ("in_channels", "out_channels", "kernel"),
    "batchnorm": ("num_features",),
    "leaky_relu": ("alpha",),
    "dropout": ("rate",),
    "reshape": ("shape",),
    "softmax": (),
}


@dataclass
class LayerSpec:
    kind: str
    name: str = ""
    units_in: int = 0
    units_out: int = 0
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    pad: int = 0
    num_features: int = 0
    momentum: float = 0.1
    eps: float = 1e-5
    alpha: float = 0.0
    rate: float = 0.0
    shape: tuple = ()

    def validate(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown layer kind {self.kind!r}")
        for f_name in _GEOMETRY[self.kind]:
            v = getattr(self, f_name)
            if f_name == "shape":
                if not v:
                    raise SpecError(f"{self.kind} layer {self.name!r} needs a target shape")
            elif f_name == "alpha":
                if not 0.0 <= v < 1.0:
                    raise SpecError(f"leaky_relu alpha must be in [0,1), got {v}")
            elif f_name == "rate":
                if not 0.0 <= v < 1.0:
                    raise SpecError(f"dropout rate must be in [0,1), got {v}")
            elif v <= 0:
                raise SpecError(f"{self.kind} layer {self.name!r} needs positive {f_name}")


def he_uniform(rng, shape, fan_in, dtype=np.float32):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Network:
    """Ordered layer stack with named parameters and per-layer trainability."""

    def __init__(self, specs, params, buffers, rng):
        self.specs = list(specs)
        self.params = params
        self.buffers = buffers
        self.trainable = {s.name: True for s in self.specs}
        self.mode = "train"
        self.rng = rng

    def set_mode(self, mode):
        if mode not in ("train", "infer"):
            raise UsageError(f"mode must be 'train' or 'infer', got {mode!r}")
        self.mode = mode

    def set_trainable(self, flag, layer_name=None):
        if layer_name is None:
            for k in self.trainable:
                self.trainable[k] = flag
        elif layer_name in self.trainable:
            self.trainable[layer_name] = flag
        else:
            raise UsageError(f"no layer named {layer_name!r}")

    def layer_params(self, layer_name):
        prefix = layer_name + "."
        return {k: v for k, v in self.params.items() if k.startswith(prefix)}

    def trainable_params(self):
        out = {}
        for spec in self.specs:
            if self.trainable[spec.name]:
                out.update(self.layer_params(spec.name))
        return out

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def forward(self, x):
        for spec in self.specs:
            try:
                x = self._apply(spec, x)
            except ShapeError as e:
                raise ShapeError(f"layer {spec.name!r}: {e}") from None
        return x

    def _apply(self, spec, x):
        name = spec.name
        if spec.kind == "dense":
            if x.data.ndim != 2 or x.data.shape[1] != spec.units_in:
                raise ShapeError(f"expected [N,{spec.units_in}] input, got {x.data.shape}")
            y = ops.matmul(x, self.params[name + ".weight"])
            return ops.add(y, self.params[name + ".bias"])
        if spec.kind == "conv":
            return ops.conv2d(x, self.params[name + ".weight"], self.params[name + ".bias"], spec.stride, spec.pad)
        if spec.kind == "conv_transpose":
            return ops.conv_transpose2d(x, self.params[name + ".weight"], self.params[name + ".bias"], spec.stride, spec.pad)
        if spec.kind == "batchnorm":
            return ops.batchnorm(
                x,
                self.params[name + ".gamma"],
                self.params[name + ".beta"],
                self.buffers[name + ".running_mean"],
                self.buffers[name + ".running_var"],
                spec.momentum,
                spec.eps,
                self.mode,
                update_stats=(self.mode == "train" and self.trainable[name]),
            )
        if spec.kind == "leaky_relu":
            return ops.leaky_relu(x, spec.alpha)
        if spec.kind == "dropout":
            return ops.dropout(x, spec.rate, self.mode, self.rng)
        if spec.kind == "reshape":
            n = x.data.shape[0]
            if spec.shape == (-1,):
                return ops.reshape(x, (n, int(np.prod(x.data.shape[1:]))))
            return ops.reshape(x, (n,) + tuple(spec.shape))
        if spec.kind == "softmax":
            return ops.softmax(x)
        raise SpecError(f"unknown layer kind {spec.kind!r}")


def _check_chain(specs):
    # best-effort static check of adjacent feature counts
    width = None
    for spec in specs:
        if spec.kind in ("conv", "conv_transpose"):
            if width is not None and width != spec.in_channels:
                raise SpecError(f"layer {spec.name!r} expects {spec.in_channels} channels, previous produced {width}")
            width = spec.out_channels
        elif spec.kind == "batchnorm":
            if width is not None and width != spec.num_features:
                raise SpecError(f"batchnorm {spec.name!r} sized {spec.num_features}, previous produced {width}")
        elif spec.kind == "dense":
            if width is not None and width != spec.units_in:
                raise SpecError(f"dense {spec.name!r} expects {spec.units_in} units, previous produced {width}")
            width = spec.units_out
        elif spec.kind == "reshape":
            width = spec.shape[0] if spec.shape != (-1,) else None


def init_network(specs, seed):
    """Build a Network: He-uniform conv/dense weights, zero biases,
    batchnorm gamma=1/beta=0, deterministic under ``seed``."""
    specs = [LayerSpec(**s) if isinstance(s, dict) else s for s in specs]
    for i, spec in enumerate(specs):
        if not spec.name:
            spec.name = f"{i}.{spec.kind}"
        spec.validate()
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise SpecError(f"duplicate layer names in spec list: {names}")
    _check_chain(specs)

    ss = np.random.SeedSequence(seed)
    init_rng = np.random.default_rng(ss.spawn(1)[0])
    dropout_rng = np.random.default_rng(ss.spawn(1)[0])

    params = {}
    buffers = {}
    for spec in specs:
        name = spec.name
        if spec.kind == "dense":
            w = he_uniform(init_rng, (spec.units_in, spec.units_out), fan_in=spec.units_in)
            params[name + ".weight"] = Tensor(w, requires_grad=True)
            params[name + ".bias"] = Tensor(np.zeros(spec.units_out, dtype=np.float32), requires_grad=True)
        elif spec.kind == "conv":
            k = spec.kernel
            fan_in = spec.in_channels * k * k
            w = he_uniform(init_rng, (spec.out_channels, spec.in_channels, k, k), fan_in)
            params[name + ".weight"] = Tensor(w, requires_grad=True)
            params[name + ".bias"] = Tensor(np.zeros(spec.out_channels, dtype=np.float32), requires_grad=True)
        elif spec.kind == "conv_transpose":
            k = spec.kernel
            fan_in = spec.in_channels * k * k
            w = he_uniform(init_rng, (spec.in_channels, spec.out_channels, k, k), fan_in)
            params[name + ".weight"] = Tensor(w, requires_grad=True)
            params[name + ".bias"] = Tensor(np.zeros(spec.out_channels, dtype=np.float32), requires_grad=True)
        elif spec.kind == "batchnorm":
            c = spec.num_features
            params[name + ".gamma"] = Tensor(np.ones(c, dtype=np.float32), requires_grad=True)
            params[name + ".beta"] = Tensor(np.zeros(c, dtype=np.float32), requires_grad=True)
            buffers[name + ".running_mean"] = np.zeros(c, dtype=np.float32)
            buffers[name + ".running_var"] = np.ones(c, dtype=np.float32)
    return Network(specs, params, buffers, dropout_rng)
