"""The unfolded DeepRec network.

Layer k maps the current estimate ``x`` to

    z = W1 (Omega~ tau) - W2 (Omega~ H x) + b1
    p = eta(z)
    t = H^T Omega~ p
    x' = ReLU(W3 [x; t] + b2)

starting from ``x = 0``. ``Omega~`` is the per-instance diagonal
``r_i / sigma_i``; it is applied as a vector scaling, never as a matrix.
With ``W1 = W2 = I``, ``W3 = [I | -delta I]`` and zero biases a layer is one
ReLU-clipped gradient ascent step of size ``delta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import ConfigError, DimensionError, NumericError, WeightFormatError, WeightParseError
from .likelihood import eta
from .model import InstanceBatch, ProblemDims, ProblemInstance

PARAM_NAMES = ("w1", "w2", "w3", "b1", "b2")
_FILE_TAG = "DEEPREC-NET v1"
_BLOCK_TAGS = {"w1": "W1", "w2": "W2", "w3": "W3", "b1": "b1", "b2": "b2"}


@dataclass
class LayerParams:
    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    def shapes_for(self, dims: ProblemDims) -> dict:
        m, n = dims.m, dims.n
        return {"w1": (m, m), "w2": (m, m), "w3": (n, 2 * n), "b1": (m,), "b2": (n,)}

    def check(self, dims: ProblemDims, k: int = 0):
        for name, shape in self.shapes_for(dims).items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise DimensionError(f"layer {k}: {name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"layer {k}: {name} has non-finite entries", layer=k)

    def copy(self) -> "LayerParams":
        return LayerParams(*(getattr(self, p).copy() for p in PARAM_NAMES))

    @classmethod
    def zeros_like(cls, other: "LayerParams") -> "LayerParams":
        return cls(*(np.zeros_like(getattr(other, p)) for p in PARAM_NAMES))


@dataclass
class UnfoldedNetwork:
    dims: ProblemDims
    layers: List[LayerParams]
    delta: float = 0.01
    activation: str = field(default="relu")

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ConfigError("network needs at least one layer")
        if self.activation != "relu":
            raise ConfigError(f"unsupported activation {self.activation!r}")
        for k, layer in enumerate(self.layers, start=1):
            layer.check(self.dims, k)

    @property
    def k_layers(self) -> int:
        return len(self.layers)

    def copy(self) -> "UnfoldedNetwork":
        return UnfoldedNetwork(self.dims, [l.copy() for l in self.layers], self.delta)

    def params(self):
        """Yield ``(k, name, array)`` for every trainable array, in file order."""
        for k, layer in enumerate(self.layers, start=1):
            for name in PARAM_NAMES:
                yield k, name, getattr(layer, name)

    def __eq__(self, other):
        if not isinstance(other, UnfoldedNetwork):
            return NotImplemented
        if self.dims != other.dims or self.k_layers != other.k_layers or self.delta != other.delta:
            return False
        return all(
            np.array_equal(a, b) for (_, _, a), (_, _, b) in zip(self.params(), other.params())
        )


@dataclass
class ForwardTrace:
    """Per-layer intermediates. Arrays have a leading batch axis; index 0 for single instances."""

    z: List[np.ndarray] = field(default_factory=list)
    p: List[np.ndarray] = field(default_factory=list)
    t: List[np.ndarray] = field(default_factory=list)
    x_next: List[np.ndarray] = field(default_factory=list)
    # fixed per-instance inputs, reused by backward
    a: Optional[np.ndarray] = None
    d: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.z)

    def x_in(self, k: int) -> np.ndarray:
        """Input estimate of 0-based layer k."""
        return np.zeros_like(self.x_next[0]) if k == 0 else self.x_next[k - 1]


def init_gd_equivalent(dims: ProblemDims, k_layers: int, delta: float) -> UnfoldedNetwork:
    """Weights under which every layer is one fixed-step ascent step, clipped at zero."""
    if int(k_layers) < 1:
        raise ConfigError(f"k_layers must be >= 1, got {k_layers}")
    if not delta > 0:
        raise ConfigError(f"delta must be positive, got {delta}")
    m, n = dims.m, dims.n
    layers = []
    for _ in range(int(k_layers)):
        w3 = np.hstack([np.eye(n), -delta * np.eye(n)])
        layers.append(LayerParams(np.eye(m), np.eye(m), w3, np.zeros(m), np.zeros(n)))
    return UnfoldedNetwork(dims, layers, float(delta))


def init_random(dims: ProblemDims, k_layers: int, delta: float, seed, perturb_scale: float) -> UnfoldedNetwork:
    """GD-equivalent weights plus i.i.d. N(0, perturb_scale^2) noise on every weight matrix entry."""
    if perturb_scale < 0:
        raise ConfigError("perturb_scale must be nonnegative")
    net = init_gd_equivalent(dims, k_layers, delta)
    if perturb_scale == 0:
        return net
    rng = np.random.default_rng(seed)
    for layer in net.layers:
        for name in ("w1", "w2", "w3"):
            arr = getattr(layer, name)
            arr += perturb_scale * rng.standard_normal(arr.shape)
    return net


def _layer_step(layer: LayerParams, x, a, d, h):
    hx = d * (x @ h.T)
    z = a @ layer.w1.T - hx @ layer.w2.T + layer.b1
    p = eta(z)
    t = (d * p) @ h
    u = np.hstack([x, t]) @ layer.w3.T + layer.b2
    return z, p, t, np.maximum(u, 0.0)


def forward_batch(net: UnfoldedNetwork, h, d, tau, keep_trace: bool = False):
    """Run the network on stacked instances that share ``h``.

    ``d`` and ``tau`` have shape ``(B, m)``. Returns ``(x_hat, trace)`` with
    ``x_hat`` of shape ``(B, n)``; ``trace`` is None unless requested.
    """
    h = np.asarray(h, dtype=float)
    d = np.atleast_2d(d)
    tau = np.atleast_2d(tau)
    m, n = net.dims.m, net.dims.n
    if h.shape != (m, n) or d.shape[1] != m or tau.shape != d.shape:
        raise DimensionError(
            f"instance dims (h {h.shape}, d {d.shape}, tau {tau.shape}) do not match network ({m}, {n})"
        )
    a = d * tau
    x = np.zeros((d.shape[0], n))
    trace = ForwardTrace(a=a, d=d, h=h) if keep_trace else None
    for k, layer in enumerate(net.layers, start=1):
        with np.errstate(over="ignore", invalid="ignore"):
            z, p, t, x = _layer_step(layer, x, a, d, h)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(x))):
            raise NumericError(f"non-finite activation in layer {k}", layer=k)
        if keep_trace:
            trace.z.append(z)
            trace.p.append(p)
            trace.t.append(t)
            trace.x_next.append(x)
    return x, trace


def forward(net: UnfoldedNetwork, inst: ProblemInstance, keep_trace: bool = False):
    """Network estimate for a single instance: ``(x_hat, trace or None)``."""
    x, trace = forward_batch(net, inst.h, inst.d[None, :], inst.tau[None, :], keep_trace)
    return x[0], trace


def predict(net: UnfoldedNetwork, batch: InstanceBatch) -> np.ndarray:
    x, _ = forward_batch(net, batch.h, batch.d, batch.tau)
    return x


def recompute_layer(net: UnfoldedNetwork, trace: ForwardTrace, k: int):
    """Recompute 0-based layer k from the trace of the layer before it."""
    return _layer_step(net.layers[k], trace.x_in(k), trace.a, trace.d, trace.h)


# -- serialization ---------------------------------------------------------


def _fmt(v: float) -> str:
    # repr() is the shortest string that round-trips exactly
    return repr(float(v))


def save_network(net: UnfoldedNetwork, path) -> None:
    lines = [_FILE_TAG, f"dims {net.dims.m} {net.dims.n} {net.k_layers} {_fmt(net.delta)}"]
    for k, layer in enumerate(net.layers, start=1):
        lines.append(f"layer {k}")
        for name in PARAM_NAMES:
            arr = getattr(layer, name)
            mat = arr.reshape(1, -1) if arr.ndim == 1 else arr
            lines.append(_BLOCK_TAGS[name])
            lines.append(f"{mat.shape[0]} {mat.shape[1]}")
            lines.extend(" ".join(_fmt(v) for v in row) for row in mat)
    Path(path).write_text("\n".join(lines) + "\n")


class _Lines:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self, what: str) -> tuple:
        if self.pos >= len(self.lines):
            raise WeightParseError(f"unexpected end of file, expected {what}", self.pos + 1)
        self.pos += 1
        return self.pos, self.lines[self.pos - 1].strip()


def _parse_ints(lineno, text, count, what):
    parts = text.split()
    if len(parts) != count:
        raise WeightParseError(f"expected {what}", lineno)
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise WeightParseError(f"expected integers in {what}", lineno) from None


def load_network(path) -> UnfoldedNetwork:
    """Parse a weight file. Raises on any defect; never returns a partial network."""
    src = _Lines(Path(path).read_text())
    lineno, line = src.next("header")
    if line != _FILE_TAG:
        raise WeightParseError(f"bad header {line!r}", lineno)
    lineno, line = src.next("dims line")
    parts = line.split()
    if len(parts) != 5 or parts[0] != "dims":
        raise WeightParseError("expected 'dims <m> <n> <K> <delta>'", lineno)
    m, n, k_layers = _parse_ints(lineno, " ".join(parts[1:4]), 3, "dims")
    try:
        delta = float(parts[4])
    except ValueError:
        raise WeightParseError("bad delta", lineno) from None
    if m < 1 or n < 1 or k_layers < 1:
        raise WeightFormatError(f"invalid dims m={m} n={n} K={k_layers}")
    dims = ProblemDims(m, n)
    expected = {"w1": (m, m), "w2": (m, m), "w3": (n, 2 * n), "b1": (1, m), "b2": (1, n)}

    layers = []
    for k in range(1, k_layers + 1):
        lineno, line = src.next(f"'layer {k}'")
        if line != f"layer {k}":
            raise WeightParseError(f"expected 'layer {k}', got {line!r}", lineno)
        arrays = {}
        for name in PARAM_NAMES:
            lineno, line = src.next(f"block {_BLOCK_TAGS[name]}")
            if line != _BLOCK_TAGS[name]:
                raise WeightParseError(f"expected block {_BLOCK_TAGS[name]}, got {line!r}", lineno)
            lineno, line = src.next("shape line")
            rows, cols = _parse_ints(lineno, line, 2, "'<rows> <cols>'")
            if (rows, cols) != expected[name]:
                raise WeightFormatError(
                    f"layer {k} {_BLOCK_TAGS[name]}: shape {rows}x{cols} disagrees with header dims "
                    f"(expected {expected[name][0]}x{expected[name][1]})"
                )
            mat = np.empty((rows, cols))
            for i in range(rows):
                lineno, line = src.next(f"row {i + 1} of {_BLOCK_TAGS[name]}")
                vals = line.split()
                if len(vals) != cols:
                    raise WeightParseError(f"{len(vals)} values, shape line promises {cols}", lineno)
                try:
                    mat[i] = [float(v) for v in vals]
                except ValueError:
                    raise WeightParseError("non-numeric value", lineno) from None
            arrays[name] = mat[0] if name in ("b1", "b2") else mat
        layers.append(LayerParams(**arrays))
    while src.pos < len(src.lines):
        lineno, line = src.next("")
        if line:
            raise WeightFormatError(f"line {lineno}: trailing data after {k_layers} layers")
    if not math.isfinite(delta):
        raise WeightParseError("delta is not finite", 2)
    return UnfoldedNetwork(dims, layers, delta)
