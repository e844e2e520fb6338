"""Network description, forward pass, growth by layer insertion, and model IO.

The architecture family is a chain of square convolutions with kernel
pattern 9, 5, then zero or more 3s, then 5. The 3x3 layers are padded by one
pixel per side so every depth maps an input of size S to S - 16, which keeps
training patches shareable across growth stages.

Model files are little-endian binary with magic "CTSR" (format below); a
JSON sidecar with the same stem duplicates the layer specs and stage history
for inspection. The binary file is authoritative.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .ops import FLOAT, RngState, check_tensor4, conv2d_forward, conv2d_output_size, gaussian_init

MAGIC = b"CTSR"
FORMAT_VERSION = 1

ACT_NONE = "none"
ACT_RELU = "rectifier"
_ACT_CODES = {ACT_NONE: 0, ACT_RELU: 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}

GAUSSIAN_SIGMA = 0.001  # init std for every randomly initialized layer


class ModelFormatError(ValueError):
    """Model file is malformed: bad magic, version, size, or invariants."""


class InvalidNetworkError(ValueError):
    """Layer list violates the architecture family's invariants."""


@dataclass(frozen=True)
class LayerSpec:
    kernel_size: int
    in_channels: int
    out_filters: int
    pad: int
    activation: str

    def __post_init__(self):
        if self.kernel_size not in (3, 5, 9):
            raise InvalidNetworkError(f"kernel_size must be 3, 5 or 9, got {self.kernel_size}")
        if self.out_filters < 1 or self.in_channels < 1:
            raise InvalidNetworkError(f"channel counts must be >= 1, got {self.in_channels}->{self.out_filters}")
        if self.pad not in (0, 1) or (self.pad == 1 and self.kernel_size != 3):
            raise InvalidNetworkError(f"pad {self.pad} invalid for kernel {self.kernel_size}")
        if self.activation not in _ACT_CODES:
            raise InvalidNetworkError(f"unknown activation {self.activation!r}")

    def weight_count(self) -> int:
        return self.kernel_size**2 * self.in_channels * self.out_filters


@dataclass
class Layer:
    spec: LayerSpec
    weights: np.ndarray  # (out, in, k, k) float32
    bias: np.ndarray  # (out,) float32

    def validate(self):
        s = self.spec
        expect = (s.out_filters, s.in_channels, s.kernel_size, s.kernel_size)
        if self.weights.shape != expect:
            raise InvalidNetworkError(f"weight shape {self.weights.shape} != spec {expect}")
        if self.bias.shape != (s.out_filters,):
            raise InvalidNetworkError(f"bias shape {self.bias.shape} != ({s.out_filters},)")


@dataclass
class StageRecord:
    depth_after: int
    epochs_run: int
    final_loss: float


@dataclass
class NetworkModel:
    layers: list[Layer]
    scale: int = 2
    stage_history: list[StageRecord] = field(default_factory=list)
    format_version: int = FORMAT_VERSION

    @property
    def depth(self) -> int:
        return len(self.layers)

    def validate(self):
        if not self.layers:
            raise InvalidNetworkError("empty layer list")
        for layer in self.layers:
            layer.validate()
        specs = [l.spec for l in self.layers]
        if specs[0].in_channels != 1:
            raise InvalidNetworkError(f"first layer must take 1 channel, got {specs[0].in_channels}")
        if specs[-1].out_filters != 1:
            raise InvalidNetworkError(f"last layer must emit 1 filter, got {specs[-1].out_filters}")
        if specs[-1].activation != ACT_NONE:
            raise InvalidNetworkError("last layer must be linear")
        for a, b in zip(specs, specs[1:]):
            if a.out_filters != b.in_channels:
                raise InvalidNetworkError(
                    f"chain break: {a.out_filters} out filters feed {b.in_channels} in channels"
                )
        kernels = [s.kernel_size for s in specs]
        if kernels[0] != 9 or kernels[1] != 5 or kernels[-1] != 5 or any(k != 3 for k in kernels[2:-1]):
            raise InvalidNetworkError(f"kernel pattern must be 9-5-3...3-5, got {kernels}")
        return self

    def filter_counts(self) -> list[int]:
        return [l.spec.out_filters for l in self.layers]


def param_count(net: NetworkModel) -> int:
    """Weights-only parameter count (biases excluded)."""
    return sum(l.spec.weight_count() for l in net.layers)


def multiply_count(net: NetworkModel, in_h: int, in_w: int) -> int:
    """Analytic multiplications of one forward pass at the given input size.

    Per layer: in_channels * k^2 * out_filters * out_h * out_w.
    """
    total = 0
    h, w = in_h, in_w
    for layer in net.layers:
        s = layer.spec
        h = conv2d_output_size(h, s.kernel_size, s.pad)
        w = conv2d_output_size(w, s.kernel_size, s.pad)
        if h < 1 or w < 1:
            raise InvalidNetworkError(f"input {in_h}x{in_w} too small at a kernel-{s.kernel_size} layer")
        total += s.in_channels * s.kernel_size**2 * s.out_filters * h * w
    return total


def _family_specs(depth: int, first_filters: int, mid_filters: int) -> list[LayerSpec]:
    if depth < 3 or depth % 2 == 0:
        raise InvalidNetworkError(f"depth must be odd and >= 3, got {depth}")
    specs = [
        LayerSpec(9, 1, first_filters, 0, ACT_RELU),
        LayerSpec(5, first_filters, mid_filters, 0, ACT_RELU),
    ]
    specs += [LayerSpec(3, mid_filters, mid_filters, 1, ACT_RELU)] * (depth - 3)
    specs.append(LayerSpec(5, mid_filters, 1, 0, ACT_NONE))
    return specs


def build_network(
    depth: int,
    rng: RngState | np.random.Generator,
    scale: int = 2,
    first_filters: int = 64,
    mid_filters: int = 32,
) -> NetworkModel:
    """Full architecture at the given depth, Gaussian sigma=0.001 weights, zero biases."""
    gen = rng.generator() if isinstance(rng, RngState) else rng
    layers = []
    for spec in _family_specs(depth, first_filters, mid_filters):
        w = gaussian_init(
            (spec.out_filters, spec.in_channels, spec.kernel_size, spec.kernel_size), GAUSSIAN_SIGMA, gen
        )
        layers.append(Layer(spec, w, np.zeros(spec.out_filters, dtype=FLOAT)))
    return NetworkModel(layers, scale=scale).validate()


def build_base_network(rng: RngState | np.random.Generator, scale: int = 2) -> NetworkModel:
    """The 3-layer starting point: 64 9x9, 32 5x5, 1 5x5 filters, unpadded."""
    return build_network(3, rng, scale=scale)


def insert_layers(
    net: NetworkModel, rng: RngState | np.random.Generator, how_many: int = 2
) -> NetworkModel:
    """Grow the network by 3x3 pad-1 layers just before the last 5x5 layer.

    Pre-existing layers are carried over untouched (same arrays); new layers
    get Gaussian sigma=0.001 weights and zero biases.
    """
    gen = rng.generator() if isinstance(rng, RngState) else rng
    filters = net.layers[-1].spec.in_channels
    layers = list(net.layers)
    for _ in range(how_many):
        spec = LayerSpec(3, filters, filters, 1, ACT_RELU)
        w = gaussian_init((filters, filters, 3, 3), GAUSSIAN_SIGMA, gen)
        layers.insert(-1, Layer(spec, w, np.zeros(filters, dtype=FLOAT)))
    grown = NetworkModel(
        layers, scale=net.scale, stage_history=list(net.stage_history), format_version=net.format_version
    )
    return grown.validate()


def forward(net: NetworkModel, x: np.ndarray) -> np.ndarray:
    """Whole-network forward pass."""
    check_tensor4(x, "input")
    if x.shape[1] != 1:
        raise InvalidNetworkError(f"network takes 1 input channel, got {x.shape[1]}")
    h = x
    for index, layer in enumerate(net.layers):
        s = layer.spec
        if conv2d_output_size(h.shape[2], s.kernel_size, s.pad) < 1 or (
            conv2d_output_size(h.shape[3], s.kernel_size, s.pad) < 1
        ):
            raise InvalidNetworkError(
                f"input too small: layer {index} (kernel {s.kernel_size}) gets {h.shape[2]}x{h.shape[3]}"
            )
        h = conv2d_forward(h, layer.weights, layer.bias, s.pad)
        if s.activation == ACT_RELU:
            h = np.maximum(h, 0)
    return h


def clone(net: NetworkModel) -> NetworkModel:
    return NetworkModel(
        [Layer(l.spec, l.weights.copy(), l.bias.copy()) for l in net.layers],
        scale=net.scale,
        stage_history=list(net.stage_history),
        format_version=net.format_version,
    )


def _sidecar_path(path: str) -> str:
    stem = path[: -len(".ctsr")] if path.endswith(".ctsr") else path
    return stem + ".json"


def save_model(net: NetworkModel, path: str) -> None:
    net.validate()
    parts = [MAGIC, struct.pack("<III", FORMAT_VERSION, net.scale, net.depth)]
    for layer in net.layers:
        s = layer.spec
        parts.append(
            struct.pack(
                "<IIIII", s.kernel_size, s.in_channels, s.out_filters, s.pad, _ACT_CODES[s.activation]
            )
        )
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))
    sidecar = {
        "format_version": FORMAT_VERSION,
        "scale": net.scale,
        "layers": [
            {
                "kernel_size": l.spec.kernel_size,
                "in_channels": l.spec.in_channels,
                "out_filters": l.spec.out_filters,
                "pad": l.spec.pad,
                "activation": l.spec.activation,
            }
            for l in net.layers
        ],
        "stage_history": [
            {"depth_after": r.depth_after, "epochs_run": r.epochs_run, "final_loss": r.final_loss}
            for r in net.stage_history
        ],
    }
    with open(_sidecar_path(path), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: str) -> NetworkModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ModelFormatError(f"bad magic {blob[:4]!r}")
    off = 4
    try:
        version, scale, depth = struct.unpack_from("<III", blob, off)
    except struct.error as exc:
        raise ModelFormatError("truncated header") from exc
    off += 12
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {version}")
    layers = []
    for i in range(depth):
        try:
            k, cin, cout, pad, act = struct.unpack_from("<IIIII", blob, off)
        except struct.error as exc:
            raise ModelFormatError(f"truncated layer header at layer {i}") from exc
        off += 20
        if act not in _ACT_NAMES:
            raise ModelFormatError(f"unknown activation code {act} at layer {i}")
        n_w = k * k * cin * cout
        end = off + 4 * (n_w + cout)
        if end > len(blob):
            raise ModelFormatError(f"truncated payload at layer {i}")
        w = np.frombuffer(blob, dtype="<f4", count=n_w, offset=off).reshape(cout, cin, k, k)
        off += 4 * n_w
        b = np.frombuffer(blob, dtype="<f4", count=cout, offset=off)
        off += 4 * cout
        spec = LayerSpec(k, cin, cout, pad, _ACT_NAMES[act])
        layers.append(Layer(spec, w.astype(FLOAT), b.astype(FLOAT)))
    if off != len(blob):
        raise ModelFormatError(f"{len(blob) - off} trailing bytes after last layer")
    net = NetworkModel(layers, scale=scale, format_version=version)
    net.validate()
    try:
        with open(_sidecar_path(path)) as fh:
            meta = json.load(fh)
        net.stage_history = [
            StageRecord(r["depth_after"], r["epochs_run"], r["final_loss"])
            for r in meta.get("stage_history", [])
        ]
    except (OSError, ValueError, KeyError):
        pass  # sidecar is informational; the binary is authoritative
    return net


def with_history(net: NetworkModel, record: StageRecord) -> NetworkModel:
    net.stage_history.append(record)
    return net
