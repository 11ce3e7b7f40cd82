"""Convolutional autoencoder construction for each local dimension.

Architecture tables are stored as data; the decoder geometry (output padding
or a final crop/pad per transposed layer) is solved numerically at build time
so that the decoder reproduces the encoder's input shape exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import (
    DimensionMismatchError,
    ShapeMismatchError,
    UninitializedParametersError,
    UnsupportedDimensionError,
)
from .linalg import DensityMatrix
from .nn.tensor import Tensor

INIT_RECIPE = "kaiming_uniform_fanin_v1"
BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass(frozen=True)
class LayerConfig:
    kind: str  # Conv2D | ConvTranspose2D | BatchNorm2D | Dropout2D | LeakyReLU | GELU
    in_channels: int | None = None
    out_channels: int | None = None
    kernel: int | None = None
    stride: int | None = None
    padding: int | None = None
    output_padding: int = 0
    negative_slope: float | None = None
    dropout_rate: float | None = None
    epsilon: float | None = None
    momentum: float | None = None

    def to_dict(self):
        out = {"kind": self.kind}
        for name in (
            "in_channels",
            "out_channels",
            "kernel",
            "stride",
            "padding",
            "output_padding",
            "negative_slope",
            "dropout_rate",
            "epsilon",
            "momentum",
        ):
            value = getattr(self, name)
            if value is not None and not (name == "output_padding" and value == 0):
                out[name] = value
        return out

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class ArchitectureSpec:
    d: int
    encoder_layers: tuple
    latent_batchnorm: LayerConfig
    decoder_layers: tuple

    @property
    def side(self):
        return self.d * self.d

    def to_dict(self):
        return {
            "d": self.d,
            "encoder_layers": [l.to_dict() for l in self.encoder_layers],
            "latent_batchnorm": self.latent_batchnorm.to_dict(),
            "decoder_layers": [l.to_dict() for l in self.decoder_layers],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            d=data["d"],
            encoder_layers=tuple(LayerConfig.from_dict(l) for l in data["encoder_layers"]),
            latent_batchnorm=LayerConfig.from_dict(data["latent_batchnorm"]),
            decoder_layers=tuple(LayerConfig.from_dict(l) for l in data["decoder_layers"]),
        )


def _conv_block(cin, cout, k, s, p, act, slope, drop):
    layers = [
        LayerConfig("Conv2D", in_channels=cin, out_channels=cout, kernel=k, stride=s, padding=p),
        LayerConfig("BatchNorm2D", in_channels=cout, out_channels=cout, epsilon=BN_EPS, momentum=BN_MOMENTUM),
    ]
    if act == "leaky_relu":
        layers.append(LayerConfig("LeakyReLU", negative_slope=slope))
    else:
        layers.append(LayerConfig("GELU"))
    layers.append(LayerConfig("Dropout2D", dropout_rate=drop))
    return layers


def _deconv_block(cin, cout, k, s, p, act, slope, drop):
    layers = [
        LayerConfig("ConvTranspose2D", in_channels=cin, out_channels=cout, kernel=k, stride=s, padding=p),
        LayerConfig("BatchNorm2D", in_channels=cout, out_channels=cout, epsilon=BN_EPS, momentum=BN_MOMENTUM),
    ]
    if act == "leaky_relu":
        layers.append(LayerConfig("LeakyReLU", negative_slope=slope))
    else:
        layers.append(LayerConfig("GELU"))
    layers.append(LayerConfig("Dropout2D", dropout_rate=drop))
    return layers


def _final_deconv(cin, k, s, p):
    return [LayerConfig("ConvTranspose2D", in_channels=cin, out_channels=2, kernel=k, stride=s, padding=p)]


# (encoder conv blocks, latent channels, decoder deconv blocks, final deconv) per d.
_TABLES = {
    2: {
        "encoder": [
            (2, 200, 2, 2, 0, "leaky_relu", 0.01, 0.5),
            (200, 133, 2, 2, 0, "gelu", None, 0.5),
        ],
        "decoder": [(133, 200, 2, 2, 0, "gelu", None, 0.5)],
        "final": (200, 2, 2, 0),
    },
    3: {
        "encoder": [
            (2, 150, 3, 2, 1, "leaky_relu", 0.01, 0.2),
            (150, 100, 3, 2, 1, "gelu", None, 0.2),
            (100, 75, 3, 2, 1, "leaky_relu", 0.01, 0.2),
        ],
        "decoder": [
            (75, 100, 3, 2, 1, "gelu", None, 0.2),
            (100, 150, 3, 2, 1, "leaky_relu", 0.01, 0.2),
        ],
        "final": (150, 3, 2, 1),
    },
    4: {
        "encoder": [
            (2, 200, 4, 2, 1, "leaky_relu", 0.1, 0.01),
            (200, 100, 4, 2, 1, "gelu", None, 0.01),
            (100, 66, 4, 2, 1, "leaky_relu", 0.1, 0.01),
        ],
        "decoder": [
            (66, 100, 4, 2, 1, "gelu", None, 0.01),
            (100, 200, 4, 2, 1, "leaky_relu", 0.1, 0.01),
        ],
        "final": (200, 4, 2, 1),
    },
    5: {
        "encoder": [
            (2, 200, 5, 2, 2, "leaky_relu", 0.1, 0.01),
            (200, 100, 5, 2, 2, "gelu", None, 0.01),
            (100, 66, 5, 2, 2, "leaky_relu", 0.1, 0.01),
        ],
        "decoder": [
            (66, 100, 5, 2, 2, "gelu", None, 0.01),
            (100, 200, 5, 2, 2, "leaky_relu", 0.1, 0.01),
        ],
        "final": (200, 5, 2, 2),
    },
    6: {
        "encoder": [
            (2, 80, 12, 1, 5, "leaky_relu", 0.01, 0.2),
            (80, 40, 12, 3, 5, "gelu", None, 0.2),
            (40, 26, 12, 1, 5, "leaky_relu", 0.01, 0.2),
        ],
        "decoder": [
            (26, 40, 12, 1, 5, "gelu", None, 0.2),
            (40, 80, 12, 3, 5, "leaky_relu", 0.01, 0.2),
        ],
        "final": (80, 12, 1, 5),
    },
    7: {
        "encoder": [
            (2, 70, 15, 2, 7, "leaky_relu", 0.1, 0.1),
            (70, 35, 15, 4, 7, "gelu", None, 0.1),
            (35, 23, 15, 2, 7, "leaky_relu", 0.1, 0.1),
        ],
        "decoder": [
            (23, 35, 15, 2, 7, "gelu", None, 0.1),
            (35, 70, 15, 5, 7, "leaky_relu", 0.1, 0.1),
        ],
        "final": (70, 15, 2, 13),
    },
}


def builtin_spec(d):
    """The built-in architecture for local dimension d in {2, ..., 7}."""
    if d not in _TABLES:
        raise UnsupportedDimensionError(f"no built-in architecture for d={d}")
    table = _TABLES[d]
    encoder = []
    for block in table["encoder"]:
        encoder.extend(_conv_block(*block))
    latent_channels = table["encoder"][-1][1]
    latent = LayerConfig(
        "BatchNorm2D",
        in_channels=latent_channels,
        out_channels=latent_channels,
        epsilon=BN_EPS,
        momentum=BN_MOMENTUM,
    )
    decoder = []
    for block in table["decoder"]:
        decoder.extend(_deconv_block(*block))
    cin, k, s, p = table["final"]
    decoder.extend(_final_deconv(cin, k, s, p))
    return ArchitectureSpec(d=d, encoder_layers=tuple(encoder), latent_batchnorm=latent, decoder_layers=tuple(decoder))


def audit_channel_chain(spec):
    """Verify the layer channel chain is consistent end to end."""
    chain = 2
    for layer in spec.encoder_layers:
        if layer.kind in ("Conv2D", "ConvTranspose2D"):
            if layer.in_channels != chain:
                raise ShapeMismatchError(f"encoder chain breaks at {layer}")
            chain = layer.out_channels
        elif layer.kind == "BatchNorm2D" and layer.in_channels != chain:
            raise ShapeMismatchError(f"encoder BN channels {layer.in_channels} != {chain}")
    if spec.latent_batchnorm.in_channels != chain:
        raise ShapeMismatchError("latent BN channels do not match encoder output")
    for layer in spec.decoder_layers:
        if layer.kind in ("Conv2D", "ConvTranspose2D"):
            if layer.in_channels != chain:
                raise ShapeMismatchError(f"decoder chain breaks at {layer}")
            chain = layer.out_channels
        elif layer.kind == "BatchNorm2D" and layer.in_channels != chain:
            raise ShapeMismatchError(f"decoder BN channels {layer.in_channels} != {chain}")
    if chain != 2:
        raise ShapeMismatchError(f"decoder must end with 2 channels, got {chain}")
    return True


def resolve_decoder_geometry(spec):
    """Solve per-layer output padding (or crop/pad) so shapes mirror the encoder.

    Returns (encoder_sizes, fixes) where fixes[i] applies to the i-th
    ConvTranspose2D of the decoder: {"output_padding": int, "crop": int | None,
    "pad": int | None} with crop/pad given as the exact target size.
    """
    size = spec.side
    encoder_sizes = [size]
    for layer in spec.encoder_layers:
        if layer.kind == "Conv2D":
            size = nn.conv_output_size(size, layer.kernel, layer.stride, layer.padding)
            if size < 1:
                raise ShapeMismatchError(f"encoder collapses below 1x1 at {layer}")
            encoder_sizes.append(size)
    targets = list(reversed(encoder_sizes[:-1]))
    fixes = []
    cur = encoder_sizes[-1]
    idx = 0
    for layer in spec.decoder_layers:
        if layer.kind != "ConvTranspose2D":
            continue
        target = targets[idx]
        base = nn.conv_transpose_output_size(cur, layer.kernel, layer.stride, layer.padding, 0)
        op = target - base
        if 0 <= op < layer.stride:
            fixes.append({"output_padding": op, "crop": None, "pad": None})
        elif op < 0:
            fixes.append({"output_padding": 0, "crop": target, "pad": None})
        else:
            fixes.append({"output_padding": 0, "crop": None, "pad": target})
        cur = target
        idx += 1
    return encoder_sizes, fixes


def _kaiming_uniform(shape, fan_in, rng, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class CaeModel:
    """A built autoencoder: named parameters, BN running stats, decoder geometry."""

    def __init__(self, spec, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.params = {}
        self.bn_states = {}
        _, self.decoder_fixes = resolve_decoder_geometry(spec)
        audit_channel_chain(spec)
        self._initialized = False

    # -- construction ---------------------------------------------------------

    @classmethod
    def build(cls, spec, seed=0, dtype=np.float32):
        model = cls(spec, dtype=dtype)
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(seed)
        rng = np.random.Generator(np.random.PCG64(seed))
        for name, layer in model._iter_layers():
            model._init_layer(name, layer, rng)
        model._initialized = True
        return model

    def _iter_layers(self):
        for i, layer in enumerate(self.spec.encoder_layers):
            yield f"enc.{i}", layer
        yield "latent", self.spec.latent_batchnorm
        for i, layer in enumerate(self.spec.decoder_layers):
            yield f"dec.{i}", layer

    def _init_layer(self, name, layer, rng):
        dt = self.dtype
        if layer.kind == "Conv2D":
            shape = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
            fan_in = layer.in_channels * layer.kernel * layer.kernel
            self.params[f"{name}.weight"] = Tensor(_kaiming_uniform(shape, fan_in, rng, dt), requires_grad=True)
            self.params[f"{name}.bias"] = Tensor(np.zeros(layer.out_channels, dtype=dt), requires_grad=True)
        elif layer.kind == "ConvTranspose2D":
            shape = (layer.in_channels, layer.out_channels, layer.kernel, layer.kernel)
            fan_in = layer.out_channels * layer.kernel * layer.kernel
            self.params[f"{name}.weight"] = Tensor(_kaiming_uniform(shape, fan_in, rng, dt), requires_grad=True)
            self.params[f"{name}.bias"] = Tensor(np.zeros(layer.out_channels, dtype=dt), requires_grad=True)
        elif layer.kind == "BatchNorm2D":
            c = layer.in_channels
            self.params[f"{name}.gamma"] = Tensor(np.ones(c, dtype=dt), requires_grad=True)
            self.params[f"{name}.beta"] = Tensor(np.zeros(c, dtype=dt), requires_grad=True)
            self.bn_states[name] = nn.BatchNormState(c, dtype=dt)

    # -- parameter access -------------------------------------------------------

    def parameters(self):
        return list(self.params.values())

    def weight_parameters(self):
        """Conv and deconv weights only (targets of L1 weight regularization)."""
        return [t for name, t in self.params.items() if name.endswith(".weight")]

    def param_count(self):
        return sum(t.size for t in self.params.values())

    def set_requires_grad(self, flag):
        for t in self.params.values():
            t.requires_grad = flag

    def astype(self, dtype):
        """Copy of the model with parameters and BN stats cast to dtype."""
        out = CaeModel(self.spec, dtype=dtype)
        for name, t in self.params.items():
            out.params[name] = Tensor(t.data.astype(dtype), requires_grad=t.requires_grad)
        for name, s in self.bn_states.items():
            out.bn_states[name] = s.astype(dtype)
        out._initialized = self._initialized
        return out

    # -- forward ----------------------------------------------------------------

    def forward(self, x, training=False, rng=None):
        """Run the autoencoder; x is a Tensor or array of shape (N, 2, side, side)."""
        if not self._initialized:
            raise UninitializedParametersError("model has no parameters; use CaeModel.build or a checkpoint")
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        if x.ndim != 4 or x.shape[1] != 2 or x.shape[2] != self.spec.side or x.shape[3] != self.spec.side:
            raise ShapeMismatchError(
                f"expected batch of shape (N, 2, {self.spec.side}, {self.spec.side}), got {x.shape}"
            )
        if x.dtype != self.dtype:
            x = Tensor(x.data.astype(self.dtype), requires_grad=x.requires_grad)

        out = x
        deconv_idx = 0
        for name, layer in self._iter_layers():
            kind = layer.kind
            if kind == "Conv2D":
                out = nn.conv2d(
                    out,
                    self.params[f"{name}.weight"],
                    self.params[f"{name}.bias"],
                    stride=layer.stride,
                    padding=layer.padding,
                )
            elif kind == "ConvTranspose2D":
                fix = self.decoder_fixes[deconv_idx]
                deconv_idx += 1
                out = nn.conv_transpose2d(
                    out,
                    self.params[f"{name}.weight"],
                    self.params[f"{name}.bias"],
                    stride=layer.stride,
                    padding=layer.padding,
                    output_padding=fix["output_padding"],
                )
                if fix["crop"] is not None:
                    out = nn.center_crop2d(out, fix["crop"], fix["crop"])
                elif fix["pad"] is not None:
                    short = fix["pad"] - out.shape[2]
                    lo, hi = short // 2, short - short // 2
                    out = nn.zero_pad2d(out, (lo, hi), (lo, hi))
            elif kind == "BatchNorm2D":
                out = nn.batch_norm2d(
                    out,
                    self.params[f"{name}.gamma"],
                    self.params[f"{name}.beta"],
                    self.bn_states[name],
                    training=training,
                    momentum=layer.momentum if layer.momentum is not None else BN_MOMENTUM,
                    eps=layer.epsilon if layer.epsilon is not None else BN_EPS,
                )
            elif kind == "LeakyReLU":
                out = nn.leaky_relu(out, layer.negative_slope)
            elif kind == "GELU":
                out = nn.gelu(out)
            elif kind == "Dropout2D":
                out = nn.dropout2d(out, layer.dropout_rate, training=training, rng=rng)
            else:
                raise ShapeMismatchError(f"unknown layer kind {kind}")
        return out

    def predict(self, batch, chunk=256):
        """Eval-mode forward on a plain array, without building a graph."""
        batch = np.asarray(batch, dtype=self.dtype)
        outs = []
        with nn.no_grad():
            for start in range(0, batch.shape[0], chunk):
                outs.append(self.forward(batch[start : start + chunk], training=False).data)
        return np.concatenate(outs, axis=0)


def encode_state(rho):
    """Density matrix -> (1, 2, n, n) float64 array: channel 0 Re, channel 1 Im."""
    mat = rho.mat if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=np.complex128)
    return np.stack([mat.real, mat.imag])[np.newaxis]


def encode_batch(mats, dtype=np.float32):
    """Stack of complex matrices -> (N, 2, n, n) array in the given dtype."""
    mats = np.asarray(mats)
    return np.stack([mats.real, mats.imag], axis=1).astype(dtype)


def decode_output(t):
    """(1, 2, n, n) or (2, n, n) tensor/array -> complex matrix Re + i*Im."""
    data = t.data if isinstance(t, Tensor) else np.asarray(t)
    if data.ndim == 4:
        if data.shape[0] != 1:
            raise ShapeMismatchError("decode_output expects a single-sample batch")
        data = data[0]
    if data.ndim != 3 or data.shape[0] != 2 or data.shape[1] != data.shape[2]:
        raise ShapeMismatchError(f"expected (2, n, n) channels, got {data.shape}")
    return data[0].astype(np.float64) + 1j * data[1].astype(np.float64)
