"""Convolutional autoencoder: architecture, parameters, forward and backward passes."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from icsplit.nn import layers
from icsplit.nn.layers import ArchitectureError

DEFAULT_L2 = 1e-6


@dataclass(frozen=True)
class ArchitectureSpec:
    """Layer stacks of an encoder/decoder pair.

    Layers are plain dicts such as ``{"kind": "conv", "filters": 8, "kernel": 3,
    "stride": 2, "padding": 1}`` so an architecture serializes to JSON unchanged.
    """

    input_shape: tuple
    latent_dim: int
    encoder: tuple
    decoder: tuple

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "latent_dim": self.latent_dim,
            "encoder": [dict(layer) for layer in self.encoder],
            "decoder": [dict(layer) for layer in self.decoder],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureSpec":
        def fix(layer):
            layer = dict(layer)
            for key in ("shape", "size"):
                if key in layer:
                    layer[key] = tuple(layer[key])
            return layer

        return cls(
            input_shape=tuple(d["input_shape"]),
            latent_dim=int(d["latent_dim"]),
            encoder=tuple(fix(layer) for layer in d["encoder"]),
            decoder=tuple(fix(layer) for layer in d["decoder"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def shapes(self) -> tuple[list, list]:
        """Input shape of every layer of the encoder and of the decoder.

        Validates the stack while walking it.
        """
        if not self.encoder or not self.decoder:
            raise ArchitectureError("encoder and decoder need at least one layer each")
        enc_shapes = []
        shape = tuple(self.input_shape)
        for layer in self.encoder:
            enc_shapes.append(shape)
            shape = layers.output_shape(layer, shape)
        if shape != (self.latent_dim,):
            raise ArchitectureError(
                f"encoder output {shape} does not match latent_dim {self.latent_dim}")
        dec_shapes = []
        for layer in self.decoder:
            dec_shapes.append(shape)
            shape = layers.output_shape(layer, shape)
        if shape != tuple(self.input_shape):
            raise ArchitectureError(
                f"decoder output {shape} does not match input {self.input_shape}")
        return enc_shapes, dec_shapes


def default_architecture(input_shape=(28, 28, 1), latent_dim: int = 64,
                         filters=(8, 16, 32)) -> ArchitectureSpec:
    """Desk-scale encoder of three stride-2 conv blocks plus a dense bottleneck.

    The decoder mirrors it with stride-2 transposed convolutions, a center
    crop when the input side is not a multiple of 8, and a sigmoid output.
    """
    h, w, c = input_shape
    encoder = []
    side_h, side_w = h, w
    for f in filters:
        encoder += [{"kind": "conv", "filters": f, "kernel": 3, "stride": 2, "padding": 1},
                    {"kind": "relu"}]
        side_h, side_w = (side_h + 1) // 2, (side_w + 1) // 2
    bottleneck = (side_h, side_w, filters[-1])
    encoder += [{"kind": "flatten"},
                {"kind": "dense", "units": latent_dim}]

    decoder = [{"kind": "dense", "units": int(np.prod(bottleneck))},
               {"kind": "relu"},
               {"kind": "reshape", "shape": bottleneck}]
    outs = list(reversed(filters[:-1])) + [c]
    for i, f in enumerate(outs):
        decoder += [{"kind": "tconv", "filters": f, "kernel": 4, "stride": 2, "padding": 1},
                    {"kind": "relu" if i < len(outs) - 1 else "sigmoid"}]
    up = side_h * 2 ** len(filters), side_w * 2 ** len(filters)
    if up != (h, w):
        decoder.append({"kind": "crop", "size": (h, w)})
    return ArchitectureSpec(tuple(input_shape), latent_dim, tuple(encoder), tuple(decoder))


@dataclass
class AutoencoderParams:
    """All trainable tensors, keyed ``"encoder.3.weight"`` and so on."""

    arch: ArchitectureSpec
    tensors: dict
    seed: int = 0

    def copy(self) -> "AutoencoderParams":
        return AutoencoderParams(self.arch, {k: v.copy() for k, v in self.tensors.items()},
                                 self.seed)

    def layer_params(self, part: str, i: int) -> dict:
        prefix = f"{part}.{i}."
        return {k[len(prefix):]: v for k, v in self.tensors.items() if k.startswith(prefix)}

    @property
    def n_params(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype


def init_params(arch: ArchitectureSpec, seed: int, dtype=np.float32) -> AutoencoderParams:
    enc_shapes, dec_shapes = arch.shapes()
    rng = np.random.default_rng(seed)
    tensors = {}
    for part, stack, shapes in (("encoder", arch.encoder, enc_shapes),
                                ("decoder", arch.decoder, dec_shapes)):
        for i, (layer, shape) in enumerate(zip(stack, shapes)):
            for name, value in layers.init_layer(layer, shape, rng, dtype).items():
                tensors[f"{part}.{i}.{name}"] = value
    return AutoencoderParams(arch, tensors, seed)


def _check_batch(x: np.ndarray, shape: tuple, what: str):
    if x.ndim != len(shape) + 1 or tuple(x.shape[1:]) != tuple(shape):
        raise ValueError(f"{what} batch has shape {x.shape}, expected (B, *{shape})")


def _run(params, part, stack, x, caches=None):
    for i, layer in enumerate(stack):
        x, cache = layers.forward(layer, params.layer_params(part, i), x)
        if caches is not None:
            caches.append(cache)
    return x


def encode(params: AutoencoderParams, batch: np.ndarray) -> np.ndarray:
    arch = params.arch
    _check_batch(batch, arch.input_shape, "image")
    return _run(params, "encoder", arch.encoder, np.asarray(batch, dtype=params.dtype))


def decode(params: AutoencoderParams, latent: np.ndarray) -> np.ndarray:
    arch = params.arch
    _check_batch(latent, (arch.latent_dim,), "latent")
    return _run(params, "decoder", arch.decoder, np.asarray(latent, dtype=params.dtype))


def reconstruct(params: AutoencoderParams, batch: np.ndarray) -> np.ndarray:
    return decode(params, encode(params, batch))


class LossSpec(Protocol):
    """Scalar objective over a batch and its latent codes and reconstructions.

    Returns ``(value, d value / d z, d value / d xhat)``.
    """

    def __call__(self, x: np.ndarray, z: np.ndarray, xhat: np.ndarray
                 ) -> tuple[float, np.ndarray | None, np.ndarray | None]: ...


def l2_penalty(params: AutoencoderParams, coef: float = DEFAULT_L2) -> float:
    """``coef * sum(w**2)`` over (transposed) convolution weights (Keras ``l2`` convention)."""
    total = 0.0
    for part, stack in (("encoder", params.arch.encoder), ("decoder", params.arch.decoder)):
        for i, layer in enumerate(stack):
            if layer["kind"] in layers.CONV_KINDS:
                w = params.tensors[f"{part}.{i}.weight"]
                total += float(np.sum(w.astype(np.float64) ** 2))
    return coef * total


def backward(params: AutoencoderParams, batch: np.ndarray, loss_spec: LossSpec | Callable,
             l2: float = DEFAULT_L2) -> tuple[float, dict]:
    """Loss value and gradient of every parameter tensor.

    The L2 term ``l2 * sum(w**2)`` over convolution weights is included, so its
    gradient contribution is ``2 * l2 * w``.
    """
    arch = params.arch
    _check_batch(batch, arch.input_shape, "image")
    x = np.asarray(batch, dtype=params.dtype)
    enc_caches, dec_caches = [], []
    z = _run(params, "encoder", arch.encoder, x, enc_caches)
    xhat = _run(params, "decoder", arch.decoder, z, dec_caches)

    value, dz, dxhat = loss_spec(x, z, xhat)
    value = float(value) + (l2_penalty(params, l2) if l2 else 0.0)
    if not np.isfinite(value):
        raise FloatingPointError(f"non-finite loss {value}")

    grads = {}
    g = np.zeros_like(xhat) if dxhat is None else dxhat.astype(params.dtype, copy=False)
    for i in reversed(range(len(arch.decoder))):
        layer = arch.decoder[i]
        g, layer_grads = layers.backward(layer, params.layer_params("decoder", i),
                                         dec_caches[i], g)
        for name, value_ in layer_grads.items():
            grads[f"decoder.{i}.{name}"] = value_
    if dz is not None:
        g = g + dz
    for i in reversed(range(len(arch.encoder))):
        layer = arch.encoder[i]
        g, layer_grads = layers.backward(layer, params.layer_params("encoder", i),
                                         enc_caches[i], g)
        for name, value_ in layer_grads.items():
            grads[f"encoder.{i}.{name}"] = value_

    if l2:
        for part, stack in (("encoder", arch.encoder), ("decoder", arch.decoder)):
            for i, layer in enumerate(stack):
                if layer["kind"] in layers.CONV_KINDS:
                    key = f"{part}.{i}.weight"
                    grads[key] = grads[key] + (2 * l2) * params.tensors[key]
    # keep the parameter ordering
    return value, {k: grads[k] for k in params.tensors}
