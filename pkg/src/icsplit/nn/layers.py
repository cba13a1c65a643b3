"""Layer kernels for the autoencoder engine.

Every layer kind is a pair of pure functions operating on NHWC (or
``(B, D)`` for dense) arrays::

    y, cache = forward(params, x, **options)
    dx, grads = backward(params, cache, dy, **options)

``params`` is a dict of arrays (possibly empty), ``grads`` has the same keys.
Shape inference lives in :func:`output_shape`.
"""

from __future__ import annotations

import math

import numpy as np

LAYER_KINDS = ("conv", "tconv", "dense", "relu", "sigmoid", "flatten", "reshape",
               "upsample", "avgpool", "crop")

PARAM_KINDS = ("conv", "tconv", "dense")
CONV_KINDS = ("conv", "tconv")


class ArchitectureError(ValueError):
    """Raised for inconsistent layer stacks."""


def output_shape(layer: dict, in_shape: tuple) -> tuple:
    kind = layer["kind"]
    if kind == "conv":
        if len(in_shape) != 3:
            raise ArchitectureError(f"conv expects (H, W, C) input, got {in_shape}")
        h, w, _ = in_shape
        k, s, p = layer["kernel"], layer.get("stride", 1), layer.get("padding", 0)
        ho = (h + 2 * p - k) // s + 1
        wo = (w + 2 * p - k) // s + 1
        if ho < 1 or wo < 1:
            raise ArchitectureError(f"conv kernel {k} does not fit input {in_shape}")
        return (ho, wo, layer["filters"])
    if kind == "tconv":
        if len(in_shape) != 3:
            raise ArchitectureError(f"tconv expects (H, W, C) input, got {in_shape}")
        h, w, _ = in_shape
        k, s, p = layer["kernel"], layer.get("stride", 1), layer.get("padding", 0)
        ho = (h - 1) * s + k - 2 * p
        wo = (w - 1) * s + k - 2 * p
        if ho < 1 or wo < 1:
            raise ArchitectureError(f"tconv padding {p} too large for input {in_shape}")
        return (ho, wo, layer["filters"])
    if kind == "dense":
        if len(in_shape) != 1:
            raise ArchitectureError(f"dense expects a flat input, got {in_shape}")
        return (layer["units"],)
    if kind in ("relu", "sigmoid"):
        return tuple(in_shape)
    if kind == "flatten":
        return (int(np.prod(in_shape)),)
    if kind == "reshape":
        shape = tuple(layer["shape"])
        if int(np.prod(shape)) != int(np.prod(in_shape)):
            raise ArchitectureError(f"cannot reshape {in_shape} to {shape}")
        return shape
    if kind == "upsample":
        h, w, c = in_shape
        f = layer["factor"]
        return (h * f, w * f, c)
    if kind == "avgpool":
        h, w, c = in_shape
        f = layer["factor"]
        if h % f or w % f:
            raise ArchitectureError(f"avgpool factor {f} does not divide {in_shape}")
        return (h // f, w // f, c)
    if kind == "crop":
        h, w, c = in_shape
        th, tw = layer["size"]
        if th > h or tw > w:
            raise ArchitectureError(f"crop {th}x{tw} larger than input {in_shape}")
        return (th, tw, c)
    raise ArchitectureError(f"unknown layer kind {kind!r}")


def fan_in(layer: dict, in_shape: tuple) -> int:
    if layer["kind"] == "conv":
        return layer["kernel"] ** 2 * in_shape[-1]
    if layer["kind"] == "tconv":
        # inputs that reach one output pixel
        s = layer.get("stride", 1)
        return max(1, (layer["kernel"] // s) ** 2 * in_shape[-1])
    return in_shape[0]


def init_layer(layer: dict, in_shape: tuple, rng: np.random.Generator,
               dtype) -> dict:
    """He-normal weights (std = sqrt(2 / fan_in)) and zero biases."""
    kind = layer["kind"]
    if kind not in PARAM_KINDS:
        return {}
    std = math.sqrt(2.0 / fan_in(layer, in_shape))
    if kind in CONV_KINDS:
        k = layer["kernel"]
        shape = (k, k, in_shape[-1], layer["filters"])
        n_out = layer["filters"]
    else:
        shape = (in_shape[0], layer["units"])
        n_out = layer["units"]
    weight = (rng.standard_normal(shape) * std).astype(dtype)
    return {"weight": weight, "bias": np.zeros(n_out, dtype=dtype)}


# -- convolution -------------------------------------------------------------

def _conv_forward(params, x, kernel, stride=1, padding=0, **_):
    b, h, w, c = x.shape
    k, s, p = kernel, stride, padding
    ho = (h + 2 * p - k) // s + 1
    wo = (w + 2 * p - k) // s + 1
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
    cols = np.empty((b, ho, wo, k, k, c), dtype=x.dtype)
    for di in range(k):
        for dj in range(k):
            cols[:, :, :, di, dj, :] = xp[:, di:di + s * (ho - 1) + 1:s,
                                          dj:dj + s * (wo - 1) + 1:s, :]
    weight = params["weight"]
    cols2 = cols.reshape(b * ho * wo, k * k * c)
    y = cols2 @ weight.reshape(k * k * c, -1) + params["bias"]
    return y.reshape(b, ho, wo, -1), (cols2, x.shape)


def _conv_backward(params, cache, dy, kernel, stride=1, padding=0, **_):
    cols2, x_shape = cache
    b, h, w, c = x_shape
    k, s, p = kernel, stride, padding
    _, ho, wo, f = dy.shape
    weight = params["weight"]
    dy2 = dy.reshape(-1, f)
    grads = {
        "weight": (cols2.T @ dy2).reshape(weight.shape),
        "bias": dy2.sum(axis=0),
    }
    dcols = (dy2 @ weight.reshape(-1, f).T).reshape(b, ho, wo, k, k, c)
    dxp = np.zeros((b, h + 2 * p, w + 2 * p, c), dtype=dy.dtype)
    for di in range(k):
        for dj in range(k):
            dxp[:, di:di + s * (ho - 1) + 1:s,
                dj:dj + s * (wo - 1) + 1:s, :] += dcols[:, :, :, di, dj, :]
    dx = dxp[:, p:p + h, p:p + w, :] if p else dxp
    return dx, grads


# -- transposed convolution --------------------------------------------------
# Weight layout (k, k, C_in, F) like conv; each input pixel scatters a k x k
# patch into the stride-s output grid, then ``padding`` rows/cols are trimmed.

def _tconv_forward(params, x, kernel, stride=1, padding=0, **_):
    b, h, w, c = x.shape
    k, s, p = kernel, stride, padding
    weight = params["weight"]
    f = weight.shape[-1]
    wmat = weight.transpose(2, 0, 1, 3).reshape(c, k * k * f)
    x2 = x.reshape(b * h * w, c)
    cols = (x2 @ wmat).reshape(b, h, w, k, k, f)
    full = np.zeros((b, (h - 1) * s + k, (w - 1) * s + k, f), dtype=x.dtype)
    for di in range(k):
        for dj in range(k):
            full[:, di:di + s * (h - 1) + 1:s,
                 dj:dj + s * (w - 1) + 1:s, :] += cols[:, :, :, di, dj, :]
    ho, wo = full.shape[1] - 2 * p, full.shape[2] - 2 * p
    y = full[:, p:p + ho, p:p + wo, :] + params["bias"]
    return y, (x2, x.shape)


def _tconv_backward(params, cache, dy, kernel, stride=1, padding=0, **_):
    x2, x_shape = cache
    b, h, w, c = x_shape
    k, s, p = kernel, stride, padding
    weight = params["weight"]
    f = weight.shape[-1]
    dfull = np.pad(dy, ((0, 0), (p, p), (p, p), (0, 0))) if p else dy
    dcols = np.empty((b, h, w, k, k, f), dtype=dy.dtype)
    for di in range(k):
        for dj in range(k):
            dcols[:, :, :, di, dj, :] = dfull[:, di:di + s * (h - 1) + 1:s,
                                              dj:dj + s * (w - 1) + 1:s, :]
    dcols2 = dcols.reshape(b * h * w, k * k * f)
    dwmat = x2.T @ dcols2
    grads = {
        "weight": dwmat.reshape(c, k, k, f).transpose(1, 2, 0, 3),
        "bias": dy.sum(axis=(0, 1, 2)),
    }
    wmat = weight.transpose(2, 0, 1, 3).reshape(c, k * k * f)
    dx = (dcols2 @ wmat.T).reshape(x_shape)
    return dx, grads


# -- dense -------------------------------------------------------------------

def _dense_forward(params, x, **_):
    return x @ params["weight"] + params["bias"], x


def _dense_backward(params, cache, dy, **_):
    x = cache
    grads = {"weight": x.T @ dy, "bias": dy.sum(axis=0)}
    return dy @ params["weight"].T, grads


# -- activations -------------------------------------------------------------

def _relu_forward(params, x, **_):
    mask = x > 0
    return x * mask, mask


def _relu_backward(params, cache, dy, **_):
    return dy * cache, {}


def _sigmoid_forward(params, x, **_):
    # split by sign so exp never overflows
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return y, y


def _sigmoid_backward(params, cache, dy, **_):
    y = cache
    return dy * y * (1.0 - y), {}


# -- shape plumbing ----------------------------------------------------------

def _flatten_forward(params, x, **_):
    return x.reshape(x.shape[0], -1), x.shape


def _reshape_forward(params, x, shape, **_):
    return x.reshape((x.shape[0],) + tuple(shape)), x.shape


def _reshape_backward(params, cache, dy, **_):
    return dy.reshape(cache), {}


def _upsample_forward(params, x, factor, **_):
    return x.repeat(factor, axis=1).repeat(factor, axis=2), None


def _upsample_backward(params, cache, dy, factor, **_):
    b, h, w, c = dy.shape
    f = factor
    return dy.reshape(b, h // f, f, w // f, f, c).sum(axis=(2, 4)), {}


def _avgpool_forward(params, x, factor, **_):
    b, h, w, c = x.shape
    f = factor
    return x.reshape(b, h // f, f, w // f, f, c).mean(axis=(2, 4)), None


def _avgpool_backward(params, cache, dy, factor, **_):
    f = factor
    dx = dy.repeat(f, axis=1).repeat(f, axis=2) / (f * f)
    return dx, {}


def _crop_offsets(h, w, size):
    th, tw = size
    return (h - th) // 2, (w - tw) // 2


def _crop_forward(params, x, size, **_):
    _, h, w, _ = x.shape
    top, left = _crop_offsets(h, w, size)
    return x[:, top:top + size[0], left:left + size[1], :], x.shape


def _crop_backward(params, cache, dy, size, **_):
    _, h, w, _ = cache
    top, left = _crop_offsets(h, w, size)
    dx = np.zeros(cache, dtype=dy.dtype)
    dx[:, top:top + size[0], left:left + size[1], :] = dy
    return dx, {}


_FORWARD = {
    "conv": _conv_forward,
    "tconv": _tconv_forward,
    "dense": _dense_forward,
    "relu": _relu_forward,
    "sigmoid": _sigmoid_forward,
    "flatten": _flatten_forward,
    "reshape": _reshape_forward,
    "upsample": _upsample_forward,
    "avgpool": _avgpool_forward,
    "crop": _crop_forward,
}

_BACKWARD = {
    "conv": _conv_backward,
    "tconv": _tconv_backward,
    "dense": _dense_backward,
    "relu": _relu_backward,
    "sigmoid": _sigmoid_backward,
    "flatten": _reshape_backward,
    "reshape": _reshape_backward,
    "upsample": _upsample_backward,
    "avgpool": _avgpool_backward,
    "crop": _crop_backward,
}


def _options(layer):
    return {k: v for k, v in layer.items() if k != "kind"}


def forward(layer: dict, params: dict, x: np.ndarray):
    return _FORWARD[layer["kind"]](params, x, **_options(layer))


def backward(layer: dict, params: dict, cache, dy: np.ndarray):
    return _BACKWARD[layer["kind"]](params, cache, dy, **_options(layer))
