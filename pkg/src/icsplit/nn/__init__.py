"""Minimal numpy engine for convolutional autoencoders."""

from icsplit.nn.layers import ArchitectureError
from icsplit.nn.network import (
    ArchitectureSpec,
    AutoencoderParams,
    backward,
    decode,
    default_architecture,
    encode,
    init_params,
    l2_penalty,
    reconstruct,
)
from icsplit.nn.optim import AdamState, optimizer_step

__all__ = [
    "AdamState",
    "ArchitectureError",
    "ArchitectureSpec",
    "AutoencoderParams",
    "backward",
    "decode",
    "default_architecture",
    "encode",
    "init_params",
    "l2_penalty",
    "optimizer_step",
    "reconstruct",
]
