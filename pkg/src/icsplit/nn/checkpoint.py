"""Versioned ``.npz`` checkpoints carrying the architecture as JSON."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from icsplit.nn.network import ArchitectureSpec, AutoencoderParams

FORMAT = "icsplit-autoencoder"
VERSION = 1


def save(params: AutoencoderParams, path) -> None:
    header = {"format": FORMAT, "version": VERSION, "seed": params.seed,
              "arch": params.arch.to_dict(), "keys": list(params.tensors)}
    arrays = {f"t{i}": v for i, v in enumerate(params.tensors.values())}
    with open(path, "wb") as f:
        np.savez(f, header=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load(path) -> AutoencoderParams:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != FORMAT:
            raise ValueError(f"{path} is not an autoencoder checkpoint")
        if header["version"] > VERSION:
            raise ValueError(f"checkpoint version {header['version']} is newer than {VERSION}")
        tensors = {k: data[f"t{i}"] for i, k in enumerate(header["keys"])}
    return AutoencoderParams(ArchitectureSpec.from_dict(header["arch"]), tensors, header["seed"])
