"""Model files: one JSON header line plus a little-endian float64 blob.

The header embeds the builder arguments and the full per-layer shape list,
so the file is self-describing; parameters follow in layer order, weight
then bias, C order. Round-trips are bitwise.
"""

from __future__ import annotations

import json

import numpy as np

from .. import __version__
from ..errors import InputError
from .network import NetworkSpec, build_network_spec, check_params

MODEL_FORMAT = "topopt2d-model"
MODEL_VERSION = 1


def save_model(path, spec: NetworkSpec, params) -> None:
    check_params(spec, params)
    header = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "toolkit_version": __version__,
        "spec": spec.to_dict(),
        "layers": [
            {
                "kind": layer.kind,
                "in_channels": layer.in_channels,
                "out_channels": layer.out_channels,
                "kernel": list(layer.kernel),
                "stride": layer.stride,
                "activation": layer.activation,
                "weight_shape": list(w.shape),
                "bias_shape": list(b.shape),
            }
            for layer, (w, b) in zip(spec.layers, params)
        ],
        "dtype": "<f8",
        "param_order": "per layer: weight (C order), then bias",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode())
        fh.write(b"\n")
        for w, b in params:
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path, expect_shape: tuple[int, int] | None = None):
    """Read (spec, params); optionally require a (height, width) geometry."""
    with open(path, "rb") as fh:
        try:
            header = json.loads(fh.readline().decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise InputError(f"{path} is not a model file: {exc}") from exc
        if header.get("format") != MODEL_FORMAT:
            raise InputError(f"{path} is not a {MODEL_FORMAT} file")
        if header.get("version") != MODEL_VERSION:
            raise InputError(f"unsupported model version {header.get('version')}")
        spec = build_network_spec(**header["spec"])
        if expect_shape is not None and (spec.height, spec.width) != tuple(expect_shape):
            raise InputError(
                f"model geometry {spec.height}x{spec.width} does not match "
                f"requested {expect_shape[0]}x{expect_shape[1]}"
            )
        declared = [(tuple(entry["weight_shape"]), tuple(entry["bias_shape"]))
                    for entry in header["layers"]]
        if declared != spec.param_shapes():
            raise InputError(f"{path}: header layer shapes disagree with the spec")
        params = []
        for w_shape, b_shape in declared:
            w_bytes = fh.read(8 * int(np.prod(w_shape)))
            b_bytes = fh.read(8 * int(np.prod(b_shape)))
            if len(w_bytes) != 8 * int(np.prod(w_shape)) or len(b_bytes) != 8 * int(np.prod(b_shape)):
                raise InputError(f"{path} truncated inside the parameter blob")
            params.append((
                np.frombuffer(w_bytes, dtype="<f8").reshape(w_shape).copy(),
                np.frombuffer(b_bytes, dtype="<f8").reshape(b_shape).copy(),
            ))
        if fh.read(1):
            raise InputError(f"{path} has trailing bytes after the parameter blob")
    return spec, params
