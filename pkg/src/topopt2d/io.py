"""File formats: PGM snapshots, lossless CSV density fields, JSON reports.

PGM files are plain P2 with maxval 255 and pixel = round(255 * x_i), meant
for viewing; they quantize. The CSV form stores full-precision values
row-major and round-trips exactly.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import InputError
from .fields import DensityField, density_array


def write_pgm(path, field) -> None:
    values = density_array(field)
    if values.min() < 0.0 or values.max() > 1.0:
        raise InputError("PGM export expects densities in [0, 1]")
    pixels = np.rint(255.0 * values).astype(int)
    nely, nelx = values.shape
    lines = ["P2", f"{nelx} {nely}", "255"]
    lines += [" ".join(str(p) for p in row) for row in pixels]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    """Read a plain P2 PGM back into densities in [0, 1] (quantized)."""
    with open(path) as fh:
        tokens = []
        for line in fh:
            bare = line.split("#", 1)[0]
            tokens.extend(bare.split())
    if not tokens or tokens[0] != "P2":
        raise InputError(f"{path} is not a plain P2 PGM")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
        pixels = np.array([int(t) for t in tokens[4:]], dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise InputError(f"malformed PGM {path}: {exc}") from exc
    if pixels.size != width * height:
        raise InputError(f"PGM {path} pixel count {pixels.size} != {width}x{height}")
    return pixels.reshape(height, width) / float(maxval)


def write_density_csv(path, field) -> None:
    values = density_array(field)
    np.savetxt(path, values, fmt="%.17g", delimiter=",")


def read_density_csv(path) -> np.ndarray:
    values = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise InputError(f"density CSV {path} has non-finite entries")
    return values


def read_density_file(path) -> np.ndarray:
    """Dispatch on extension: .pgm or .csv."""
    name = str(path)
    if name.endswith(".pgm"):
        return read_pgm(path)
    if name.endswith(".csv"):
        return read_density_csv(path)
    raise InputError(f"unsupported density file {path} (expected .pgm or .csv)")


def density_from_file(path, binary: bool = False) -> DensityField:
    return DensityField(read_density_file(path), binary=binary)


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def write_loss_history(path, losses) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,mean_mse\n")
        for epoch, loss in enumerate(losses, start=1):
            fh.write(f"{epoch},{loss!r}\n")
