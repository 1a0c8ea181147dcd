"""Plain-text formats: key-value configs, run-length voxel masks, tensor fields, kernels, vectors.

Domains, tensor fields, kernels and vectors are JSON documents.  Occupancy is
stored as alternating run lengths starting with empty voxels, in x-fastest
order.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import DataError
from .derham import VoxelDomain, fixture


def parse_key_values(text: str) -> dict:
    """Parse ``key = value`` lines; values are JSON when possible, else bare strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise DataError(f"line {lineno}: empty key")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def rle_encode(mask) -> list:
    flat = np.asarray(mask, dtype=bool).ravel(order="F")
    runs = []
    current = False
    count = 0
    for v in flat:
        if v == current:
            count += 1
        else:
            runs.append(count)
            current = not current
            count = 1
    runs.append(count)
    return runs


def rle_decode(runs, shape) -> np.ndarray:
    total = int(np.prod(shape))
    if sum(runs) != total or any(r < 0 for r in runs):
        raise DataError("run lengths do not match the voxel count")
    vals = np.zeros(len(runs), dtype=bool)
    vals[1::2] = True
    flat = np.repeat(vals, runs)
    return flat.reshape(shape, order="F")


def domain_to_dict(domain: VoxelDomain) -> dict:
    return {"shape": list(domain.shape), "h": domain.h, "rle": rle_encode(domain.mask)}


def domain_from_dict(doc: dict) -> VoxelDomain:
    try:
        shape = tuple(int(s) for s in doc["shape"])
        runs = [int(r) for r in doc["rle"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed domain document: {exc}") from exc
    if len(shape) != 3:
        raise DataError("shape must have three entries")
    return VoxelDomain(rle_decode(runs, shape), doc.get("h"))


def load_domain(spec: str) -> VoxelDomain:
    """A fixture name or a path to a JSON domain document."""
    if spec.endswith(".json"):
        with open(spec, encoding="utf-8") as fh:
            return domain_from_dict(json.load(fh))
    return fixture(spec)


def tensor_field_from_dict(doc: dict, shape) -> np.ndarray:
    """Per-voxel 9-tuples (row-major 3x3) in x-fastest order, or one constant 9-tuple."""
    vals = np.asarray(doc["tensors"], dtype=float)
    if vals.shape == (9,):
        return np.broadcast_to(vals.reshape(3, 3), tuple(shape) + (3, 3)).copy()
    n = int(np.prod(shape))
    if vals.shape != (n, 9):
        raise DataError(f"expected {n} tensors of 9 entries")
    return vals.reshape(n, 3, 3).reshape(tuple(shape)[::-1] + (3, 3)).transpose(2, 1, 0, 3, 4)


def kernel_table_from_dict(doc: dict) -> dict:
    """Kernel document: {"offsets": [[i,j,k], ...], "values": [...]}."""
    offs = doc["offsets"]
    vals = doc["values"]
    if len(offs) != len(vals):
        raise DataError("kernel offsets and values differ in length")
    return {tuple(int(c) for c in o): float(v) for o, v in zip(offs, vals)}


def vector_to_dict(vec, space: str) -> dict:
    return {"space": space, "ordering": "direction, z, y, x (x fastest)", "values": np.asarray(vec).tolist()}


def vector_from_dict(doc: dict, dim: int) -> np.ndarray:
    vals = np.asarray(doc["values"], dtype=float)
    if vals.shape != (dim,):
        raise DataError(f"vector has length {vals.size}, expected {dim}")
    return vals
