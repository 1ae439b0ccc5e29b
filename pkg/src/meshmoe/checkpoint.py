"""Flat text checkpoints, bit-exact.

Format: header line `MME-CKPT v1`, then one line per parameter sorted by
path: `<path> <d0>x<d1>x... <base64>`, where the payload is the raw
little-endian float64 bytes.  Scalars use the shape token `scalar`.
"""

import base64

import numpy as np

from .autodiff import Tensor

HEADER = "MME-CKPT v1"


class CheckpointError(ValueError):
    pass


def _shape_token(shape) -> str:
    return "scalar" if shape == () else "x".join(str(d) for d in shape)


def _parse_shape(token: str):
    if token == "scalar":
        return ()
    try:
        return tuple(int(d) for d in token.split("x"))
    except ValueError:
        raise CheckpointError(f"bad shape token: {token!r}") from None


def save_checkpoint(params: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(HEADER + "\n")
        for name in sorted(params):
            value = params[name]
            data = value.data if isinstance(value, Tensor) else np.asarray(value)
            data = np.asarray(data, dtype="<f8")
            payload = base64.b64encode(data.tobytes(order="C")).decode("ascii")
            fh.write(f"{name} {_shape_token(data.shape)} {payload}\n")


def load_checkpoint(path) -> dict:
    """Returns {path: Tensor with requires_grad=True}."""
    params = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != HEADER:
            raise CheckpointError(f"{path}: bad header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 3:
                raise CheckpointError(f"{path}:{lineno}: expected 'path shape payload'")
            name, shape_token, payload = parts
            shape = _parse_shape(shape_token)
            try:
                raw = base64.b64decode(payload.encode("ascii"), validate=True)
            except Exception:
                raise CheckpointError(f"{path}:{lineno}: invalid base64 payload") from None
            flat = np.frombuffer(raw, dtype="<f8")
            expected = int(np.prod(shape)) if shape else 1
            if flat.size != expected:
                raise CheckpointError(
                    f"{path}:{lineno}: payload holds {flat.size} values, shape needs {expected}")
            if name in params:
                raise CheckpointError(f"{path}:{lineno}: duplicate parameter {name}")
            params[name] = Tensor(flat.reshape(shape).astype(np.float64), requires_grad=True)
    return params
