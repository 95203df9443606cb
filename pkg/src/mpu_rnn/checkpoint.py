"""Plain-text checkpoints.

Line 1 is the magic header ``mpu-rnn-ckpt v1``.  It is followed by
``config <key> <value>`` lines describing the architecture, then one line
per tensor::

    <name> <rows> <cols> <v11> <v12> ... <vRC>

Vectors are written with rows=1.  Values use ``repr()`` so floats survive a
round trip bit for bit.  Tensor names contain dots, config keys never do,
which keeps the two line kinds unambiguous.
"""

import numpy as np

from .errors import FormatError, InputError
from .network import NetworkConfig, NetworkParams

MAGIC = "mpu-rnn-ckpt v1"

_CONFIG_FIELDS = (
    ("cell", str),
    ("arch", str),
    ("num_layers", int),
    ("hidden_size", int),
    ("input_dim", int),
    ("num_classes", int),
    ("readout", str),
    ("readout_matrix_mode", str),
    ("skip_input_to_all_layers", bool),
    ("dropout_keep", float),
)


def _format_bool(v):
    return "true" if v else "false"


def _parse_bool(text):
    if text == "true":
        return True
    if text == "false":
        return False
    raise FormatError(f"expected true/false, got {text!r}")


def save_checkpoint(path, params, cfg):
    lines = [MAGIC]
    for key, kind in _CONFIG_FIELDS:
        value = getattr(cfg, key)
        text = _format_bool(value) if kind is bool else repr(value) if kind is float else str(value)
        lines.append(f"config {key} {text}")
    for name, arr in params.named_arrays():
        mat = np.atleast_2d(arr)
        rows, cols = mat.shape
        values = " ".join(repr(float(v)) for v in mat.ravel())
        lines.append(f"{name} {rows} {cols} {values}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    """Read a checkpoint; returns (params, cfg).  Any structural problem
    (bad magic, malformed line, shape or name mismatch) raises FormatError."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read checkpoint {path}: {exc}") from None
    if not lines or lines[0] != MAGIC:
        raise FormatError(f"not a checkpoint file (missing {MAGIC!r} header)")

    config_raw = {}
    tensor_lines = []
    for line in lines[1:]:
        if not line.strip():
            continue
        if line.startswith("config "):
            parts = line.split(None, 2)
            if len(parts) != 3:
                raise FormatError(f"malformed config line: {line!r}")
            config_raw[parts[1]] = parts[2]
        else:
            tensor_lines.append(line)

    kwargs = {}
    for key, kind in _CONFIG_FIELDS:
        if key not in config_raw:
            raise FormatError(f"checkpoint lacks config key {key!r}")
        text = config_raw[key]
        try:
            kwargs[key] = _parse_bool(text) if kind is bool else kind(text)
        except ValueError as exc:
            raise FormatError(f"bad value for config key {key!r}: {text!r}") from exc
    cfg = NetworkConfig(**kwargs).validate()

    params = NetworkParams.zeros(cfg)
    index = params.array_index()
    seen = set()
    for line in tensor_lines:
        parts = line.split()
        if len(parts) < 3:
            raise FormatError(f"malformed tensor line: {line[:60]!r}")
        name = parts[0]
        if name not in index:
            raise FormatError(f"unknown tensor {name!r} for this architecture")
        try:
            rows, cols = int(parts[1]), int(parts[2])
            values = [float(v) for v in parts[3:]]
        except ValueError as exc:
            raise FormatError(f"bad number in tensor line for {name!r}") from exc
        if len(values) != rows * cols:
            raise FormatError(
                f"tensor {name!r} announces {rows}x{cols} but carries {len(values)} values"
            )
        arr = index[name]
        expected = np.atleast_2d(arr).shape
        if (rows, cols) != expected:
            raise FormatError(
                f"tensor {name!r} has shape {rows}x{cols}, expected {expected[0]}x{expected[1]}"
            )
        arr[...] = np.array(values).reshape(expected).reshape(arr.shape)
        seen.add(name)
    missing = set(index) - seen
    if missing:
        raise FormatError(f"checkpoint lacks tensors: {sorted(missing)[:3]} ...")
    return params, cfg
