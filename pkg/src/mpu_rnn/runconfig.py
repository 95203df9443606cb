"""Flat key=value run configuration.

One ``key = value`` pair per line, ``#`` starts a comment, keys are listed
in SCHEMA and nothing else is accepted.  Precedence: command-line flag,
then config-file value, then the built-in default.  The seed additionally
falls back to the MPU_RNN_SEED environment variable when neither flag nor
file provides one.
"""

import os
from dataclasses import dataclass, fields

from .errors import ConfigError
from .network import (
    ARCH_KINDS,
    READOUT_KINDS,
    READOUT_MATRIX_MODES,
    NetworkConfig,
)
from .cells import CELL_KINDS
from .training import TrainConfig

SEED_ENV_VAR = "MPU_RNN_SEED"


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _enum(choices):
    def parse(text):
        v = text.strip().lower().replace("-", "_")
        if v not in choices:
            raise ValueError(f"{text!r} not one of {', '.join(choices)}")
        return v

    return parse


def _pos_int(text):
    v = int(text)
    if v < 1:
        raise ValueError("must be at least 1")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise ValueError("cannot be negative")
    return v


def _nonneg_float(text):
    v = float(text)
    if v < 0:
        raise ValueError("cannot be negative")
    return v


# key -> (parser, default, help)
SCHEMA = {
    "cell": (_enum(CELL_KINDS), "mpu_c", "recurrent cell kind"),
    "arch": (_enum(ARCH_KINDS), "general", "architecture"),
    "layers": (_pos_int, 2, "number of stacked recurrent layers"),
    "hidden": (_pos_int, 32, "hidden size (uniform across layers)"),
    "input_dim": (_pos_int, 2, "dots per time step: 2 or 3 (pen channel)"),
    "classes": (_pos_int, 10, "number of output classes"),
    "readout": (_enum(READOUT_KINDS), "stacked_sum", "pooled-state readout mode"),
    "readout_matrices": (_enum(READOUT_MATRIX_MODES), "split",
                         "one readout matrix per pooling window, or shared"),
    "skip": (_parse_bool, True, "feed raw input to every layer (ignored by mpu_c)"),
    "dropout_keep": (float, 0.6, "keep probability for inter-layer dropout"),
    "epochs": (_pos_int, 50, "training epochs"),
    "batch_size": (_pos_int, 256, "gradient-aggregation batch size"),
    "seed": (int, 12345, f"master seed (fallback: ${SEED_ENV_VAR})"),
    "lr": (_nonneg_float, 1e-3, "rmsprop learning rate (0 freezes parameters)"),
    "rmsprop_decay": (float, 0.9, "rmsprop squared-gradient decay"),
    "rmsprop_eps": (float, 1e-8, "rmsprop denominator floor"),
    "clip_norm": (_nonneg_float, 5.0, "global gradient-norm clip (0 disables)"),
    "patience": (_nonneg_int, 0, "early-stop patience in epochs (0 disables)"),
    "train_path": (str, "", "training dataset file"),
    "val_path": (str, "", "validation dataset file (blank: carve from train)"),
    "test_path": (str, "", "test dataset file"),
    "out_dir": (str, "runs", "output directory for checkpoints and metrics"),
    "threads": (_pos_int, 1, "worker cap; 1 keeps metrics bitwise reproducible"),
}


@dataclass
class RunConfig:
    cell: str
    arch: str
    layers: int
    hidden: int
    input_dim: int
    classes: int
    readout: str
    readout_matrices: str
    skip: bool
    dropout_keep: float
    epochs: int
    batch_size: int
    seed: int
    lr: float
    rmsprop_decay: float
    rmsprop_eps: float
    clip_norm: float
    patience: int
    train_path: str
    val_path: str
    test_path: str
    out_dir: str
    threads: int

    def network_config(self):
        return NetworkConfig(
            cell=self.cell,
            num_layers=self.layers,
            hidden_size=self.hidden,
            input_dim=self.input_dim,
            num_classes=self.classes,
            arch=self.arch,
            readout=self.readout,
            readout_matrix_mode=self.readout_matrices,
            skip_input_to_all_layers=self.skip,
            dropout_keep=self.dropout_keep,
        ).validate()

    def train_config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            learning_rate=self.lr,
            rmsprop_decay=self.rmsprop_decay,
            rmsprop_epsilon=self.rmsprop_eps,
            clip_norm=self.clip_norm,
            patience=self.patience,
        ).validate()


assert set(SCHEMA) == {f.name for f in fields(RunConfig)}


def parse_config_file(path):
    """Read a flat config file into raw string values; unknown keys and
    malformed lines are configuration errors naming the line."""
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for line_no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected key = value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{path}:{line_no}: unknown key {key!r}")
        values[key] = value
    return values


def parse_value(key, text):
    parser = SCHEMA[key][0]
    try:
        return parser(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def resolve(file_values=None, flag_values=None):
    """Merge defaults, config-file values and flag values into a RunConfig."""
    merged = {key: default for key, (_, default, _) in SCHEMA.items()}
    seed_set = False
    for source in (file_values or {}), (flag_values or {}):
        for key, text in source.items():
            if text is None:
                continue
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = parse_value(key, text) if isinstance(text, str) else text
            if key == "seed":
                seed_set = True
    if not seed_set and os.environ.get(SEED_ENV_VAR):
        merged["seed"] = parse_value("seed", os.environ[SEED_ENV_VAR])
    return RunConfig(**merged)
