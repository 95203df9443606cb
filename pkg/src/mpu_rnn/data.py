"""Trajectory datasets: containers, preprocessing, text I/O, synthesis.

A sample is a variable-length sequence of 2-D dots (m, n), optionally with a
third pen-state channel.  Preprocessing scales each coordinate axis to
[0, 64] per sample and then removes the per-axis mean; the pen channel is
passed through untouched.

The on-disk format is one sample per line::

    <label><TAB>m1,n1[,p1];m2,n2[,p2];...

Lines starting with ``#`` are comments; blank lines are skipped.  Files are
UTF-8 and coordinates are written with ``repr()`` so a save/load round trip
is exact.
"""

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InputError, ParseError
from .rng import Rng

SCALE_RANGE = 64.0


@dataclass
class RawTrajectory:
    """One sample: ``dots`` has shape (T, 2) or (T, 3), ``label`` is a
    0-based class index."""

    dots: np.ndarray
    label: int


@dataclass
class Dataset:
    samples: list
    num_classes: int
    dim: int
    name: str = ""

    def __len__(self):
        return len(self.samples)


def preprocess(traj):
    """Per-axis min-max scale of the two coordinates to [0, 64], then
    per-axis mean removal.  An axis with zero range maps to the midpoint 32
    (and hence to 0 after centering).  Returns a new trajectory."""
    dots = np.asarray(traj.dots, dtype=np.float64)
    if dots.ndim != 2 or dots.shape[1] not in (2, 3):
        raise InputError(f"trajectory has shape {dots.shape}, expected (T, 2) or (T, 3)")
    if dots.shape[0] < 1:
        raise InputError("empty trajectory")
    out = dots.copy()
    for axis in range(2):
        col = dots[:, axis]
        lo, hi = col.min(), col.max()
        if hi > lo:
            out[:, axis] = (col - lo) * (SCALE_RANGE / (hi - lo))
        else:
            out[:, axis] = SCALE_RANGE / 2.0
        out[:, axis] -= out[:, axis].mean()
    return RawTrajectory(dots=out, label=traj.label)


def preprocess_dataset(ds):
    return Dataset(
        samples=[preprocess(s) for s in ds.samples],
        num_classes=ds.num_classes,
        dim=ds.dim,
        name=ds.name,
    )


def save_dataset(path, ds):
    with open(path, "w", encoding="utf-8") as fh:
        for s in ds.samples:
            dots = ";".join(
                ",".join(repr(float(v)) for v in dot) for dot in np.asarray(s.dots)
            )
            fh.write(f"{int(s.label)}\t{dots}\n")


def load_dataset(path, name=""):
    """Parse a dataset file.  Structural problems raise ParseError carrying
    the 1-based line number; an empty file or mixed dot widths raise
    FormatError."""
    samples = []
    dim = None
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read dataset {path}: {exc}") from None
    with fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "\t" not in line:
                raise ParseError("missing tab between label and dots", line_no)
            label_text, dots_text = line.split("\t", 1)
            try:
                label = int(label_text)
            except ValueError:
                raise ParseError(f"bad label {label_text!r}", line_no) from None
            if label < 0:
                raise ParseError(f"negative label {label}", line_no)
            rows = []
            for chunk in dots_text.split(";"):
                parts = chunk.split(",")
                if len(parts) not in (2, 3):
                    raise ParseError(
                        f"dot {chunk!r} has {len(parts)} fields, expected 2 or 3", line_no
                    )
                try:
                    rows.append([float(p) for p in parts])
                except ValueError:
                    raise ParseError(f"bad coordinate in dot {chunk!r}", line_no) from None
            width = len(rows[0])
            if any(len(r) != width for r in rows):
                raise ParseError("dots mix 2-field and 3-field entries", line_no)
            if dim is None:
                dim = width
            elif width != dim:
                raise FormatError(
                    f"line {line_no} has {width}-field dots, file started with {dim}"
                )
            samples.append(RawTrajectory(dots=np.array(rows, dtype=np.float64), label=label))
    if not samples:
        raise FormatError(f"no samples in {path}")
    num_classes = max(s.label for s in samples) + 1
    return Dataset(samples=samples, num_classes=num_classes, dim=dim, name=name)


def _class_curve_table(num_classes, rng):
    """Distinct (omega1, omega2, phase) per class: enumerate a frequency grid
    crossed with four phase offsets, then shuffle deterministically."""
    grid = 1
    while grid * grid * 4 < num_classes:
        grid += 1
    combos = [
        (a, b, p)
        for a in range(1, grid + 1)
        for b in range(1, grid + 1)
        for p in range(4)
    ]
    rng.shuffle(combos)
    return combos[:num_classes]


def synth_generate(num_classes, per_class, seed, dim=2, jitter=1.5):
    """Deterministic synthetic trajectories.

    Class ``c`` draws from the closed curve
    m(u) = 32 + 24 sin(omega1 u + phi), n(u) = 32 + 24 cos(omega2 u)
    sampled on a uniform grid of T points over [0, 2pi], with T drawn from
    [40, 120] per sample and Gaussian jitter of scale ``jitter`` added to
    both coordinates.  With dim=3 the pen channel is 1 for the first half of
    each curve and 0 afterwards.  Same arguments, same dataset.
    """
    if num_classes < 2:
        raise InputError("need at least two classes")
    if per_class < 1:
        raise InputError("need at least one sample per class")
    if dim not in (2, 3):
        raise InputError("dim must be 2 or 3")
    rng = Rng(seed)
    table = _class_curve_table(num_classes, rng.spawn(0))
    lengths_rng = rng.spawn(1)
    noise_rng = rng.spawn(2)
    samples = []
    for c in range(num_classes):
        omega1, omega2, p = table[c]
        phi = p * (np.pi / 2.0)
        for _ in range(per_class):
            T = 40 + lengths_rng.randint(81)
            u = np.linspace(0.0, 2.0 * np.pi, T)
            m = 32.0 + 24.0 * np.sin(omega1 * u + phi)
            n = 32.0 + 24.0 * np.cos(omega2 * u)
            if jitter > 0:
                m = m + noise_rng.normal(std=jitter, size=T)
                n = n + noise_rng.normal(std=jitter, size=T)
            if dim == 3:
                pen = (np.arange(T) < T // 2).astype(np.float64)
                dots = np.stack([m, n, pen], axis=1)
            else:
                dots = np.stack([m, n], axis=1)
            samples.append(RawTrajectory(dots=dots, label=c))
    return Dataset(samples=samples, num_classes=num_classes, dim=dim, name="synth")


def split_dataset(ds, train_frac, val_frac, seed):
    """Stratified split into train/val/test.  Per class the sample order is
    shuffled with the seed, then floor(n*train_frac) go to train and
    floor(n*val_frac) to validation; the remainder is the test split."""
    if train_frac <= 0 or val_frac <= 0:
        raise InputError("split fractions must be positive")
    if train_frac + val_frac > 1.0 + 1e-12:
        raise InputError("split fractions sum to more than 1")
    rng = Rng(seed)
    by_class = {}
    for idx, s in enumerate(ds.samples):
        by_class.setdefault(s.label, []).append(idx)
    train_idx, val_idx, test_idx = [], [], []
    for label in sorted(by_class):
        idxs = by_class[label]
        rng.shuffle(idxs)
        n = len(idxs)
        n_tr = int(n * train_frac)
        n_val = int(n * val_frac)
        if n_tr < 1 or n_val < 1:
            raise InputError(
                f"class {label} has {n} samples, too few for the requested split"
            )
        train_idx.extend(idxs[:n_tr])
        val_idx.extend(idxs[n_tr : n_tr + n_val])
        test_idx.extend(idxs[n_tr + n_val :])

    def take(indices, tag):
        return Dataset(
            samples=[ds.samples[i] for i in indices],
            num_classes=ds.num_classes,
            dim=ds.dim,
            name=tag,
        )

    return take(train_idx, "train"), take(val_idx, "val"), take(test_idx, "test")
