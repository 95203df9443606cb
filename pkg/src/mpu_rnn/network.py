"""Deep RNN assembly: architectures, readouts, exact BPTT.

Three architecture modes share one recurrence engine:

* ``general``       - one parameter bank, one pass over the T input dots.
* ``hybrid``        - the input sequence is extended by a copy of its first
  floor(T/2) dots and iterated once (T + floor(T/2) steps) while the
  effective parameters move through three phases: bank1, bank1 + bank2,
  bank2.  Hidden and memory state are carried continuously across phase
  boundaries.
* ``bidirectional`` - two independent banks, one pass forward and one pass
  over the reversed sequence.

Class scores come from sum-pooled hidden states.  ``general`` pools one
window (t = 1..T); ``hybrid`` pools two overlapping windows (t = 1..T and
t = floor(T/2)+1 .. T+floor(T/2)); ``bidirectional`` pools one window per
direction.  Each window is read out through the last layer only
(``last_sum``), through the sum of every layer's pooled state with a single
matrix (``stacked_sum``), or through one matrix per layer (``per_layer``).
With tied matrices, ``per_layer`` reproduces ``stacked_sum`` exactly.

Skip connections: with ``skip_input_to_all_layers`` set, every layer above
the first receives the raw network input concatenated in front of the
previous layer's output.  The ``mpu_c`` cell compensates internally, so its
upper layers receive only the previous layer's output regardless of the flag.
"""

from dataclasses import dataclass

import numpy as np

from .cells import (
    CELL_KINDS,
    CellParams,
    HAS_MEMORY,
    cell_backward,
    cell_forward,
    cell_param_shapes,
    zero_state,
)
from .errors import ConfigError, InputError, InternalError

ARCH_KINDS = ("general", "hybrid", "bidirectional")
READOUT_KINDS = ("last_sum", "stacked_sum", "per_layer")
READOUT_MATRIX_MODES = ("split", "shared")


@dataclass
class NetworkConfig:
    """Architecture descriptor. ``hidden_size`` is uniform across layers."""

    cell: str
    num_layers: int
    hidden_size: int
    input_dim: int
    num_classes: int
    arch: str = "general"
    readout: str = "stacked_sum"
    readout_matrix_mode: str = "split"
    skip_input_to_all_layers: bool = True
    dropout_keep: float = 1.0

    def validate(self):
        if self.cell not in CELL_KINDS:
            raise ConfigError(f"unknown cell kind: {self.cell!r}")
        if self.arch not in ARCH_KINDS:
            raise ConfigError(f"unknown architecture: {self.arch!r}")
        if self.readout not in READOUT_KINDS:
            raise ConfigError(f"unknown readout mode: {self.readout!r}")
        if self.readout_matrix_mode not in READOUT_MATRIX_MODES:
            raise ConfigError(f"unknown readout matrix mode: {self.readout_matrix_mode!r}")
        if self.num_layers < 1:
            raise ConfigError("need at least one layer")
        if self.hidden_size < 1:
            raise ConfigError("hidden size must be positive")
        if self.input_dim not in (2, 3):
            raise ConfigError("input dimension must be 2 or 3")
        if self.num_classes < 2:
            raise ConfigError("need at least two classes")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ConfigError("dropout keep probability must be in (0, 1]")
        return self

    def layer_input_dim(self, n):
        """Input width of layer ``n`` (0-based) under the skip-connection rules."""
        if n == 0:
            return self.input_dim
        if self.cell == "mpu_c" or not self.skip_input_to_all_layers:
            return self.hidden_size
        return self.input_dim + self.hidden_size

    @property
    def num_windows(self):
        return 1 if self.arch == "general" else 2

    @property
    def num_readout_groups(self):
        if self.num_windows == 1 or self.readout_matrix_mode == "shared":
            return 1
        return 2

    @property
    def has_second_bank(self):
        return self.arch != "general"


def iter_param_shapes(cfg):
    """Every trainable tensor of a network as ordered (name, shape) pairs."""
    banks = ["bank1"] + (["bank2"] if cfg.has_second_bank else [])
    for bank in banks:
        for n in range(cfg.num_layers):
            for t_name, shape in cell_param_shapes(
                cfg.cell, cfg.layer_input_dim(n), cfg.hidden_size
            ):
                yield f"layer{n + 1}.{bank}.{t_name}", shape
    K, d = cfg.num_classes, cfg.hidden_size
    for g in range(cfg.num_readout_groups):
        if cfg.readout == "per_layer":
            for n in range(cfg.num_layers):
                yield f"readout.U{g + 1}.layer{n + 1}", (K, d)
        else:
            yield f"readout.U{g + 1}", (K, d)
    yield "readout.b_y", (K,)


class NetworkParams:
    """All trainable tensors of one network, addressable by dotted name.

    ``readout_groups[g]`` is a list of per-layer matrices in ``per_layer``
    mode and a single-element list otherwise.  The same structure doubles as
    the gradient and optimizer-accumulator container.
    """

    def __init__(self, cfg, bank1, bank2, readout_groups, b_y):
        self.cfg = cfg
        self.bank1 = bank1
        self.bank2 = bank2
        self.readout_groups = readout_groups
        self.b_y = b_y

    @classmethod
    def zeros(cls, cfg):
        cfg.validate()
        bank1 = [
            CellParams.zeros(cfg.cell, cfg.layer_input_dim(n), cfg.hidden_size)
            for n in range(cfg.num_layers)
        ]
        bank2 = None
        if cfg.has_second_bank:
            bank2 = [
                CellParams.zeros(cfg.cell, cfg.layer_input_dim(n), cfg.hidden_size)
                for n in range(cfg.num_layers)
            ]
        K, d = cfg.num_classes, cfg.hidden_size
        per_group = cfg.num_layers if cfg.readout == "per_layer" else 1
        readout_groups = [
            [np.zeros((K, d)) for _ in range(per_group)]
            for _ in range(cfg.num_readout_groups)
        ]
        return cls(cfg, bank1, bank2, readout_groups, np.zeros(K))

    def named_arrays(self):
        """Yield (name, array) in the fixed order of ``iter_param_shapes``."""
        banks = [("bank1", self.bank1)]
        if self.bank2 is not None:
            banks.append(("bank2", self.bank2))
        for bank_name, bank in banks:
            for n, cell in enumerate(bank):
                for t_name, arr in cell.items():
                    yield f"layer{n + 1}.{bank_name}.{t_name}", arr
        for g, group in enumerate(self.readout_groups):
            if self.cfg.readout == "per_layer":
                for n, mat in enumerate(group):
                    yield f"readout.U{g + 1}.layer{n + 1}", mat
            else:
                yield f"readout.U{g + 1}", group[0]
        yield "readout.b_y", self.b_y

    def array_index(self):
        return dict(self.named_arrays())

    def copy(self):
        out = NetworkParams.zeros(self.cfg)
        for (_, dst), (_, src) in zip(out.named_arrays(), self.named_arrays()):
            dst[...] = src
        return out

    def group_for_window(self, w):
        return 0 if len(self.readout_groups) == 1 else w


def init_params(cfg, rng):
    """Fresh parameters: weight matrices uniform in [-s, s] with
    s = 1/sqrt(fan_in); biases zero; the second hybrid bank all zeros; the
    bidirectional backward bank drawn like the forward one."""
    params = NetworkParams.zeros(cfg)
    for name, arr in params.named_arrays():
        if arr.ndim != 2:
            continue  # biases stay zero
        if ".bank2." in name and cfg.arch == "hybrid":
            continue  # second bank starts as the additive identity
        s = 1.0 / np.sqrt(arr.shape[1])
        arr[...] = rng.uniform(-s, s, size=arr.shape)
    return params


def build_extended_sequence(seq, T):
    """Original sequence followed by a copy of its first floor(T/2) dots."""
    if T != len(seq):
        raise InputError(f"sequence length {len(seq)} does not match T={T}")
    if T < 2:
        raise InputError("extended sequence needs at least 2 dots")
    half = T // 2
    if isinstance(seq, np.ndarray):
        return np.concatenate([seq, seq[:half]], axis=0)
    return list(seq) + list(seq[:half])


def phase_of_step(t, T):
    """Phase (1, 2 or 3) of 1-based step ``t`` in the extended recurrence."""
    half = T // 2
    if 1 <= t <= half:
        return 1
    if t <= T:
        return 2
    if t <= T + half:
        return 3
    raise InternalError(f"step {t} outside extended range 1..{T + half}")


def phase_params(t, T, bank1, bank2):
    """Effective per-layer parameters at 1-based step ``t``: bank1 during the
    first floor(T/2) steps, the elementwise sum during steps floor(T/2)+1..T,
    bank2 during the final floor(T/2) steps."""
    phase = phase_of_step(t, T)
    if phase == 1:
        return bank1
    if phase == 2:
        return [a.add(b) for a, b in zip(bank1, bank2)]
    return bank2


class RunTrace:
    """Bookkeeping of one directional pass: per-step, per-layer states and
    caches, dropout masks, and which bank(s) each step's gradient feeds."""

    __slots__ = ("states", "caches", "masks", "banks", "routes")

    def __init__(self, states, caches, masks, banks, routes):
        self.states = states
        self.caches = caches
        self.masks = masks
        self.banks = banks
        self.routes = routes


class ForwardTrace:
    """Everything backward needs to run exact BPTT, plus the logits."""

    __slots__ = ("cfg", "runs", "windows", "pooled", "logits", "cell_evals", "training")

    def __init__(self, cfg, runs, windows, pooled, logits, cell_evals, training):
        self.cfg = cfg
        self.runs = runs
        self.windows = windows  # (run_idx, start, stop) step ranges, 0-based
        self.pooled = pooled    # pooled[w][n] = sum of h over the window
        self.logits = logits
        self.cell_evals = cell_evals
        self.training = training


def _layer_input(cfg, x_t, below):
    if cfg.cell == "mpu_c" or not cfg.skip_input_to_all_layers:
        return below
    return np.concatenate([x_t, below])


def _run_recurrence(cfg, xs, step_banks, step_routes, training, rng):
    N = cfg.num_layers
    drop = training and cfg.dropout_keep < 1.0
    keep = cfg.dropout_keep
    prev = [zero_state(cfg.cell, cfg.hidden_size) for _ in range(N)]
    states, caches, masks = [], [], []
    for ti in range(len(xs)):
        x_t = xs[ti]
        bank = step_banks[ti]
        row_states, row_caches, row_masks = [], [], []
        below = x_t
        for n in range(N):
            x_in = below if n == 0 else _layer_input(cfg, x_t, below)
            st, cache = cell_forward(cfg.cell, x_in, prev[n], bank[n])
            prev[n] = st
            row_states.append(st)
            row_caches.append(cache)
            below = st.h
            if n < N - 1:
                if drop:
                    mask = (rng.uniform(size=cfg.hidden_size) < keep) / keep
                    row_masks.append(mask)
                    below = below * mask
                else:
                    row_masks.append(None)
        states.append(row_states)
        caches.append(row_caches)
        masks.append(row_masks)
    return RunTrace(states, caches, masks, step_banks, step_routes)


def forward(seq, params, cfg, training=False, rng=None):
    """Evaluate the network on one preprocessed sequence.

    Returns (logits, ForwardTrace).  Dropout (inverted scaling, applied to
    the output a layer feeds the next layer, never to the recurrent path or
    the pooling path) is active only with ``training`` set, and then requires
    ``rng``.
    """
    cfg.validate()
    xs = np.asarray(seq, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != cfg.input_dim:
        raise ConfigError(
            f"sequence has shape {xs.shape}, expected (T, {cfg.input_dim})"
        )
    T = xs.shape[0]
    if T < 1:
        raise InputError("empty input sequence")
    if training and cfg.dropout_keep < 1.0 and rng is None:
        raise ConfigError("training forward with dropout needs an rng")

    N = cfg.num_layers
    if cfg.arch == "general":
        step_banks = [params.bank1] * T
        step_routes = [("bank1",)] * T
        runs = [_run_recurrence(cfg, xs, step_banks, step_routes, training, rng)]
        windows = [(0, 0, T)]
    elif cfg.arch == "hybrid":
        if T < 2:
            raise InputError("hybrid recurrence needs at least 2 dots")
        half = T // 2
        ext = build_extended_sequence(xs, T)
        sum_bank = [a.add(b) for a, b in zip(params.bank1, params.bank2)]
        by_phase = {
            1: (params.bank1, ("bank1",)),
            2: (sum_bank, ("bank1", "bank2")),
            3: (params.bank2, ("bank2",)),
        }
        step_banks, step_routes = [], []
        for t in range(1, len(ext) + 1):
            bank, route = by_phase[phase_of_step(t, T)]
            step_banks.append(bank)
            step_routes.append(route)
        runs = [_run_recurrence(cfg, ext, step_banks, step_routes, training, rng)]
        windows = [(0, 0, T), (0, half, T + half)]
    else:  # bidirectional
        fwd = _run_recurrence(
            cfg, xs, [params.bank1] * T, [("bank1",)] * T, training, rng
        )
        bwd = _run_recurrence(
            cfg, xs[::-1], [params.bank2] * T, [("bank2",)] * T, training, rng
        )
        runs = [fwd, bwd]
        windows = [(0, 0, T), (1, 0, T)]

    pooled = []
    for run_idx, start, stop in windows:
        run = runs[run_idx]
        sums = [np.zeros(cfg.hidden_size) for _ in range(N)]
        for ti in range(start, stop):
            for n in range(N):
                sums[n] += run.states[ti][n].h
        pooled.append(sums)

    logits = params.b_y.copy()
    for w in range(len(windows)):
        group = params.readout_groups[params.group_for_window(w)]
        if cfg.readout == "last_sum":
            logits += group[0] @ pooled[w][N - 1]
        elif cfg.readout == "stacked_sum":
            stacked = pooled[w][0].copy()
            for n in range(1, N):
                stacked += pooled[w][n]
            logits += group[0] @ stacked
        else:  # per_layer
            for n in range(N):
                logits += group[n] @ pooled[w][n]

    cell_evals = sum(len(run.states) for run in runs) * N
    trace = ForwardTrace(cfg, runs, windows, pooled, logits, cell_evals, training)
    return logits, trace


def backward(trace, dlogits, params, cfg):
    """Exact BPTT: gradients of a scalar loss (given d loss / d logits) with
    respect to every trainable tensor.  Steps in the hybrid middle phase
    contribute their parameter gradient to both banks."""
    if trace.cfg is not cfg and (
        trace.cfg.cell != cfg.cell
        or trace.cfg.arch != cfg.arch
        or trace.cfg.num_layers != cfg.num_layers
        or trace.cfg.hidden_size != cfg.hidden_size
    ):
        raise InternalError("trace does not match the supplied configuration")
    N = cfg.num_layers
    d = cfg.hidden_size
    grads = NetworkParams.zeros(cfg)
    dlogits = np.asarray(dlogits, dtype=np.float64)

    grads.b_y += dlogits
    # window/layer pooled-state gradients
    dU = [[np.zeros(d) for _ in range(N)] for _ in trace.windows]
    for w in range(len(trace.windows)):
        g = params.group_for_window(w)
        group = params.readout_groups[g]
        ggrad = grads.readout_groups[g]
        if cfg.readout == "last_sum":
            ggrad[0] += np.outer(dlogits, trace.pooled[w][N - 1])
            dU[w][N - 1] += group[0].T @ dlogits
        elif cfg.readout == "stacked_sum":
            stacked = trace.pooled[w][0].copy()
            for n in range(1, N):
                stacked += trace.pooled[w][n]
            ggrad[0] += np.outer(dlogits, stacked)
            dpool = group[0].T @ dlogits
            for n in range(N):
                dU[w][n] += dpool
        else:
            for n in range(N):
                ggrad[n] += np.outer(dlogits, trace.pooled[w][n])
                dU[w][n] += group[n].T @ dlogits

    bank_grads = {"bank1": grads.bank1, "bank2": grads.bank2}
    for run_idx, run in enumerate(trace.runs):
        T_run = len(run.states)
        spans = [
            (start, stop, dU[w])
            for w, (ri, start, stop) in enumerate(trace.windows)
            if ri == run_idx
        ]
        dh_next = [np.zeros(d) for _ in range(N)]
        dm_next = [np.zeros(d) if HAS_MEMORY[cfg.cell] else None for _ in range(N)]
        for ti in range(T_run - 1, -1, -1):
            dbelow = None
            for n in range(N - 1, -1, -1):
                dh = dh_next[n].copy()
                for start, stop, du in spans:
                    if start <= ti < stop:
                        dh += du[n]
                if dbelow is not None:
                    dh += dbelow
                dx_in, dprev, dp = cell_backward(
                    cfg.cell, run.caches[ti][n], dh, dm_next[n], run.banks[ti][n]
                )
                for route in run.routes[ti]:
                    target = bank_grads[route][n]
                    for t_name, t_grad in dp.items():
                        target[t_name] += t_grad
                dh_next[n] = dprev.h
                dm_next[n] = dprev.m
                if n > 0:
                    if cfg.cell == "mpu_c" or not cfg.skip_input_to_all_layers:
                        dbelow = dx_in
                    else:
                        dbelow = dx_in[cfg.input_dim:]
                    mask = run.masks[ti][n - 1]
                    if mask is not None:
                        dbelow = dbelow * mask
    return grads


def ensemble_predict(logit_sets):
    """Elementwise sum of member logits; argmax of the sum is the ensemble
    class (ties resolve to the lowest index)."""
    if not logit_sets:
        raise InputError("ensemble needs at least one member")
    first = np.asarray(logit_sets[0], dtype=np.float64)
    total = first.copy()
    for member in logit_sets[1:]:
        arr = np.asarray(member, dtype=np.float64)
        if arr.shape != first.shape:
            raise InputError(
                f"ensemble member has shape {arr.shape}, expected {first.shape}"
            )
        total += arr
    return total
