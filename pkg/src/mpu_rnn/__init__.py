"""Memory-pool-unit recurrent networks for dot-sequence classification.

The package implements a small family of gated recurrent cells (GRU, LSTM,
MPU, MPU with input compensation), three ways to run them over a sequence
(one directional pass, a hybrid-parameter three-phase pass over an extended
sequence, and a bidirectional pair of passes), sum-pooled readouts, exact
BPTT, and the training and verification tooling around them.  Everything is
plain float64 numpy.
"""

from .cells import CELL_KINDS, CellParams, CellState, cell_forward, cell_backward, zero_state
from .data import Dataset, RawTrajectory, load_dataset, preprocess, save_dataset, split_dataset, synth_generate
from .errors import (
    ConfigError,
    FormatError,
    InputError,
    InternalError,
    MpuRnnError,
    ParseError,
    TrainingError,
    VerificationError,
)
from .network import (
    ARCH_KINDS,
    READOUT_KINDS,
    NetworkConfig,
    NetworkParams,
    backward,
    build_extended_sequence,
    ensemble_predict,
    forward,
    init_params,
)
from .rng import Rng
from .training import Metrics, TrainConfig, evaluate, softmax_cross_entropy, train

__version__ = "0.1.0"
