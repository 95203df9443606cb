"""Self-check suites behind the ``verify`` subcommand.

Each suite returns (ok, detail) and never raises; the detail string names
the first offending tensor/value when a suite fails.  The acceptance tests
reuse these functions, so the command line and the test suite agree on what
"verified" means.
"""

import os
import tempfile
import time
from dataclasses import replace

import numpy as np

from . import cells
from .analysis import (
    GOLDEN_PARAM_TABLE,
    count_params,
    count_steps,
    grad_check,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .data import RawTrajectory, preprocess
from .errors import VerificationError
from .network import (
    NetworkConfig,
    build_extended_sequence,
    forward,
    init_params,
)
from .rng import Rng
from .training import softmax_cross_entropy

DESK_HIDDEN = 4
DESK_CLASSES = 3


def _desk_cfg(cell, arch, readout, **kw):
    base = dict(
        cell=cell,
        num_layers=2,
        hidden_size=DESK_HIDDEN,
        input_dim=2,
        num_classes=DESK_CLASSES,
        arch=arch,
        readout=readout,
    )
    base.update(kw)
    return NetworkConfig(**base)


def check_grad_matrix(seeds=5, tolerance=1e-4):
    """Finite-difference check of every cell x architecture x readout combo,
    plus a few no-skip / shared-matrix / deeper variants."""
    configs = []
    for cell in cells.CELL_KINDS:
        for arch in ("general", "hybrid", "bidirectional"):
            for readout in ("last_sum", "stacked_sum", "per_layer"):
                configs.append(_desk_cfg(cell, arch, readout))
    extras = [
        _desk_cfg("mpu", "hybrid", "stacked_sum", readout_matrix_mode="shared"),
        _desk_cfg("gru", "hybrid", "last_sum", skip_input_to_all_layers=False),
        _desk_cfg("lstm", "bidirectional", "per_layer", skip_input_to_all_layers=False),
        _desk_cfg("mpu_c", "general", "stacked_sum", num_layers=3, hidden_size=5),
        _desk_cfg("mpu", "general", "per_layer", input_dim=3),
    ]
    worst = (0.0, "", "")
    t0 = time.perf_counter()
    for cfg in configs:
        for seed in range(1, seeds + 1):
            try:
                res = grad_check(cfg, seed=seed, tolerance=tolerance)
            except VerificationError as exc:
                return False, f"{cfg.cell}/{cfg.arch}/{cfg.readout} seed {seed}: {exc}"
            if res.max_rel_err > worst[0]:
                worst = (res.max_rel_err, f"{cfg.cell}/{cfg.arch}/{cfg.readout}", res.worst_name)
    for cfg in extras:
        for seed in (1, 2):
            try:
                res = grad_check(cfg, seed=seed, tolerance=tolerance)
            except VerificationError as exc:
                return False, f"extra {cfg.cell}/{cfg.arch}/{cfg.readout} seed {seed}: {exc}"
            if res.max_rel_err > worst[0]:
                worst = (res.max_rel_err, f"{cfg.cell}/{cfg.arch}/{cfg.readout}", res.worst_name)
    secs = time.perf_counter() - t0
    return True, (
        f"{len(configs)}x{seeds} + {len(extras)}x2 runs in {secs:.0f}s, "
        f"max rel err {worst[0]:.2e} at {worst[1]} ({worst[2]})"
    )


def check_param_counts():
    for arch, N, d, K, printed_mil, exact in GOLDEN_PARAM_TABLE:
        cfg = NetworkConfig(
            cell="gru", num_layers=N, hidden_size=d, input_dim=2,
            num_classes=K, arch=arch,
        )
        rep = count_params(cfg, "paper_table")
        if rep.total != exact:
            return False, f"{arch} N={N} d={d} K={K}: got {rep.total}, expected {exact}"
        if abs(rep.total / 1e6 - printed_mil) > 0.01:
            return False, (
                f"{arch} N={N} d={d} K={K}: {rep.total / 1e6:.4f} mil "
                f"vs printed {printed_mil}"
            )
    # the honest count can never undercut the published rule
    for cell in cells.CELL_KINDS:
        for arch in ("general", "hybrid", "bidirectional"):
            cfg = NetworkConfig(
                cell=cell, num_layers=3, hidden_size=32, input_dim=3,
                num_classes=10, arch=arch,
            )
            full = count_params(cfg, "full_actual").total
            paper = count_params(cfg, "paper_table").total
            if full < paper:
                return False, f"{cell}/{arch}: full_actual {full} < paper_table {paper}"
    return True, f"{len(GOLDEN_PARAM_TABLE)} published totals reproduced exactly"


def check_step_counts(seed=2024):
    rng = Rng(seed)
    archs = ("general", "hybrid", "bidirectional")
    kinds = cells.CELL_KINDS
    for i in range(20):
        N = 1 + rng.randint(3)
        T = 2 + rng.randint(39)
        arch = archs[i % 3]
        cell = kinds[i % 4]
        cfg = NetworkConfig(
            cell=cell, num_layers=N, hidden_size=3, input_dim=2,
            num_classes=3, arch=arch,
        )
        params = init_params(cfg, rng.spawn(i))
        xs = rng.uniform(-1, 1, size=(T, 2))
        _, trace = forward(xs, params, cfg)
        expect = count_steps(cfg, T).cell_evals
        if trace.cell_evals != expect:
            return False, (
                f"{arch}/{cell} N={N} T={T}: counter {trace.cell_evals}, "
                f"closed form {expect}"
            )
        # hybrid:bidirectional per-layer ratio is (T + T//2) : 2T exactly
        hyb = count_steps(replace(cfg, arch="hybrid"), T).per_layer_evals
        bid = count_steps(replace(cfg, arch="bidirectional"), T).per_layer_evals
        if hyb * 2 * T != bid * (T + T // 2):
            return False, f"ratio law broken at T={T}"
    return True, "instrumented counts match closed forms on 20 random (N, T)"


def check_cell_invariants(seed=7, steps=10_000):
    rng = Rng(seed)
    d = 6
    # forced-zero input gate freezes the memory pool exactly
    p = cells.CellParams.zeros("mpu", d, d)
    for name, arr in p.items():
        arr[...] = rng.uniform(-0.7, 0.7, size=arr.shape)
    for _ in range(100):
        m_prev = rng.uniform(-2, 2, size=d)
        x = rng.uniform(-1, 1, size=d)
        h_prev = rng.uniform(-1, 1, size=d)
        _, _, m_new = cells.memory_pool_update(np.zeros(d), x, h_prev, m_prev, p)
        if np.max(np.abs(m_new - m_prev)) > 1e-12:
            return False, "memory pool moved under a closed input gate"
    # saturated-closed output gate zeroes the hidden state
    p_sat = cells.CellParams.zeros("mpu", d, d)
    for name, arr in p_sat.items():
        arr[...] = rng.uniform(-0.7, 0.7, size=arr.shape)
    p_sat["b_o"][...] = -1000.0
    st = cells.zero_state("mpu", d)
    for _ in range(50):
        st, _ = cells.mpu_forward(rng.uniform(-1, 1, size=d), st, p_sat)
        if np.max(np.abs(st.h)) > 1e-12:
            return False, "hidden state nonzero under a closed output gate"
    # compensated hidden output stays strictly inside (-1, 1)
    pc = cells.CellParams.zeros("mpu_c", d, d)
    for name, arr in pc.items():
        arr[...] = rng.uniform(-0.7, 0.7, size=arr.shape)
    st = cells.zero_state("mpu_c", d)
    for _ in range(steps):
        st, _ = cells.mpu_c_forward(rng.uniform(-1, 1, size=d), st, pc)
        if np.max(np.abs(st.h)) >= 1.0:
            return False, "compensated hidden output left the open interval (-1, 1)"
    return True, f"gate invariants hold; {steps} compensated steps stayed in (-1, 1)"


def check_readout_equivalence(seed=11, trials=10, tol=1e-12):
    rng = Rng(seed)
    archs = ("general", "hybrid", "bidirectional")
    for trial in range(trials):
        cfg_kw = dict(
            cell=cells.CELL_KINDS[trial % 4],
            num_layers=1 + rng.randint(3),
            hidden_size=2 + rng.randint(4),
            input_dim=2,
            num_classes=2 + rng.randint(3),
            arch=archs[trial % 3],
            skip_input_to_all_layers=bool(rng.randint(2)),
            readout_matrix_mode=("split", "shared")[rng.randint(2)],
        )
        stacked_cfg = NetworkConfig(readout="stacked_sum", **cfg_kw)
        tied_cfg = NetworkConfig(readout="per_layer", **cfg_kw)
        sp = init_params(stacked_cfg, rng.spawn(100 + trial))
        tp = init_params(tied_cfg, rng.spawn(100 + trial))
        for bank_name in ("bank1", "bank2"):
            sbank = getattr(sp, bank_name)
            if sbank is None:
                continue
            for s_cell, t_cell in zip(sbank, getattr(tp, bank_name)):
                for name, arr in s_cell.items():
                    t_cell[name][...] = arr
        for g in range(len(sp.readout_groups)):
            for mat in tp.readout_groups[g]:
                mat[...] = sp.readout_groups[g][0]
        tp.b_y[...] = sp.b_y
        T = 3 + rng.randint(5)
        xs = rng.uniform(-1, 1, size=(T, 2))
        ls, _ = forward(xs, sp, stacked_cfg)
        lt, _ = forward(xs, tp, tied_cfg)
        gap = float(np.max(np.abs(ls - lt)))
        if gap > tol:
            return False, f"trial {trial}: tied per-layer differs from stacked by {gap:.2e}"
    return True, f"{trials} random configurations agree to 1e-12"


def check_extended_sequence(seed=13, trials=100):
    rng = Rng(seed)
    for _ in range(trials):
        T = 2 + rng.randint(199)
        xs = rng.uniform(-50, 50, size=(T, 2))
        ext = build_extended_sequence(xs, T)
        half = T // 2
        if len(ext) != T + half:
            return False, f"T={T}: extended length {len(ext)}"
        if not np.array_equal(ext[:T], xs):
            return False, f"T={T}: original block altered"
        if not np.array_equal(ext[T:], xs[:half]):
            return False, f"T={T}: appended block differs from the first half"
    return True, f"{trials} random lengths: length and copy properties hold"


def check_preprocessing(seed=17, trials=100):
    rng = Rng(seed)
    for _ in range(trials):
        T = 1 + rng.randint(50)
        scale = 10.0 ** (rng.uniform(-2, 3))
        dots = rng.uniform(0, 1, size=(T, 2)) * scale + rng.uniform(-100, 100)
        out = preprocess(RawTrajectory(dots=dots, label=0)).dots
        for axis in range(2):
            col = out[:, axis]
            if col.max() - col.min() > 64.0 + 1e-9:
                return False, "post-scale range exceeds 64"
            if abs(col.mean()) > 1e-9:
                return False, f"post-centering mean {col.mean():.2e}"
    worked = preprocess(
        RawTrajectory(dots=np.array([[0.0, 0.0], [4.0, 2.0], [8.0, 4.0]]), label=0)
    ).dots
    expect = np.array([[-32.0, -32.0], [0.0, 0.0], [32.0, 32.0]])
    if not np.allclose(worked, expect, atol=1e-12):
        return False, f"worked example produced {worked.tolist()}"
    # degenerate axis maps to the midpoint and centers away to zero
    flat = preprocess(
        RawTrajectory(dots=np.array([[5.0, 1.0], [5.0, 2.0]]), label=0)
    ).dots
    if np.max(np.abs(flat[:, 0])) > 1e-12:
        return False, "constant axis did not map to zero after centering"
    return True, f"{trials} random trajectories plus the worked example"


def check_loss_sanity():
    K = 7
    loss, dl = softmax_cross_entropy(np.zeros((1, K)), [3])
    if abs(loss - np.log(K)) > 1e-10:
        return False, f"uniform logits: loss {loss!r} vs ln {K}"
    rng = Rng(23)
    logits = rng.uniform(-5, 5, size=(6, 4))
    labels = [int(rng.randint(4)) for _ in range(6)]
    _, dl = softmax_cross_entropy(logits, labels)
    if np.max(np.abs(dl.sum(axis=1))) > 1e-12:
        return False, "dlogits rows do not sum to zero"
    loss, _ = softmax_cross_entropy(np.array([[10.0, 0.0, 0.0, 0.0]]), [0])
    if abs(loss - 1.3619e-4) > 1e-8:
        return False, f"confident-correct loss {loss!r}"
    return True, "uniform, row-sum and confident-correct values verified"


def check_rng_determinism():
    a = Rng(99)
    b = Rng(99)
    if not np.array_equal(a.uniform(size=10_000), b.uniform(size=10_000)):
        return False, "same seed produced different streams"
    if np.array_equal(Rng(1).uniform(size=100), Rng(2).uniform(size=100)):
        return False, "different seeds produced identical streams"
    parent = Rng(5)
    child_before = parent.spawn(3).uniform(size=50)
    parent.uniform(size=1000)  # consuming the parent must not move children
    child_after = parent.spawn(3).uniform(size=50)
    if not np.array_equal(child_before, child_after):
        return False, "spawned stream depends on parent consumption"
    return True, "streams reproducible; spawn independent of parent position"


def check_checkpoint_roundtrip(seed=31):
    rng = Rng(seed)
    cfg = NetworkConfig(
        cell="mpu_c", num_layers=2, hidden_size=5, input_dim=3,
        num_classes=4, arch="hybrid", readout="per_layer",
        readout_matrix_mode="split", dropout_keep=0.6,
    )
    params = init_params(cfg, rng)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "roundtrip.ckpt")
        save_checkpoint(path, params, cfg)
        loaded, cfg2 = load_checkpoint(path)
    if cfg2 != cfg:
        return False, "configuration changed in the round trip"
    for (name, a), (_, b) in zip(params.named_arrays(), loaded.named_arrays()):
        if not np.array_equal(a, b):
            return False, f"tensor {name} changed in the round trip"
    return True, "bitwise round trip including configuration"


SUITES = (
    ("grad-matrix", check_grad_matrix),
    ("param-counts", check_param_counts),
    ("step-counts", check_step_counts),
    ("cell-invariants", check_cell_invariants),
    ("readout-equivalence", check_readout_equivalence),
    ("extended-sequence", check_extended_sequence),
    ("preprocessing", check_preprocessing),
    ("loss-sanity", check_loss_sanity),
    ("rng-determinism", check_rng_determinism),
    ("checkpoint-roundtrip", check_checkpoint_roundtrip),
)


def run_verification(only=None):
    """Run the named suite (or all); returns [(name, ok, detail)]."""
    names = [n for n, _ in SUITES]
    if only is not None and only not in names:
        from .errors import ConfigError

        raise ConfigError(f"unknown suite {only!r}; choose from {', '.join(names)}")
    results = []
    for name, fn in SUITES:
        if only is not None and name != only:
            continue
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed suite is a failed suite
            ok, detail = False, f"crashed: {type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
    return results
