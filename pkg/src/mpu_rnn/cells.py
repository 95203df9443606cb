"""Single-step forward and backward evaluation for the four cell kinds.

Cell equations, as pinned for this repository:

memory pool unit (``mpu``), hidden state h, memory pool state m::

    i_t = sigmoid(W_xi x_t + W_hi h_{t-1} + b_i)
    m_t = tanh(i_t * (W_xm x_t + W_hm h_{t-1})) + (1 - i_t) * m_{t-1}
    o_t = sigmoid(W_xo x_t + W_ho h_{t-1} + b_o)
    h_t = o_t * m_t

The shared input gate restricts the pool input in the pool's own space,
i.e. after the projections.  This admits any input width (the gate is
hidden-sized while x_t is not) and keeps both gate limits exact: i_t -> 1
overwrites the pool with tanh(W_xm x_t + W_hm h_{t-1}), i_t -> 0 freezes it
at m_{t-1} bitwise.

``mpu_c`` replaces the last line with an input-compensated output, which makes
feeding the raw network input to layers above the first unnecessary::

    h_t = tanh(o_t * m_t + relu(W_xc x_t))

gru (update gate z gates the carry of the previous state)::

    z_t = sigmoid(W_xz x_t + W_hz h_{t-1} + b_z)
    r_t = sigmoid(W_xr x_t + W_hr h_{t-1} + b_r)
    n_t = tanh(W_xn x_t + W_hn (r_t * h_{t-1}) + b_n)
    h_t = z_t * h_{t-1} + (1 - z_t) * n_t

lstm (four gate banks, cell state held in m)::

    f_t = sigmoid(W_xf x_t + W_hf h_{t-1} + b_f)
    i_t = sigmoid(W_xi x_t + W_hi h_{t-1} + b_i)
    g_t = tanh   (W_xg x_t + W_hg h_{t-1} + b_g)
    o_t = sigmoid(W_xo x_t + W_ho h_{t-1} + b_o)
    m_t = f_t * m_{t-1} + i_t * g_t
    h_t = o_t * tanh(m_t)

Note the memory pool update has no bias term; only its two gates carry biases.
All backward functions are exact vector-Jacobian products of the equations
above, verified against central finite differences in the test suite.
"""

from collections import namedtuple

import numpy as np

from .errors import ConfigError, InternalError
from .numerics import relu, sigmoid

CELL_KINDS = ("gru", "lstm", "mpu", "mpu_c")

# gate-bank count per cell kind; drives the closed-form parameter accounting
GATE_BANKS = {"gru": 3, "lstm": 4, "mpu": 3, "mpu_c": 3}

# whether the cell carries a second recurrent state vector besides h
HAS_MEMORY = {"gru": False, "lstm": True, "mpu": True, "mpu_c": True}

CellState = namedtuple("CellState", ["h", "m"])


def zero_state(kind, hidden):
    h = np.zeros(hidden)
    m = np.zeros(hidden) if HAS_MEMORY[kind] else None
    return CellState(h, m)


def cell_param_shapes(kind, input_dim, hidden):
    """Ordered (name, shape) pairs of every tensor one cell allocates."""
    d, di = hidden, input_dim
    if kind == "gru":
        return [
            ("W_xz", (d, di)), ("W_hz", (d, d)), ("b_z", (d,)),
            ("W_xr", (d, di)), ("W_hr", (d, d)), ("b_r", (d,)),
            ("W_xn", (d, di)), ("W_hn", (d, d)), ("b_n", (d,)),
        ]
    if kind == "lstm":
        return [
            ("W_xf", (d, di)), ("W_hf", (d, d)), ("b_f", (d,)),
            ("W_xi", (d, di)), ("W_hi", (d, d)), ("b_i", (d,)),
            ("W_xg", (d, di)), ("W_hg", (d, d)), ("b_g", (d,)),
            ("W_xo", (d, di)), ("W_ho", (d, d)), ("b_o", (d,)),
        ]
    if kind in ("mpu", "mpu_c"):
        shapes = [
            ("W_xi", (d, di)), ("W_hi", (d, d)), ("b_i", (d,)),
            ("W_xm", (d, di)), ("W_hm", (d, d)),
            ("W_xo", (d, di)), ("W_ho", (d, d)), ("b_o", (d,)),
        ]
        if kind == "mpu_c":
            shapes.append(("W_xc", (d, di)))
        return shapes
    raise ConfigError(f"unknown cell kind: {kind!r}")


class CellParams:
    """Named weight tensors of one recurrent cell at one layer."""

    def __init__(self, kind, input_dim, hidden, tensors):
        self.kind = kind
        self.input_dim = input_dim
        self.hidden = hidden
        self.tensors = tensors  # name -> ndarray, insertion-ordered

    @classmethod
    def zeros(cls, kind, input_dim, hidden):
        tensors = {
            name: np.zeros(shape)
            for name, shape in cell_param_shapes(kind, input_dim, hidden)
        }
        return cls(kind, input_dim, hidden, tensors)

    def __getitem__(self, name):
        return self.tensors[name]

    def __setitem__(self, name, value):
        self.tensors[name] = value

    def items(self):
        return self.tensors.items()

    def copy(self):
        return CellParams(
            self.kind, self.input_dim, self.hidden,
            {k: v.copy() for k, v in self.tensors.items()},
        )

    def add(self, other):
        """Elementwise sum with another bank of identical layout."""
        if other.kind != self.kind or other.hidden != self.hidden:
            raise ConfigError("cannot add cell banks of different layout")
        return CellParams(
            self.kind, self.input_dim, self.hidden,
            {k: self.tensors[k] + other.tensors[k] for k in self.tensors},
        )


GruCache = namedtuple("GruCache", ["kind", "x", "h_prev", "z", "r", "hr", "n", "h"])
LstmCache = namedtuple(
    "LstmCache", ["kind", "x", "h_prev", "m_prev", "f", "i", "g", "o", "m", "tm", "h"]
)
MpuCache = namedtuple(
    "MpuCache", ["kind", "x", "h_prev", "m_prev", "i", "u", "c", "m", "o", "h", "zc"]
)


def _check_dims(x, prev, p):
    if x.shape != (p.input_dim,):
        raise ConfigError(
            f"cell input has shape {x.shape}, expected ({p.input_dim},)"
        )
    if prev.h.shape != (p.hidden,):
        raise ConfigError(
            f"previous hidden state has shape {prev.h.shape}, expected ({p.hidden},)"
        )


def memory_pool_update(i, x, h_prev, m_prev, p):
    """The pool self-renewal: a tanh candidate scaled by the shared input
    gate plus the ungated remainder of the previous pool state.  Returns
    (pool input u, candidate c, new pool state m)."""
    u = p["W_xm"] @ x + p["W_hm"] @ h_prev
    c = np.tanh(i * u)
    return u, c, c + (1.0 - i) * m_prev


def mpu_forward(x, prev, p):
    _check_dims(x, prev, p)
    i = sigmoid(p["W_xi"] @ x + p["W_hi"] @ prev.h + p["b_i"])
    u, c, m = memory_pool_update(i, x, prev.h, prev.m, p)
    o = sigmoid(p["W_xo"] @ x + p["W_ho"] @ prev.h + p["b_o"])
    h = o * m
    cache = MpuCache("mpu", x, prev.h, prev.m, i, u, c, m, o, h, None)
    return CellState(h, m), cache


def mpu_c_forward(x, prev, p):
    _check_dims(x, prev, p)
    i = sigmoid(p["W_xi"] @ x + p["W_hi"] @ prev.h + p["b_i"])
    u, c, m = memory_pool_update(i, x, prev.h, prev.m, p)
    o = sigmoid(p["W_xo"] @ x + p["W_ho"] @ prev.h + p["b_o"])
    zc = p["W_xc"] @ x
    h = np.tanh(o * m + relu(zc))
    cache = MpuCache("mpu_c", x, prev.h, prev.m, i, u, c, m, o, h, zc)
    return CellState(h, m), cache


def gru_forward(x, prev, p):
    _check_dims(x, prev, p)
    z = sigmoid(p["W_xz"] @ x + p["W_hz"] @ prev.h + p["b_z"])
    r = sigmoid(p["W_xr"] @ x + p["W_hr"] @ prev.h + p["b_r"])
    hr = r * prev.h
    n = np.tanh(p["W_xn"] @ x + p["W_hn"] @ hr + p["b_n"])
    h = z * prev.h + (1.0 - z) * n
    return CellState(h, None), GruCache("gru", x, prev.h, z, r, hr, n, h)


def lstm_forward(x, prev, p):
    _check_dims(x, prev, p)
    f = sigmoid(p["W_xf"] @ x + p["W_hf"] @ prev.h + p["b_f"])
    i = sigmoid(p["W_xi"] @ x + p["W_hi"] @ prev.h + p["b_i"])
    g = np.tanh(p["W_xg"] @ x + p["W_hg"] @ prev.h + p["b_g"])
    o = sigmoid(p["W_xo"] @ x + p["W_ho"] @ prev.h + p["b_o"])
    m = f * prev.m + i * g
    tm = np.tanh(m)
    h = o * tm
    return CellState(h, m), LstmCache("lstm", x, prev.h, prev.m, f, i, g, o, m, tm, h)


_FORWARD = {
    "gru": gru_forward,
    "lstm": lstm_forward,
    "mpu": mpu_forward,
    "mpu_c": mpu_c_forward,
}


def cell_forward(kind, x, prev, p):
    try:
        fn = _FORWARD[kind]
    except KeyError:
        raise ConfigError(f"unknown cell kind: {kind!r}") from None
    return fn(x, prev, p)


def _mpu_backward(cache, dh, dm_in, p, compensated):
    x, h_prev, m_prev = cache.x, cache.h_prev, cache.m_prev
    i, u, c, m, o = cache.i, cache.u, cache.c, cache.m, cache.o
    dp = {}

    if compensated:
        ds = dh * (1.0 - cache.h * cache.h)
        dzc = ds * (cache.zc > 0.0)
        dp["W_xc"] = np.outer(dzc, x)
        dx_extra = p["W_xc"].T @ dzc
        do = ds * m
        dm = ds * o
    else:
        dx_extra = 0.0
        do = dh * m
        dm = dh * o
    if dm_in is not None:
        dm = dm + dm_in

    da_o = do * o * (1.0 - o)
    dp["W_xo"] = np.outer(da_o, x)
    dp["W_ho"] = np.outer(da_o, h_prev)
    dp["b_o"] = da_o

    dm_prev = dm * (1.0 - i)
    dgated = dm * (1.0 - c * c)  # through the tanh candidate
    di = dgated * u - dm * m_prev
    du = dgated * i
    dp["W_xm"] = np.outer(du, x)
    dp["W_hm"] = np.outer(du, h_prev)

    da_i = di * i * (1.0 - i)
    dp["W_xi"] = np.outer(da_i, x)
    dp["W_hi"] = np.outer(da_i, h_prev)
    dp["b_i"] = da_i

    dx = p["W_xi"].T @ da_i + p["W_xo"].T @ da_o + p["W_xm"].T @ du + dx_extra
    dh_prev = p["W_hi"].T @ da_i + p["W_ho"].T @ da_o + p["W_hm"].T @ du
    return dx, CellState(dh_prev, dm_prev), dp


def _gru_backward(cache, dh, p):
    x, h_prev, z, r, hr, n = cache.x, cache.h_prev, cache.z, cache.r, cache.hr, cache.n
    dp = {}

    dz = dh * (h_prev - n)
    dn = dh * (1.0 - z)
    dh_prev = dh * z

    da_n = dn * (1.0 - n * n)
    dp["W_xn"] = np.outer(da_n, x)
    dp["W_hn"] = np.outer(da_n, hr)
    dp["b_n"] = da_n
    dhr = p["W_hn"].T @ da_n
    dr = dhr * h_prev
    dh_prev = dh_prev + dhr * r

    da_r = dr * r * (1.0 - r)
    dp["W_xr"] = np.outer(da_r, x)
    dp["W_hr"] = np.outer(da_r, h_prev)
    dp["b_r"] = da_r

    da_z = dz * z * (1.0 - z)
    dp["W_xz"] = np.outer(da_z, x)
    dp["W_hz"] = np.outer(da_z, h_prev)
    dp["b_z"] = da_z

    dx = p["W_xz"].T @ da_z + p["W_xr"].T @ da_r + p["W_xn"].T @ da_n
    dh_prev = dh_prev + p["W_hz"].T @ da_z + p["W_hr"].T @ da_r
    return dx, CellState(dh_prev, None), dp


def _lstm_backward(cache, dh, dm_in, p):
    x, h_prev, m_prev = cache.x, cache.h_prev, cache.m_prev
    f, i, g, o, tm = cache.f, cache.i, cache.g, cache.o, cache.tm
    dp = {}

    do = dh * tm
    dm = dh * o * (1.0 - tm * tm)
    if dm_in is not None:
        dm = dm + dm_in

    df = dm * m_prev
    di = dm * g
    dg = dm * i
    dm_prev = dm * f

    dx = np.zeros_like(x)
    dh_prev = np.zeros_like(h_prev)
    for name, gate, pre in (("f", f, df), ("i", i, di), ("o", o, do)):
        da = pre * gate * (1.0 - gate)
        dp[f"W_x{name}"] = np.outer(da, x)
        dp[f"W_h{name}"] = np.outer(da, h_prev)
        dp[f"b_{name}"] = da
        dx += p[f"W_x{name}"].T @ da
        dh_prev += p[f"W_h{name}"].T @ da
    da_g = dg * (1.0 - g * g)
    dp["W_xg"] = np.outer(da_g, x)
    dp["W_hg"] = np.outer(da_g, h_prev)
    dp["b_g"] = da_g
    dx += p["W_xg"].T @ da_g
    dh_prev += p["W_hg"].T @ da_g
    return dx, CellState(dh_prev, dm_prev), dp


def cell_backward(kind, cache, dh, dm, p):
    """Vector-Jacobian product of one forward step.

    ``dh``/``dm`` are the gradients of the downstream scalar loss with respect
    to this step's outputs; returns (dx, CellState gradient for the previous
    step, per-tensor parameter gradient dict).  Gradients accumulate
    additively across time steps by the caller.
    """
    if cache.kind != kind or p.kind != kind:
        raise InternalError(
            f"cell_backward kind mismatch: kind={kind!r} cache={cache.kind!r} params={p.kind!r}"
        )
    if kind == "mpu":
        return _mpu_backward(cache, dh, dm, p, compensated=False)
    if kind == "mpu_c":
        return _mpu_backward(cache, dh, dm, p, compensated=True)
    if kind == "gru":
        return _gru_backward(cache, dh, p)
    if kind == "lstm":
        return _lstm_backward(cache, dh, dm, p)
    raise ConfigError(f"unknown cell kind: {kind!r}")
