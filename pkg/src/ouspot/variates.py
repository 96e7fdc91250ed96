"""Seed-reproducible random variates.

Every stream is a Philox4x64-10 counter-based generator keyed by the master
seed, with the stream id occupying the third counter word.  Two streams with
the same ``(master_seed, stream_id)`` produce bit-identical sequences, and
streams never overlap as long as fewer than 2**64 blocks are drawn from one
of them.  The raw output is bit-compatible with ``numpy.random.Philox`` built
with ``key=[seed, 0]`` and ``counter=[0, 0, stream_id, 0]``.

Simulation kernels allocate one stream per path, which keeps results
independent of the number of worker threads.

All samplers below are exact: inversion, Box-Muller, Marsaglia-Tsang and
Hoermann's PTRS rejection.  The ``_nb_*`` functions are numba kernels taking
the raw ``uint64`` state vector; the ``sample_*`` functions are the public,
validated entry points operating on :class:`RngStream`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from llvmlite import ir
from numba import carray, njit, prange, types
from numba.core import cgutils
from numba.extending import intrinsic

from .errors import ParameterDomainError

__all__ = [
    "RngStream",
    "PolyaParams",
    "sample_uniform",
    "sample_normal",
    "sample_exponential",
    "sample_bernoulli",
    "sample_poisson",
    "sample_gamma",
    "sample_erlang",
    "sample_polya",
    "sample_polya_gamma_poisson",
    "draw_batch",
    "DISTRIBUTIONS",
]

STATE_SIZE = 11
_POS = 6
_BUF = 7

_MASK32 = np.uint64(0xFFFFFFFF)
_SH32 = np.uint64(32)
_SH11 = np.uint64(11)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)
_PHILOX_M0 = np.uint64(0xD2E7470EE14C6C93)
_PHILOX_M1 = np.uint64(0xCA5A826395121157)
_PHILOX_W0 = np.uint64(0x9E3779B97F4A7C15)
_PHILOX_W1 = np.uint64(0xBB67AE8584CAA73B)
_TWO_M53 = 2.0 ** -53
_HALF_ULP = 2.0 ** -54

# Sequential-search inversion is used below these limits, rejection above.
_POISSON_INVERSION_MAX = 10.0
_POLYA_INVERSION_MAX_MEAN = 10.0
_POLYA_INVERSION_MAX_P = 0.5
_INVERSION_RESTART = 400


# ---------------------------------------------------------------------------
# Philox4x64-10
# ---------------------------------------------------------------------------


@intrinsic
def _mulhilo(typingctx, a, b):
    """Full 64x64 -> 128 bit product as ``(hi, lo)`` through an LLVM i128 multiply."""
    sig = types.UniTuple(types.uint64, 2)(types.uint64, types.uint64)

    def codegen(context, builder, signature, args):
        i128 = ir.IntType(128)
        prod = builder.mul(builder.zext(args[0], i128), builder.zext(args[1], i128))
        hi = builder.trunc(builder.lshr(prod, ir.Constant(i128, 64)), ir.IntType(64))
        lo = builder.trunc(prod, ir.IntType(64))
        return context.make_tuple(builder, signature.return_type, (hi, lo))

    return sig, codegen


@intrinsic
def _stack_state_ptr(typingctx):
    sig = types.CPointer(types.uint64)()

    def codegen(context, builder, signature, args):
        return cgutils.alloca_once(builder, context.get_value_type(types.uint64),
                                   size=context.get_constant(types.intp, STATE_SIZE))

    return sig, codegen


@njit(inline="always")
def _stack_state():
    """Generator state on the caller's stack.

    A heap array would be reference counted with atomic ops on every call
    that receives it, which dominates the cost of a draw.  Inlined at the
    numba IR level so the storage belongs to the calling kernel's frame.
    """
    return carray(_stack_state_ptr(), STATE_SIZE)


@njit(cache=True)
def _mulhilo_reference(a, b):
    # portable 32-bit-limb version, kept as a cross-check for the intrinsic
    a_lo = a & _MASK32
    a_hi = a >> _SH32
    b_lo = b & _MASK32
    b_hi = b >> _SH32
    ll = a_lo * b_lo
    hl = a_hi * b_lo
    lh = a_lo * b_hi
    hh = a_hi * b_hi
    cross = (ll >> _SH32) + (hl & _MASK32) + lh
    hi = hh + (hl >> _SH32) + (cross >> _SH32)
    return hi, a * b


@njit(cache=True)
def _philox_refill(state):
    # counter is incremented before each block, as numpy does
    state[2] += _ONE
    if state[2] == _ZERO:
        state[3] += _ONE
    c0 = state[2]
    c1 = state[3]
    c2 = state[4]
    c3 = state[5]
    k0 = state[0]
    k1 = state[1]
    for r in range(10):
        if r > 0:
            k0 += _PHILOX_W0
            k1 += _PHILOX_W1
        hi0, lo0 = _mulhilo(_PHILOX_M0, c0)
        hi1, lo1 = _mulhilo(_PHILOX_M1, c2)
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
    state[_BUF] = c0
    state[_BUF + 1] = c1
    state[_BUF + 2] = c2
    state[_BUF + 3] = c3
    state[_POS] = _ZERO


@njit(cache=True)
def _nb_init(state, seed, stream_id):
    state[0] = seed
    state[1] = _ZERO
    state[2] = _ZERO
    state[3] = _ZERO
    state[4] = stream_id
    state[5] = _ZERO
    state[_POS] = np.uint64(4)


@njit(cache=True)
def _nb_next_u64(state):
    if state[_POS] >= np.uint64(4):
        _philox_refill(state)
    pos = state[_POS]
    state[_POS] = pos + _ONE
    return state[_BUF + np.int64(pos)]


@njit(cache=True)
def _nb_uniform(state):
    """Uniform on the open interval (0, 1) with 53-bit resolution."""
    return np.float64(_nb_next_u64(state) >> _SH11) * _TWO_M53 + _HALF_ULP


# ---------------------------------------------------------------------------
# Continuous laws
# ---------------------------------------------------------------------------


@njit(cache=True)
def _nb_normal(state):
    u1 = _nb_uniform(state)
    u2 = _nb_uniform(state)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@njit(cache=True)
def _nb_exponential(state, rate):
    return -math.log(_nb_uniform(state)) / rate


@njit(cache=True)
def _nb_gamma_unit(state, shape):
    # Marsaglia-Tsang; shapes below one are boosted by U**(1/shape)
    boost = shape < 1.0
    d = (shape + 1.0 if boost else shape) - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = _nb_normal(state)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = _nb_uniform(state)
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2 or math.log(u) < 0.5 * x2 + d * (1.0 - v + math.log(v)):
            break
    if boost:
        return d * v * _nb_uniform(state) ** (1.0 / shape)
    return d * v


@njit(cache=True)
def _nb_gamma(state, shape, rate):
    return _nb_gamma_unit(state, shape) / rate


@njit(cache=True)
def _nb_erlang(state, shape, rate):
    """Sum of ``shape`` exponentials; shape 0 gives the point mass at 0."""
    if shape <= 0:
        return 0.0
    if shape <= 16:
        prod = 1.0
        for _ in range(shape):
            prod *= _nb_uniform(state)
        return -math.log(prod) / rate
    return _nb_gamma_unit(state, np.float64(shape)) / rate


# ---------------------------------------------------------------------------
# Discrete laws
# ---------------------------------------------------------------------------


@njit(cache=True)
def _nb_bernoulli(state, p):
    return 1 if _nb_uniform(state) < p else 0


@njit(cache=True)
def _nb_poisson_inversion(state, mean):
    p0 = math.exp(-mean)
    while True:
        u = _nb_uniform(state)
        k = 0
        pk = p0
        cdf = p0
        while u > cdf and k < _INVERSION_RESTART:
            k += 1
            pk *= mean / k
            cdf += pk
        if k < _INVERSION_RESTART:
            return k


@njit(cache=True)
def _nb_poisson_ptrs(state, lam):
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = _nb_uniform(state) - 0.5
        v = _nb_uniform(state)
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return np.int64(k)
        if k < 0.0 or (us < 0.013 and v > us):
            continue
        lhs = math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)
        rhs = -lam + k * loglam - math.lgamma(k + 1.0)
        if lhs <= rhs:
            return np.int64(k)


@njit(cache=True)
def _nb_poisson(state, mean):
    if mean <= 0.0:
        return 0
    if mean < _POISSON_INVERSION_MAX:
        return _nb_poisson_inversion(state, mean)
    return _nb_poisson_ptrs(state, mean)


@njit(cache=True)
def _nb_polya_gamma_poisson(state, alpha, p):
    """Negative binomial as Poisson(G), G ~ gamma(alpha, rate=(1-p)/p)."""
    if p <= 0.0:
        return 0
    g = _nb_gamma_unit(state, alpha) * p / (1.0 - p)
    return _nb_poisson(state, g)


@njit(cache=True)
def _nb_polya_inversion(state, alpha, p):
    p0 = math.exp(alpha * math.log1p(-p))
    while True:
        u = _nb_uniform(state)
        k = 0
        pk = p0
        cdf = p0
        while u > cdf and k < _INVERSION_RESTART:
            pk *= p * (alpha + k) / (k + 1.0)
            k += 1
            cdf += pk
        if k < _INVERSION_RESTART:
            return k


@njit(cache=True)
def _nb_polya(state, alpha, p):
    """P{S=k} = C(alpha+k-1, k) (1-p)**alpha p**k for real alpha > 0."""
    if p <= 0.0:
        return 0
    if p <= _POLYA_INVERSION_MAX_P and alpha * p / (1.0 - p) < _POLYA_INVERSION_MAX_MEAN:
        return _nb_polya_inversion(state, alpha, p)
    return _nb_polya_gamma_poisson(state, alpha, p)


# ---------------------------------------------------------------------------
# Batch drivers
# ---------------------------------------------------------------------------

DISTRIBUTIONS = {
    "uniform": 0,
    "normal": 1,
    "exponential": 2,
    "gamma": 3,
    "poisson": 4,
    "bernoulli": 5,
    "erlang": 6,
    "polya": 7,
    "polya_gamma_poisson": 8,
}
_DISCRETE = {"poisson", "bernoulli", "polya", "polya_gamma_poisson"}


@njit(cache=True)
def _nb_draw(state, kind, a, b):
    if kind == 0:
        return _nb_uniform(state)
    if kind == 1:
        return _nb_normal(state)
    if kind == 2:
        return _nb_exponential(state, a)
    if kind == 3:
        return _nb_gamma(state, a, b)
    if kind == 4:
        return np.float64(_nb_poisson(state, a))
    if kind == 5:
        return np.float64(_nb_bernoulli(state, a))
    if kind == 6:
        return _nb_erlang(state, np.int64(a), b)
    if kind == 7:
        return np.float64(_nb_polya(state, a, b))
    return np.float64(_nb_polya_gamma_poisson(state, a, b))


@njit(cache=True)
def _nb_fill(state, kind, a, b, out):
    local = _stack_state()
    local[:] = state
    for i in range(out.shape[0]):
        out[i] = _nb_draw(local, kind, a, b)
    state[:] = local


@njit(cache=True, parallel=True)
def _nb_fill_streams(seed, first_stream, kind, a, b, out):
    for i in prange(out.shape[0]):
        state = _stack_state()
        _nb_init(state, seed, first_stream + np.uint64(i))
        out[i] = _nb_draw(state, kind, a, b)


# ---------------------------------------------------------------------------
# Python surface
# ---------------------------------------------------------------------------


def as_seed(seed: int) -> np.uint64:
    """Map any Python int onto the 64-bit key space."""
    return np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)


class RngStream:
    """One reproducible variate stream identified by ``(master_seed, stream_id)``.

    The stream is a plain value object; it must not be shared between threads.
    """

    def __init__(self, master_seed: int, stream_id: int = 0):
        if stream_id < 0:
            raise ParameterDomainError("stream_id must be non-negative")
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        self.state = np.empty(STATE_SIZE, np.uint64)
        _nb_init(self.state, as_seed(master_seed), np.uint64(stream_id))

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id})"

    def next_u64(self) -> int:
        return int(_nb_next_u64(self.state))

    def uniform(self) -> float:
        return float(_nb_uniform(self.state))

    def normal(self) -> float:
        return float(_nb_normal(self.state))

    def draw(self, dist: str, n: int, a: float = 0.0, b: float = 0.0) -> np.ndarray:
        """Draw ``n`` consecutive variates of ``dist`` from this stream."""
        _check_params(dist, a, b)
        out = np.empty(int(n), np.float64)
        _nb_fill(self.state, DISTRIBUTIONS[dist], float(a), float(b), out)
        return out.astype(np.int64) if dist in _DISCRETE else out


def draw_batch(dist: str, n: int, a: float = 0.0, b: float = 0.0, *,
               seed: int, first_stream: int = 0) -> np.ndarray:
    """One variate from each of the streams ``first_stream .. first_stream+n-1``."""
    _check_params(dist, a, b)
    out = np.empty(int(n), np.float64)
    _nb_fill_streams(as_seed(seed), np.uint64(first_stream), DISTRIBUTIONS[dist],
                     float(a), float(b), out)
    return out.astype(np.int64) if dist in _DISCRETE else out


def _check_params(dist: str, a: float, b: float) -> None:
    if dist not in DISTRIBUTIONS:
        raise ParameterDomainError(f"unknown distribution {dist!r}")
    if dist == "exponential" and not a > 0:
        raise ParameterDomainError("exponential rate must be > 0")
    if dist == "gamma" and not (a > 0 and b > 0):
        raise ParameterDomainError("gamma shape and rate must be > 0")
    if dist == "poisson" and not a >= 0:
        raise ParameterDomainError("poisson mean must be >= 0")
    if dist == "bernoulli" and not 0 <= a <= 1:
        raise ParameterDomainError("bernoulli probability must lie in [0, 1]")
    if dist == "erlang" and not (a >= 1 and float(a).is_integer() and b > 0):
        raise ParameterDomainError("erlang needs an integer shape >= 1 and rate > 0")
    if dist in ("polya", "polya_gamma_poisson"):
        PolyaParams(a, b)


@dataclass(frozen=True)
class PolyaParams:
    """Negative binomial law with real shape ``alpha`` and success probability ``p``."""

    alpha: float
    p: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ParameterDomainError(f"polya alpha must be > 0, got {self.alpha}")
        if not 0 <= self.p < 1:
            raise ParameterDomainError(f"polya p must lie in [0, 1), got {self.p}")


def sample_uniform(rng: RngStream) -> float:
    return rng.uniform()


def sample_normal(rng: RngStream) -> float:
    return rng.normal()


def sample_exponential(rate: float, rng: RngStream) -> float:
    _check_params("exponential", rate, 0.0)
    return float(_nb_exponential(rng.state, float(rate)))


def sample_bernoulli(p: float, rng: RngStream) -> int:
    _check_params("bernoulli", p, 0.0)
    return int(_nb_bernoulli(rng.state, float(p)))


def sample_poisson(mean: float, rng: RngStream) -> int:
    _check_params("poisson", mean, 0.0)
    return int(_nb_poisson(rng.state, float(mean)))


def sample_gamma(shape: float, rate: float, rng: RngStream) -> float:
    _check_params("gamma", shape, rate)
    return float(_nb_gamma(rng.state, float(shape), float(rate)))


def sample_erlang(shape: int, rate: float, rng: RngStream) -> float:
    """Erlang(shape, rate); shape 0 is rejected (callers treat it as the value 0)."""
    _check_params("erlang", shape, rate)
    return float(_nb_erlang(rng.state, int(shape), float(rate)))


def sample_polya(params: PolyaParams, rng: RngStream) -> int:
    """Polya (negative binomial) variate for real ``alpha``.

    Small-mean laws are drawn by inversion of the pmf recursion, the rest as a
    gamma-mixed Poisson.  Both routes are exact.
    """
    return int(_nb_polya(rng.state, float(params.alpha), float(params.p)))


def sample_polya_gamma_poisson(params: PolyaParams, rng: RngStream) -> int:
    return int(_nb_polya_gamma_poisson(rng.state, float(params.alpha), float(params.p)))
