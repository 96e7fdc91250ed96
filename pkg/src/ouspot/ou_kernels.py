r"""One-step transition samplers and characteristic functions for OU factors.

Processes
---------
* Gaussian OU ``dX = -k_D X dt + sigma dW``.
* Gamma-OU ``gou(k, lam, beta)``: OU driven by a compound Poisson process with
  intensity ``lam`` and ``Exp(beta)`` jumps.  Its law at time ``t`` started at
  ``y0`` has chf

  .. math:: e^{iu y_0 a}\left(\frac{\beta - iua}{\beta - iu}\right)^{\lambda/k},
            \qquad a = e^{-kt}.

* Symmetric bilateral Gamma-OU: OU driven by a compound Poisson process of
  total intensity ``lam`` with centred Laplace jumps ``U - D`` (``U, D`` iid
  ``Exp(beta)``).  This is the difference of two independent ``gou(k, lam/2,
  beta)`` legs, and its chf is

  .. math:: e^{iu y_0 a}\left(\frac{\beta^2 + u^2 a^2}{\beta^2 + u^2}\right)^{\lambda/(2k)}.

  ``lam`` therefore always denotes the *total* jump intensity; each leg of
  the two-leg representation carries ``lam / 2``.

Increment samplers (``y0 = 0``, step ``dt``)
--------------------------------------------
``JUMPTIME``
    Poisson number of jumps at uniform times, each damped to the step end.
``POLYA``
    Polya(``lam/k``, ``1 - a``) mixture of Erlang(``beta / a``) laws.  The
    symmetric variant draws one Polya(``lam/(2k)``, ``1 - a**2``) index and
    two independent Erlang legs.
``RANDOMRATE``
    Poisson number of exponential jumps whose rates ``beta*exp(k dt U)`` are
    random.  In the symmetric variant the up and down legs of a jump share
    the same uniform ``U``.
``EULER``
    At most one jump per step, ``y(1 - k dt) + Bernoulli(lam dt) J``.  Biased
    for any step size; kept only to demonstrate the bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numba import njit, prange

from .errors import ParameterDomainError, StepSizeError
from .variates import (
    RngStream,
    _nb_bernoulli,
    _nb_erlang,
    _nb_exponential,
    _nb_gamma_unit,
    _nb_init,
    _nb_normal,
    _nb_poisson,
    _nb_polya,
    _nb_uniform,
    _stack_state,
    as_seed,
)

__all__ = [
    "GaussianOuParams",
    "GouParams",
    "SymBgouParams",
    "StepwiseIntensity",
    "GouSamplerKind",
    "gaussian_ou_chf",
    "gaussian_ou_step",
    "gou_chf",
    "sym_bgou_chf",
    "euler_step_chf",
    "polya_erlang_mixture_chf",
    "sample_gou_jumptime",
    "sample_gou_polya",
    "sample_gou_randomrate",
    "sample_gou_euler",
    "sample_sym_bgou_jumptime",
    "sample_sym_bgou_polya",
    "sample_sym_bgou_randomrate",
    "gou_step",
    "gou_increments",
    "sym_bgou_increments",
    "simulate_factor",
    "factor_path_moments",
    "seasonal_intensity",
    "intensity_on_grid",
]


class GouSamplerKind(str, Enum):
    JUMPTIME = "jumptime"
    POLYA = "polya"
    RANDOMRATE = "randomrate"
    EULER = "euler"

    @property
    def code(self) -> int:
        return _KIND_CODES[self]

    @property
    def exact(self) -> bool:
        return self is not GouSamplerKind.EULER


_KIND_CODES = {
    GouSamplerKind.JUMPTIME: 0,
    GouSamplerKind.POLYA: 1,
    GouSamplerKind.RANDOMRATE: 2,
    GouSamplerKind.EULER: 3,
}
EXACT_KINDS = (GouSamplerKind.JUMPTIME, GouSamplerKind.POLYA, GouSamplerKind.RANDOMRATE)


@dataclass(frozen=True)
class GaussianOuParams:
    k_D: float
    sigma: float
    x0: float = 0.0

    def __post_init__(self):
        if not self.k_D > 0:
            raise ParameterDomainError(f"k_D must be > 0, got {self.k_D}")
        if not self.sigma >= 0:
            raise ParameterDomainError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class GouParams:
    """Gamma-OU factor ``gou(k, lam, beta)`` started at ``y0``.

    ``beta > 1`` is needed for a finite risk-neutral drift; that is checked
    where the drift is computed, not here.
    """

    k: float
    lam: float
    beta: float
    y0: float = 0.0

    def __post_init__(self):
        if not self.k > 0:
            raise ParameterDomainError(f"k must be > 0, got {self.k}")
        if not self.lam >= 0:
            raise ParameterDomainError(f"lambda must be >= 0, got {self.lam}")
        if not self.beta > 0:
            raise ParameterDomainError(f"beta must be > 0, got {self.beta}")


@dataclass(frozen=True)
class SymBgouParams(GouParams):
    """Symmetric bilateral Gamma-OU; ``lam`` is the total Laplace-jump intensity."""


@dataclass(frozen=True, eq=False)
class StepwiseIntensity:
    """Piecewise-constant intensity ``values[m]`` on ``[grid[m], grid[m+1])``.

    Past the last grid point the last value is held.
    """

    grid: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise ParameterDomainError("intensity grid must be strictly increasing with >= 2 points")
        if values.shape != (grid.size - 1,):
            raise ParameterDomainError("need exactly one intensity value per grid interval")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ParameterDomainError("intensity values must be finite and non-negative")

    def __eq__(self, other):
        if not isinstance(other, StepwiseIntensity):
            return NotImplemented
        return np.array_equal(self.grid, other.grid) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.grid.tobytes(), self.values.tobytes()))

    @classmethod
    def constant(cls, lam: float, t_end: float) -> "StepwiseIntensity":
        return cls(np.array([0.0, float(t_end)]), np.array([float(lam)]))

    def scaled(self, factor: float) -> "StepwiseIntensity":
        return StepwiseIntensity(self.grid, self.values * factor)

    def breakpoints(self) -> np.ndarray:
        return self.grid

    def value_at(self, t: float) -> float:
        i = int(np.searchsorted(self.grid, t, side="right")) - 1
        return float(self.values[min(max(i, 0), self.values.size - 1)])

    def segments(self, t0: float, t1: float):
        """Yield ``(start, end, lam)`` pieces of constant intensity covering ``[t0, t1]``."""
        cuts = self.grid[(self.grid > t0) & (self.grid < t1)]
        edges = np.concatenate(([t0], cuts, [t1]))
        for a, b in zip(edges[:-1], edges[1:]):
            if b > a:
                yield float(a), float(b), self.value_at(a)

    def integral(self, t: float) -> float:
        """Compensator ``Lambda(t)``, the expected number of jumps on ``[0, t]``."""
        return sum((b - a) * lam for a, b, lam in self.segments(float(self.grid[0]), float(t)))


# ---------------------------------------------------------------------------
# Characteristic functions (closed forms; used as oracles and for the drift)
# ---------------------------------------------------------------------------


def gaussian_ou_chf(u, t, params: GaussianOuParams):
    u = np.asarray(u, dtype=complex)
    a = np.exp(-params.k_D * t)
    var = params.sigma**2 * (1.0 - a * a) / (2.0 * params.k_D)
    return np.exp(1j * u * params.x0 * a - 0.5 * u * u * var)


def _gou_chf_core(u, dt, k, lam, beta):
    a = np.exp(-k * dt)
    return ((beta - 1j * u * a) / (beta - 1j * u)) ** (lam / k)


def gou_chf(u, t, params: GouParams):
    """chf of ``Y(t)`` for a ``gou(k, lam, beta)`` started at ``y0``.

    ``u`` may be complex (e.g. ``-1j`` for the exponential moment) as long as
    ``beta - i u`` stays off the negative real axis.
    """
    u = np.asarray(u, dtype=complex)
    a = math.exp(-params.k * t)
    return np.exp(1j * u * params.y0 * a) * _gou_chf_core(u, t, params.k, params.lam, params.beta)


def sym_bgou_chf(u, t, params: SymBgouParams):
    u = np.asarray(u, dtype=complex)
    a = math.exp(-params.k * t)
    b2 = params.beta**2
    core = ((b2 + u * u * a * a) / (b2 + u * u)) ** (params.lam / (2.0 * params.k))
    return np.exp(1j * u * params.y0 * a) * core


def euler_step_chf(u, dt, params: GouParams):
    """chf of one Euler jump increment ``Bernoulli(lam dt) * Exp(beta)``."""
    u = np.asarray(u, dtype=complex)
    b = 1.0 - params.lam * dt
    return (params.beta - 1j * b * u) / (params.beta - 1j * u)


def polya_erlang_mixture_chf(u, a: float, alpha: float, beta: float, terms: int = 300):
    """Truncated Polya-weighted series of Erlang(beta/a) chfs.

    Converges to ``((beta - i a u) / (beta - i u)) ** alpha``.
    """
    u = np.asarray(u, dtype=complex)
    k = np.arange(terms)
    log_w = (
        np.array([math.lgamma(alpha + j) - math.lgamma(alpha) - math.lgamma(j + 1.0) for j in k])
        + alpha * math.log(a)
        + k * math.log1p(-a)
    )
    ratio = beta / (beta - 1j * a * u[..., None])
    return np.sum(np.exp(log_w) * ratio**k, axis=-1)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _nb_gaussian_ou_step(state, k_d, sigma, x_prev, dt):
    a = math.exp(-k_d * dt)
    if sigma == 0.0:
        return x_prev * a
    sd = sigma * math.sqrt((1.0 - a * a) / (2.0 * k_d))
    return x_prev * a + sd * _nb_normal(state)


@njit(cache=True)
def _nb_gou_jumptime(state, k, lam, beta, dt, sort_times):
    n = _nb_poisson(state, lam * dt)
    if n == 0:
        return 0.0
    y = 0.0
    if sort_times:
        taus = np.empty(n)
        for i in range(n):
            taus[i] = dt * _nb_uniform(state)
        taus.sort()
        for i in range(n):
            y += math.exp(-k * (dt - taus[i])) * _nb_exponential(state, beta)
        return y
    for i in range(n):
        tau = dt * _nb_uniform(state)
        y += math.exp(-k * (dt - tau)) * _nb_exponential(state, beta)
    return y


# Below this retained fraction the Polya count (mean ~ 1/a) is replaced by the
# normal limit of its Poisson layer; 1 - a would also round to 1.
_POLYA_LIMIT_A = 1e-12


@njit(cache=True)
def _nb_gou_polya(state, k, lam, beta, dt):
    if lam == 0.0:
        return 0.0
    a = math.exp(-k * dt)
    if a < _POLYA_LIMIT_A:
        # a * Erlang(b) with b ~ Poisson(G (1 - a) / a), G ~ gamma(lam / k)
        m = _nb_gamma_unit(state, lam / k) * (1.0 - a)
        return max(m + math.sqrt(2.0 * m * a) * _nb_normal(state), 0.0) / beta
    b = _nb_polya(state, lam / k, 1.0 - a)
    if b == 0:
        return 0.0
    return _nb_erlang(state, b, beta / a)


@njit(cache=True)
def _nb_gou_randomrate(state, k, lam, beta, dt):
    n = _nb_poisson(state, lam * dt)
    y = 0.0
    for i in range(n):
        rate = beta * math.exp(k * dt * _nb_uniform(state))
        y += _nb_exponential(state, rate)
    return y


@njit(cache=True)
def _nb_gou_euler(state, k, lam, beta, y_prev, dt):
    y = y_prev * (1.0 - k * dt)
    if _nb_bernoulli(state, lam * dt) == 1:
        y += _nb_exponential(state, beta)
    return y


@njit(cache=True)
def _nb_sym_jumptime(state, k, lam, beta, dt, sort_times):
    n = _nb_poisson(state, lam * dt)
    if n == 0:
        return 0.0
    y = 0.0
    if sort_times:
        taus = np.empty(n)
        for i in range(n):
            taus[i] = dt * _nb_uniform(state)
        taus.sort()
        for i in range(n):
            jump = _nb_exponential(state, beta) - _nb_exponential(state, beta)
            y += math.exp(-k * (dt - taus[i])) * jump
        return y
    for i in range(n):
        tau = dt * _nb_uniform(state)
        jump = _nb_exponential(state, beta) - _nb_exponential(state, beta)
        y += math.exp(-k * (dt - tau)) * jump
    return y


@njit(cache=True)
def _nb_sym_polya(state, k, lam, beta, dt):
    if lam == 0.0:
        return 0.0
    a = math.exp(-k * dt)
    if a * a < _POLYA_LIMIT_A:
        # the shared count makes the two Erlang legs a normal variance mixture
        v = _nb_gamma_unit(state, lam / (2.0 * k)) * (1.0 - a * a)
        return math.sqrt(2.0 * v) * _nb_normal(state) / beta
    b = _nb_polya(state, lam / (2.0 * k), 1.0 - a * a)
    if b == 0:
        return 0.0
    rate = beta / a
    return _nb_erlang(state, b, rate) - _nb_erlang(state, b, rate)


@njit(cache=True)
def _nb_sym_randomrate(state, k, lam, beta, dt, shared_rate):
    n = _nb_poisson(state, lam * dt)
    y = 0.0
    for i in range(n):
        rate_up = beta * math.exp(k * dt * _nb_uniform(state))
        rate_dn = rate_up if shared_rate else beta * math.exp(k * dt * _nb_uniform(state))
        y += _nb_exponential(state, rate_up) - _nb_exponential(state, rate_dn)
    return y


@njit(cache=True)
def _nb_sym_euler(state, k, lam, beta, y_prev, dt):
    y = y_prev * (1.0 - k * dt)
    if _nb_bernoulli(state, lam * dt) == 1:
        y += _nb_exponential(state, beta) - _nb_exponential(state, beta)
    return y


@njit(cache=True)
def _nb_kou_jump(state, p, beta_up, beta_dn, damp_rate_scale):
    # damp_rate_scale multiplies both rates (random-rate representation)
    if _nb_uniform(state) < p:
        return _nb_exponential(state, beta_up * damp_rate_scale)
    return -_nb_exponential(state, beta_dn * damp_rate_scale)


@njit(cache=True)
def _nb_kou_increment(state, kind, k, lam, p, beta_up, beta_dn, dt):
    """Single compound Poisson with double-exponential (Kou) jumps."""
    n = _nb_poisson(state, lam * dt)
    y = 0.0
    for i in range(n):
        if kind == 2:
            y += _nb_kou_jump(state, p, beta_up, beta_dn, math.exp(k * dt * _nb_uniform(state)))
        else:
            tau = dt * _nb_uniform(state)
            y += math.exp(-k * (dt - tau)) * _nb_kou_jump(state, p, beta_up, beta_dn, 1.0)
    return y


@njit(cache=True)
def _nb_kou_euler(state, k, lam, p, beta_up, beta_dn, y_prev, dt):
    y = y_prev * (1.0 - k * dt)
    if _nb_bernoulli(state, lam * dt) == 1:
        y += _nb_kou_jump(state, p, beta_up, beta_dn, 1.0)
    return y


@njit(cache=True)
def _nb_gou_increment(state, kind, k, lam, beta, dt, sort_times):
    if kind == 0:
        return _nb_gou_jumptime(state, k, lam, beta, dt, sort_times)
    if kind == 1:
        return _nb_gou_polya(state, k, lam, beta, dt)
    return _nb_gou_randomrate(state, k, lam, beta, dt)


@njit(cache=True)
def _nb_sym_increment(state, kind, k, lam, beta, dt, sort_times, shared_rate):
    if kind == 0:
        return _nb_sym_jumptime(state, k, lam, beta, dt, sort_times)
    if kind == 1:
        return _nb_sym_polya(state, k, lam, beta, dt)
    return _nb_sym_randomrate(state, k, lam, beta, dt, shared_rate)


@njit(cache=True)
def _nb_factor_step(state, symmetric, kind, k, lam, beta, y_prev, dt, sort_times, shared_rate):
    """Advance one (G)OU jump factor by ``dt`` with constant intensity ``lam``."""
    if kind == 3:
        if symmetric:
            return _nb_sym_euler(state, k, lam, beta, y_prev, dt)
        return _nb_gou_euler(state, k, lam, beta, y_prev, dt)
    decayed = y_prev * math.exp(-k * dt)
    if symmetric:
        return decayed + _nb_sym_increment(state, kind, k, lam, beta, dt, sort_times, shared_rate)
    return decayed + _nb_gou_increment(state, kind, k, lam, beta, dt, sort_times)


@njit(cache=True, parallel=True)
def _nb_factor_chain(seed, first_stream, symmetric, kind, k, beta, y0, dts, lams,
                     sort_times, shared_rate, out):
    for i in prange(out.shape[0]):
        state = _stack_state()
        _nb_init(state, seed, first_stream + np.uint64(i))
        y = y0
        for m in range(dts.shape[0]):
            y = _nb_factor_step(state, symmetric, kind, k, lams[m], beta, y, dts[m],
                                sort_times, shared_rate)
        out[i] = y


@njit(cache=True, parallel=True)
def _nb_factor_moments(seed, symmetric, kind, k, beta, y0, dts, lams, n_paths, n_chunks,
                       sums, sqsums):
    # per-chunk partial sums keep the reduction deterministic
    chunk = (n_paths + n_chunks - 1) // n_chunks
    for c in prange(n_chunks):
        state = _stack_state()
        lo = c * chunk
        hi = min(n_paths, lo + chunk)
        for i in range(lo, hi):
            _nb_init(state, seed, np.uint64(i))
            y = y0
            for m in range(dts.shape[0]):
                y = _nb_factor_step(state, symmetric, kind, k, lams[m], beta, y, dts[m],
                                    False, True)
                sums[c, m] += y
                sqsums[c, m] += y * y


# ---------------------------------------------------------------------------
# Python surface: scalar ops on an RngStream
# ---------------------------------------------------------------------------


def _check_dt(dt: float) -> float:
    dt = float(dt)
    if not dt > 0:
        raise ParameterDomainError(f"dt must be > 0, got {dt}")
    return dt


def gaussian_ou_step(params: GaussianOuParams, x_prev: float, dt: float, rng: RngStream) -> float:
    """Exact OU transition ``x_prev e^{-k_D dt} + N(0, sigma^2 (1-e^{-2 k_D dt}) / (2 k_D))``."""
    dt = _check_dt(dt)
    return float(_nb_gaussian_ou_step(rng.state, params.k_D, params.sigma, float(x_prev), dt))


def sample_gou_jumptime(params: GouParams, dt: float, rng: RngStream, sort_times: bool = False) -> float:
    """GOU increment from explicit jump times.

    ``sort_times`` sorts the jump times first, exactly as the textbook
    algorithm does; the sum is permutation invariant so the law is the same.
    """
    dt = _check_dt(dt)
    return float(_nb_gou_jumptime(rng.state, params.k, params.lam, params.beta, dt, sort_times))


def sample_gou_polya(params: GouParams, dt: float, rng: RngStream) -> float:
    dt = _check_dt(dt)
    return float(_nb_gou_polya(rng.state, params.k, params.lam, params.beta, dt))


def sample_gou_randomrate(params: GouParams, dt: float, rng: RngStream) -> float:
    dt = _check_dt(dt)
    return float(_nb_gou_randomrate(rng.state, params.k, params.lam, params.beta, dt))


def _check_euler(params: GouParams, dt: float) -> None:
    if params.lam * dt >= 1.0:
        raise StepSizeError(f"Euler scheme needs lambda*dt < 1, got {params.lam * dt:.4g}")


def sample_gou_euler(params: GouParams, y_prev: float, dt: float, rng: RngStream) -> float:
    """Biased one-jump-per-step Euler update; for bias demonstrations only."""
    dt = _check_dt(dt)
    _check_euler(params, dt)
    return float(_nb_gou_euler(rng.state, params.k, params.lam, params.beta, float(y_prev), dt))


def sample_sym_bgou_jumptime(params: SymBgouParams, dt: float, rng: RngStream,
                             sort_times: bool = False) -> float:
    dt = _check_dt(dt)
    return float(_nb_sym_jumptime(rng.state, params.k, params.lam, params.beta, dt, sort_times))


def sample_sym_bgou_polya(params: SymBgouParams, dt: float, rng: RngStream) -> float:
    dt = _check_dt(dt)
    return float(_nb_sym_polya(rng.state, params.k, params.lam, params.beta, dt))


def sample_sym_bgou_randomrate(params: SymBgouParams, dt: float, rng: RngStream,
                               shared_rate: bool = True) -> float:
    """Random-rate Laplace increment.

    ``shared_rate=False`` draws separate uniforms for the up and down legs.
    That variant has the wrong law and exists only so tests can show it.
    """
    dt = _check_dt(dt)
    return float(_nb_sym_randomrate(rng.state, params.k, params.lam, params.beta, dt, shared_rate))


def gou_step(kind: GouSamplerKind | str, params: GouParams, y_prev: float, dt: float,
             rng: RngStream) -> float:
    """``y_prev e^{-k dt}`` plus a fresh increment (Euler applies its own update)."""
    kind = GouSamplerKind(kind)
    dt = _check_dt(dt)
    if kind is GouSamplerKind.EULER:
        _check_euler(params, dt)
    return float(_nb_factor_step(rng.state, isinstance(params, SymBgouParams), kind.code,
                                 params.k, params.lam, params.beta, float(y_prev), dt,
                                 False, True))


# ---------------------------------------------------------------------------
# Batch drivers: one rng stream per sample
# ---------------------------------------------------------------------------


def gou_increments(kind: GouSamplerKind | str, params: GouParams, dt: float, n: int, *,
                   seed: int, first_stream: int = 0, sort_times: bool = False) -> np.ndarray:
    """``n`` independent one-step increments (``y0`` ignored), stream ``i`` per sample."""
    return simulate_factor(kind, GouParams(params.k, params.lam, params.beta), [dt], n,
                           seed=seed, first_stream=first_stream, sort_times=sort_times)


def sym_bgou_increments(kind: GouSamplerKind | str, params: SymBgouParams, dt: float, n: int, *,
                        seed: int, first_stream: int = 0, sort_times: bool = False,
                        shared_rate: bool = True) -> np.ndarray:
    return simulate_factor(kind, SymBgouParams(params.k, params.lam, params.beta), [dt], n,
                           seed=seed, first_stream=first_stream, sort_times=sort_times,
                           shared_rate=shared_rate)


def _step_inputs(params, dts, intensity):
    dts = np.asarray(dts, dtype=float)
    if dts.ndim != 1 or dts.size == 0 or np.any(dts <= 0):
        raise ParameterDomainError("time steps must be a non-empty vector of positive values")
    if intensity is None:
        lams = np.full(dts.size, float(params.lam))
    else:
        # left-endpoint value of the stepwise intensity on each step
        edges = np.concatenate(([0.0], np.cumsum(dts)))
        lams = np.array([intensity.value_at(t) for t in edges[:-1]])
    return dts, lams


def simulate_factor(kind: GouSamplerKind | str, params: GouParams, dts, n: int, *, seed: int,
                    first_stream: int = 0, intensity: StepwiseIntensity | None = None,
                    sort_times: bool = False, shared_rate: bool = True) -> np.ndarray:
    """Terminal value ``Y(sum(dts))`` of ``n`` independent chained factor paths.

    ``params`` may be :class:`GouParams` or :class:`SymBgouParams`.  With an
    ``intensity`` the jump rate on each step is its value at the step start.
    """
    kind = GouSamplerKind(kind)
    dts, lams = _step_inputs(params, dts, intensity)
    if kind is GouSamplerKind.EULER and np.any(lams * dts >= 1.0):
        raise StepSizeError("Euler scheme needs lambda*dt < 1 on every step")
    out = np.empty(int(n))
    _nb_factor_chain(as_seed(seed), np.uint64(first_stream), isinstance(params, SymBgouParams),
                     kind.code, float(params.k), float(params.beta), float(params.y0), dts,
                     lams, bool(sort_times), bool(shared_rate), out)
    return out


def factor_path_moments(kind: GouSamplerKind | str, params: GouParams, dts, n: int, *,
                        seed: int, n_chunks: int = 64):
    """Pathwise mean and variance of ``Y(t_m)`` on every grid point, without storing paths."""
    kind = GouSamplerKind(kind)
    dts, lams = _step_inputs(params, dts, None)
    if kind is GouSamplerKind.EULER and np.any(lams * dts >= 1.0):
        raise StepSizeError("Euler scheme needs lambda*dt < 1 on every step")
    sums = np.zeros((n_chunks, dts.size))
    sqsums = np.zeros((n_chunks, dts.size))
    _nb_factor_moments(as_seed(seed), isinstance(params, SymBgouParams), kind.code,
                       float(params.k), float(params.beta), float(params.y0), dts, lams,
                       int(n), int(n_chunks), sums, sqsums)
    mean = sums.sum(axis=0) / n
    var = (sqsums.sum(axis=0) - n * mean**2) / (n - 1)
    return mean, var


# ---------------------------------------------------------------------------
# Time-dependent intensity
# ---------------------------------------------------------------------------


def seasonal_intensity(t, theta: float, omega: float, tau: float):
    """``2 theta / (1 + |sin(pi omega (t - tau))|)``."""
    return 2.0 * theta / (1.0 + np.abs(np.sin(np.pi * omega * (np.asarray(t, dtype=float) - tau))))


def intensity_on_grid(theta: float, omega: float, tau: float, grid) -> StepwiseIntensity:
    """Step-wise approximation taking the intensity at the left end of each interval."""
    if not theta > 0 or not omega > 0:
        raise ParameterDomainError("theta and omega must be > 0")
    times = np.asarray(getattr(grid, "times", grid), dtype=float)
    return StepwiseIntensity(times, seasonal_intensity(times[:-1], theta, omega, tau))
