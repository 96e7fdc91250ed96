r"""Spot-price models and the path engine.

The spot is

.. math:: S(t) = F(0,t)\, e^{h(t) + X(t) + Y(t)}

with ``X`` a Gaussian OU factor and ``Y`` a jump factor of one of three
kinds: double-exponential (Kou) jumps with a single intensity, two
independent GOU legs with their own rates, or a symmetric Laplace-jump factor
whose intensity may vary in time.  Every jump factor can be written as
``Y1 - Y2`` with independent GOU legs, which is how the drift and the default
simulation route are built.

``h(t) = -log E[exp(X(t) + Y(t))]`` makes ``E[S(t)] = F(0,t)``.  Initial
factor levels enter ``h`` through the chf phase terms, so ``S(0) = F(0,0)``
for any ``x0``/``y0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Union

import numba
import numpy as np
from numba import njit, prange

from .errors import DriftDivergenceError, ParameterDomainError, StepSizeError
from .ou_kernels import (
    GaussianOuParams,
    GouParams,
    GouSamplerKind,
    StepwiseIntensity,
    _nb_factor_step,
    _nb_gaussian_ou_step,
    _nb_kou_euler,
    _nb_kou_increment,
    gaussian_ou_chf,
    gou_chf,
    seasonal_intensity,
)
from .variates import _nb_init, _nb_poisson, _stack_state, as_seed

__all__ = [
    "ForwardCurve",
    "TimeGrid",
    "SeasonalIntensity",
    "KouJumps",
    "TwoSidedJumps",
    "LaplaceJumps",
    "MarketModel",
    "PathBatch",
    "drift_h_generic",
    "drift_h_closed",
    "drift_table",
    "simulate_paths",
    "set_workers",
    "jump_counts",
    "expected_jump_count",
]

DAYS_PER_YEAR = 365


# ---------------------------------------------------------------------------
# Curves, grids, intensities
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ForwardCurve:
    """Forward curve ``t -> F(0, t)``: flat, or a step function on ``times``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if times.shape != values.shape or times.size == 0:
            raise ParameterDomainError("forward curve needs matching, non-empty times and values")
        if np.any(np.diff(times) <= 0):
            raise ParameterDomainError("forward curve times must be strictly increasing")
        if np.any(values <= 0):
            raise ParameterDomainError("forward prices must be positive")

    def __eq__(self, other):
        if not isinstance(other, ForwardCurve):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.times.tobytes(), self.values.tobytes()))

    @classmethod
    def flat(cls, level: float) -> "ForwardCurve":
        return cls(np.array([0.0]), np.array([float(level)]))

    @property
    def is_flat(self) -> bool:
        return self.values.size == 1

    def __call__(self, t):
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        return self.values[np.clip(idx, 0, self.values.size - 1)]


@dataclass(frozen=True, eq=False)
class TimeGrid:
    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        if times.ndim != 1 or times.size < 2:
            raise ParameterDomainError("a time grid needs at least two points")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ParameterDomainError("time grid must start at 0 and be strictly increasing")

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return np.array_equal(self.times, other.times)

    def __hash__(self):
        return hash(self.times.tobytes())

    @classmethod
    def uniform(cls, horizon: float, steps: int) -> "TimeGrid":
        return cls(np.linspace(0.0, float(horizon), int(steps) + 1))

    @classmethod
    def daily(cls, horizon: float = 1.0) -> "TimeGrid":
        return cls.uniform(horizon, round(horizon * DAYS_PER_YEAR))

    @property
    def M(self) -> int:
        return self.times.size - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def dts(self) -> np.ndarray:
        return np.diff(self.times)


@dataclass(frozen=True)
class SeasonalIntensity:
    """``2 theta / (1 + |sin(pi omega (t - tau))|)`` held constant on steps of ``step`` years."""

    theta: float
    omega: float
    tau: float
    step: float = 1.0 / DAYS_PER_YEAR

    def __post_init__(self):
        if not (self.theta > 0 and self.omega > 0 and self.step > 0):
            raise ParameterDomainError("theta, omega and step must be > 0")

    def __call__(self, t):
        return seasonal_intensity(t, self.theta, self.omega, self.tau)

    def stepwise(self, t_end: float) -> StepwiseIntensity:
        n = max(1, math.ceil(t_end / self.step - 1e-9))
        grid = np.arange(n + 1) * self.step
        return StepwiseIntensity(grid, self(grid[:-1]))


Intensity = Union[float, StepwiseIntensity, SeasonalIntensity]


def _pieces(lam: Intensity, t_end: float):
    """``(start, end, value)`` arrays of constant intensity covering ``[0, t_end]``."""
    if isinstance(lam, SeasonalIntensity):
        lam = lam.stepwise(t_end)
    if isinstance(lam, StepwiseIntensity):
        edges = lam.grid[(lam.grid > 0) & (lam.grid < t_end)]
        starts = np.concatenate(([0.0], edges))
        ends = np.concatenate((edges, [t_end]))
        values = np.array([lam.value_at(s) for s in starts])
        return starts, ends, values
    return np.array([0.0]), np.array([float(t_end)]), np.array([float(lam)])


def _scale_intensity(lam: Intensity, factor: float) -> Intensity:
    if isinstance(lam, SeasonalIntensity):
        return SeasonalIntensity(lam.theta * factor, lam.omega, lam.tau, lam.step)
    if isinstance(lam, StepwiseIntensity):
        return lam.scaled(factor)
    return float(lam) * factor


def _intensity_ok(lam: Intensity) -> bool:
    return isinstance(lam, (StepwiseIntensity, SeasonalIntensity)) or lam >= 0


# ---------------------------------------------------------------------------
# Jump specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Leg:
    """One GOU leg entering the spot exponent with ``sign``."""

    k: float
    beta: float
    y0: float
    sign: float
    lam: Intensity


@dataclass(frozen=True)
class KouJumps:
    """Single-intensity factor with double-exponential jumps.

    Up-jumps ``Exp(beta1)`` with probability ``p``, down-jumps ``Exp(beta2)``
    otherwise; equivalently two GOU legs with intensities ``p lam`` and
    ``(1-p) lam``.
    """

    k: float
    lam: float
    p: float
    beta1: float
    beta2: float
    y0: float = 0.0
    case = 1

    def __post_init__(self):
        if not (self.k > 0 and self.lam >= 0 and self.beta1 > 0 and self.beta2 > 0):
            raise ParameterDomainError("Kou jumps need k > 0, lam >= 0, betas > 0")
        if not 0 <= self.p <= 1:
            raise ParameterDomainError(f"p must lie in [0, 1], got {self.p}")

    def legs(self):
        return (_Leg(self.k, self.beta1, self.y0, 1.0, self.p * self.lam),
                _Leg(self.k, self.beta2, 0.0, -1.0, (1.0 - self.p) * self.lam))


@dataclass(frozen=True)
class TwoSidedJumps:
    """Two independent GOU legs ``Y1 - Y2`` with their own rates and intensities."""

    k1: float
    k2: float
    lam1: float
    lam2: float
    beta1: float
    beta2: float
    y1_0: float = 0.0
    y2_0: float = 0.0
    case = 2

    def __post_init__(self):
        GouParams(self.k1, self.lam1, self.beta1)
        GouParams(self.k2, self.lam2, self.beta2)

    def legs(self):
        return (_Leg(self.k1, self.beta1, self.y1_0, 1.0, self.lam1),
                _Leg(self.k2, self.beta2, self.y2_0, -1.0, self.lam2))


@dataclass(frozen=True)
class LaplaceJumps:
    """Symmetric factor with centred Laplace jumps of total intensity ``lam``.

    ``lam`` may be a constant, a :class:`StepwiseIntensity` or a
    :class:`SeasonalIntensity`.  Each GOU leg of the two-leg representation
    carries half of it.
    """

    k: float
    beta: float
    lam: Intensity
    y0: float = 0.0
    case = 3

    def __post_init__(self):
        if not (self.k > 0 and self.beta > 0 and _intensity_ok(self.lam)):
            raise ParameterDomainError("Laplace jumps need k > 0, beta > 0, lam >= 0")

    def legs(self):
        half = _scale_intensity(self.lam, 0.5)
        return (_Leg(self.k, self.beta, self.y0, 1.0, half),
                _Leg(self.k, self.beta, 0.0, -1.0, half))


JumpSpec = Union[KouJumps, TwoSidedJumps, LaplaceJumps]

_ROUTES = {
    KouJumps: ("legs", "kou"),
    TwoSidedJumps: ("legs",),
    LaplaceJumps: ("symmetric", "legs"),
}


@dataclass(frozen=True)
class MarketModel:
    """Gaussian-OU diffusion plus one jump factor on a forward curve.

    ``route`` picks how the jump factor is simulated: ``"legs"`` (two GOU
    legs, default for Kou and two-sided jumps), ``"kou"`` (single compound
    Poisson with mixture jumps) or ``"symmetric"`` (combined Laplace-jump
    samplers, default for Laplace jumps).
    """

    diffusion: GaussianOuParams
    jumps: JumpSpec
    forward: ForwardCurve = field(default_factory=lambda: ForwardCurve.flat(22.0))
    sampler: GouSamplerKind = GouSamplerKind.POLYA
    route: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "sampler", GouSamplerKind(self.sampler))
        routes = _ROUTES[type(self.jumps)]
        if self.route is None:
            object.__setattr__(self, "route", routes[0])
        elif self.route not in routes:
            raise ParameterDomainError(
                f"route {self.route!r} not available for {type(self.jumps).__name__}; use one of {routes}")
        if self.route == "kou" and self.sampler is GouSamplerKind.POLYA:
            raise ParameterDomainError("the single Kou route has no Polya sampler; use route='legs'")

    @property
    def case(self) -> int:
        return self.jumps.case

    def with_sampler(self, sampler, route: str | None = None) -> "MarketModel":
        return MarketModel(self.diffusion, self.jumps, self.forward, GouSamplerKind(sampler),
                           route if route is not None else self.route)


# ---------------------------------------------------------------------------
# Risk-neutral drift
# ---------------------------------------------------------------------------


def _check_drift_domain(model: MarketModel) -> None:
    for leg in model.jumps.legs():
        if leg.beta <= 1.0:
            raise DriftDivergenceError(
                f"jump rate beta={leg.beta} <= 1: E[exp(Y)] is infinite and h(t) undefined")


def drift_h_generic(model: MarketModel, t: float) -> float:
    """``h(t) = -log phi_H(-i, t)`` from the factor chf evaluators."""
    _check_drift_domain(model)
    t = float(t)
    if t <= 0.0:
        return -(model.diffusion.x0 + sum(l.sign * l.y0 for l in model.jumps.legs()))
    u = -1j
    phi = complex(gaussian_ou_chf(u, t, model.diffusion))
    for leg in model.jumps.legs():
        v = leg.sign * u
        phi *= np.exp(1j * v * leg.y0 * math.exp(-leg.k * t))
        for s0, s1, lam in zip(*_pieces(leg.lam, t)):
            # segment increment decayed to t is a GOU increment evaluated at u e^{-k(t-s1)}
            phi *= complex(gou_chf(v * math.exp(-leg.k * (t - s1)), s1 - s0,
                                   GouParams(leg.k, lam, leg.beta)))
    return -math.log(phi.real)


def _leg_log_moment(leg: _Leg, t: np.ndarray) -> np.ndarray:
    """``log E[exp(sign * Y_leg(t))]`` in closed form, vectorised over ``t``."""
    t = np.asarray(t, dtype=float)
    starts, ends, lams = _pieces(leg.lam, float(np.max(t)) if t.size else 0.0)
    tt = t[..., None]
    s0 = np.minimum(starts, tt)
    s1 = np.minimum(ends, tt)
    b = leg.beta
    s = leg.sign
    # zero-length (clipped) pieces contribute log(1) = 0
    term = (lams / leg.k) * np.log((b - s * np.exp(-leg.k * (tt - s0)))
                                   / (b - s * np.exp(-leg.k * (tt - s1))))
    return s * leg.y0 * np.exp(-leg.k * t) + term.sum(axis=-1)


def drift_h_closed(model: MarketModel, t):
    """Closed-form drift; accepts scalar or array ``t``.

    Up legs contribute ``-(lam/k) log((beta - e^{-kt}) / (beta - 1))`` and
    down legs ``-(lam/k) log((beta + e^{-kt}) / (beta + 1))``; step-wise
    intensities add one such term per constant piece.
    """
    _check_drift_domain(model)
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    d = model.diffusion
    a_d = np.exp(-d.k_D * t)
    h = -d.sigma**2 / (4.0 * d.k_D) * (1.0 - a_d * a_d) - d.x0 * a_d
    for leg in model.jumps.legs():
        h = h - _leg_log_moment(leg, t)
    return float(h[0]) if scalar else h


def drift_table(model: MarketModel, grid: TimeGrid) -> np.ndarray:
    """``h(t_m)`` on every grid point; path independent, so computed once."""
    return drift_h_closed(model, grid.times)


# ---------------------------------------------------------------------------
# Path engine
# ---------------------------------------------------------------------------

_MODE_LEGS, _MODE_SYMMETRIC, _MODE_KOU = 0, 1, 2


@njit(cache=True, parallel=True)
def _nb_simulate(seed, first_stream, mode, kind, k_d, sigma, x0,
                 leg_k, leg_beta, leg_y0, leg_sign, kou,
                 step_dt, seg_ptr, seg_dt, seg_lam, level, drift, record, fixing,
                 retain, out_spot, out_avg, out_factors):
    n_paths = out_avg.shape[0]
    n_steps = level.shape[0] - 1
    n_legs = leg_k.shape[0]
    n_fix = 0
    for m in range(n_steps + 1):
        if fixing[m]:
            n_fix += 1
    for i in prange(n_paths):
        state = _stack_state()
        _nb_init(state, seed, first_stream + np.uint64(i))
        y = np.empty(n_legs)
        for j in range(n_legs):
            y[j] = leg_y0[j]
        x = x0
        acc = 0.0
        col = 0
        for m in range(n_steps + 1):
            if m > 0:
                x = _nb_gaussian_ou_step(state, k_d, sigma, x, step_dt[m - 1])
                for j in range(n_legs):
                    for s in range(seg_ptr[m - 1], seg_ptr[m]):
                        dt = seg_dt[s]
                        lam = seg_lam[j, s]
                        if mode == _MODE_KOU:
                            if kind == 3:
                                y[j] = _nb_kou_euler(state, leg_k[0], lam, kou[0], leg_beta[0],
                                                     kou[1], y[j], dt)
                            else:
                                y[j] = y[j] * math.exp(-leg_k[0] * dt) + _nb_kou_increment(
                                    state, kind, leg_k[0], lam, kou[0], leg_beta[0], kou[1], dt)
                        else:
                            y[j] = _nb_factor_step(state, mode == _MODE_SYMMETRIC, kind, leg_k[j],
                                                   lam, leg_beta[j], y[j], dt, False, True)
            expo = drift[m] + x
            for j in range(n_legs):
                expo += leg_sign[j] * y[j]
            spot = level[m] * math.exp(expo)
            if fixing[m]:
                acc += spot
            if record[m]:
                out_spot[i, col] = spot
                if retain:
                    out_factors[0, i, col] = x
                    for j in range(n_legs):
                        out_factors[1 + j, i, col] = y[j]
                col += 1
        out_avg[i] = acc / n_fix if n_fix > 0 else 0.0


def _segments(legs, times: np.ndarray):
    """Split each grid step at every intensity breakpoint of any leg.

    Returns CSR pointers into the sub-step arrays plus per-leg intensities.
    """
    cuts = set()
    for leg in legs:
        starts, _, _ = _pieces(leg.lam, float(times[-1]))
        cuts.update(float(s) for s in starts[1:])
    seg_ptr = [0]
    seg_dt = []
    seg_start = []
    for t0, t1 in zip(times[:-1], times[1:]):
        inner = sorted(c for c in cuts if t0 < c < t1)
        edges = [t0, *inner, t1]
        for a, b in zip(edges[:-1], edges[1:]):
            seg_dt.append(b - a)
            seg_start.append(a)
        seg_ptr.append(len(seg_dt))
    seg_start = np.asarray(seg_start)
    seg_lam = np.empty((len(legs), len(seg_dt)))
    for j, leg in enumerate(legs):
        starts, _, values = _pieces(leg.lam, float(times[-1]))
        idx = np.searchsorted(starts, seg_start, side="right") - 1
        seg_lam[j] = values[idx]
    return np.asarray(seg_ptr, np.int64), np.asarray(seg_dt, float), seg_lam


def _kernel_inputs(model: MarketModel):
    legs = model.jumps.legs()
    if model.route == "legs":
        return _MODE_LEGS, legs, np.zeros(2)
    if model.route == "symmetric":
        j = model.jumps
        return _MODE_SYMMETRIC, (_Leg(j.k, j.beta, j.y0, 1.0, j.lam),), np.zeros(2)
    j = model.jumps
    # Kou route: leg 0 carries k, total intensity and the up rate; (p, down rate) go alongside
    return _MODE_KOU, (_Leg(j.k, j.beta1, j.y0, 1.0, j.lam),), np.array([j.p, j.beta2])


def set_workers(workers: int | None) -> int:
    """Set the numba thread count (clipped to what numba was started with)."""
    limit = numba.config.NUMBA_NUM_THREADS
    n = limit if workers is None else max(1, min(int(workers), limit))
    numba.set_num_threads(n)
    return n


@dataclass
class PathBatch:
    """Simulated spot levels; ``spot[:, j]`` is the price at ``times[j]``.

    ``factors`` (when retained) maps ``"X"``, ``"Y1"``, ``"Y2"`` to arrays of
    the same shape as ``spot``; for single-factor jump routes only ``"Y1"``
    is present and holds the whole jump factor.
    """

    spot: np.ndarray
    times: np.ndarray
    grid: TimeGrid
    sampler: GouSamplerKind
    seed: int
    factors: dict[str, np.ndarray] | None = None
    average: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return self.spot.shape[0]

    def to_csv(self, path, factors: bool = False) -> None:
        """Write one row per path with the time points as header."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = [repr(float(t)) for t in self.times]
            if factors and self.factors:
                header = ["series", "path", *header]
            writer.writerow(header)
            if factors and self.factors:
                blocks = [("S", self.spot), *self.factors.items()]
                for name, block in blocks:
                    for i, row in enumerate(block):
                        writer.writerow([name, i, *map(repr, row.tolist())])
            else:
                for row in self.spot:
                    writer.writerow([repr(v) for v in row.tolist()])


def simulate_paths(model: MarketModel, grid: TimeGrid, n_paths: int, master_seed: int, *,
                   record="all", fixings=None, retain_factors: bool = False,
                   first_stream: int = 0) -> PathBatch:
    """Simulate ``n_paths`` spot paths; path ``i`` uses rng stream ``first_stream + i``.

    ``record`` selects the stored grid columns (``"all"``, ``"last"`` or an
    index array).  ``fixings`` (boolean mask or index array over the grid)
    makes the kernel also return each path's arithmetic average over those
    columns in :attr:`PathBatch.average`, without storing them.
    """
    n_paths = int(n_paths)
    if n_paths < 1:
        raise ParameterDomainError("n_paths must be >= 1")
    times = grid.times
    n_cols = times.size
    rec_mask = np.zeros(n_cols, dtype=np.bool_)
    if isinstance(record, str):
        if record == "all":
            rec_mask[:] = True
        elif record == "last":
            rec_mask[-1] = True
        elif record != "none":
            raise ParameterDomainError(f"unknown record mode {record!r}")
    else:
        rec_mask[np.asarray(record, dtype=np.int64)] = True
    fix_mask = np.zeros(n_cols, dtype=np.bool_)
    if fixings is not None:
        fixings = np.asarray(fixings)
        if fixings.dtype == np.bool_:
            fix_mask[:] = fixings
        else:
            fix_mask[fixings.astype(np.int64)] = True

    mode, legs, kou = _kernel_inputs(model)
    seg_ptr, seg_dt, seg_lam = _segments(legs, times)
    kind = model.sampler
    if kind is GouSamplerKind.EULER and np.any(seg_lam * seg_dt >= 1.0):
        raise StepSizeError("Euler scheme needs lambda*dt < 1 on every step")
    level = np.asarray(model.forward(times), dtype=float)
    drift = drift_table(model, grid)

    n_rec = int(rec_mask.sum())
    out_spot = np.empty((n_paths, n_rec))
    out_avg = np.empty(n_paths)
    out_factors = np.empty((1 + len(legs), n_paths if retain_factors else 0,
                            n_rec if retain_factors else 0))
    d = model.diffusion
    _nb_simulate(as_seed(master_seed), np.uint64(first_stream), mode, kind.code,
                 float(d.k_D), float(d.sigma), float(d.x0),
                 np.array([l.k for l in legs], float), np.array([l.beta for l in legs], float),
                 np.array([l.y0 for l in legs], float), np.array([l.sign for l in legs], float),
                 kou, np.diff(times), seg_ptr, seg_dt, seg_lam, level, drift, rec_mask, fix_mask,
                 bool(retain_factors), out_spot, out_avg, out_factors)
    factors = None
    if retain_factors:
        names = ["Y1", "Y2"][: len(legs)]
        factors = {"X": out_factors[0], **{n: out_factors[1 + j] for j, n in enumerate(names)}}
    return PathBatch(out_spot, times[rec_mask], grid, kind, int(master_seed), factors,
                     out_avg if fixings is not None else None)


@njit(cache=True, parallel=True)
def _nb_jump_counts(seed, first_stream, seg_dt, seg_lam, out):
    for i in prange(out.shape[0]):
        state = _stack_state()
        _nb_init(state, seed, first_stream + np.uint64(i))
        total = 0
        for j in range(seg_lam.shape[0]):
            for s in range(seg_dt.shape[0]):
                total += _nb_poisson(state, seg_lam[j, s] * seg_dt[s])
        out[i] = total


def jump_counts(model: MarketModel, grid: TimeGrid, n_paths: int, master_seed: int) -> np.ndarray:
    """Number of jumps on ``[0, horizon]`` per path, summed over all legs.

    Uses the same piecewise-constant intensity segments as the path engine.
    """
    _, legs, _ = _kernel_inputs(model)
    _, seg_dt, seg_lam = _segments(legs, grid.times)
    out = np.empty(int(n_paths), np.int64)
    _nb_jump_counts(as_seed(master_seed), np.uint64(0), seg_dt, seg_lam, out)
    return out


def expected_jump_count(model: MarketModel, horizon: float) -> float:
    """Integrated intensity of all jump legs over ``[0, horizon]``."""
    _, legs, _ = _kernel_inputs(model)
    total = 0.0
    for leg in legs:
        starts, ends, values = _pieces(leg.lam, horizon)
        total += float(np.sum((ends - starts) * values))
    return total
