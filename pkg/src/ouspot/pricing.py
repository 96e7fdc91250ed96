"""Monte-Carlo pricing: arithmetic Asian options, gas storages and swings.

Storage and swing contracts are valued with least-squares Monte Carlo on a
volume grid.  At every decision date and every admissible volume level the
holder chooses between injecting, doing nothing and withdrawing; the
continuation value of each destination level is estimated by regressing the
realised future cash flows on polynomials of the standardised log spot.
Decisions use the regression estimate, the reported value uses realised
cash flows (a low-biased estimator).

A swing option is a storage without injection: the holder starts with the
total rights as "volume" and withdraws at most ``a_w`` per day at a cost
equal to the strike.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit, prange

from .errors import BasisDegeneracyError, FeasibilityError, ParameterDomainError
from .market import MarketModel, PathBatch, TimeGrid, simulate_paths

__all__ = [
    "AsianSpec",
    "StorageSpec",
    "SwingSpec",
    "LsmcConfig",
    "ValuationReport",
    "price_asian",
    "lsmc_value",
    "price_storage",
    "price_swing",
    "feasible_levels",
]

_VOLUME_TOL = 1e-9


# ---------------------------------------------------------------------------
# Contract specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AsianSpec:
    """Arithmetic-average call ``(mean(S(t_i)) - K)^+`` paid at ``maturity``.

    ``fixings`` are indices into the daily grid over ``[0, maturity]``; the
    default fixes on every day after the start.
    """

    strike: float
    maturity: float = 1.0
    fixings: tuple[int, ...] | None = None
    rate: float = 0.0

    def __post_init__(self):
        if self.strike < 0:
            raise ParameterDomainError(f"strike must be >= 0, got {self.strike}")
        if self.maturity <= 0:
            raise ParameterDomainError("maturity must be > 0")
        if self.fixings is not None:
            fix = tuple(int(i) for i in self.fixings)
            if not fix:
                raise ParameterDomainError("fixing set must be non-empty")
            object.__setattr__(self, "fixings", fix)

    def grid(self) -> TimeGrid:
        return TimeGrid.daily(self.maturity)

    def fixing_indices(self, grid: TimeGrid) -> np.ndarray:
        idx = np.arange(1, grid.M + 1) if self.fixings is None else np.asarray(self.fixings)
        if idx.min() < 0 or idx.max() > grid.M:
            raise ParameterDomainError("fixing indices fall outside the simulation grid")
        return idx


@dataclass(frozen=True)
class StorageSpec:
    """Gas storage with daily injection/withdrawal decisions.

    Volumes in MWh, rates ``a_in``/``a_w`` in MWh per decision date, costs
    ``k_in``/``k_out`` per MWh and ``k_n`` per idle date.  With the ``hard``
    terminal rule the final volume must lie in ``[c_end, c_end_max]``
    (``c_end_max`` defaults to ``c_end``); with ``penalty`` any final volume
    is allowed and costs ``penalty_rate * |C(T) - c_end|``.
    """

    c_min: float = 0.0
    c_max: float = 100.0
    c_start: float = 0.0
    c_end: float = 0.0
    a_in: float = 5.0
    a_w: float = 5.0
    k_in: float = 0.1
    k_out: float = 0.1
    k_n: float = 0.0
    horizon: float = 1.0
    terminal: str = "hard"
    penalty_rate: float = 0.0
    c_end_max: float | None = None

    def __post_init__(self):
        if not self.c_min <= self.c_start <= self.c_max:
            raise ParameterDomainError("need c_min <= c_start <= c_max")
        if not self.c_min <= self.c_end <= self.c_max:
            raise ParameterDomainError("need c_min <= c_end <= c_max")
        if self.c_end_max is not None and not self.c_end <= self.c_end_max <= self.c_max:
            raise ParameterDomainError("need c_end <= c_end_max <= c_max")
        if self.a_in < 0 or self.a_w < 0:
            raise ParameterDomainError("injection and withdrawal rates must be >= 0")
        if self.terminal not in ("hard", "penalty"):
            raise ParameterDomainError(f"terminal rule must be 'hard' or 'penalty', got {self.terminal!r}")
        if self.penalty_rate < 0:
            raise ParameterDomainError("penalty_rate must be >= 0")
        if self.horizon <= 0:
            raise ParameterDomainError("horizon must be > 0")

    def grid(self) -> TimeGrid:
        return TimeGrid.daily(self.horizon)


@dataclass(frozen=True)
class SwingSpec:
    """Right to buy ``a_w`` MWh per day at ``strike``, ``rights`` MWh in total.

    ``min_exercise`` (default: all rights) is the volume that must be taken
    by the horizon.
    """

    strike: float = 22.0
    rights: float = 120.0
    a_w: float = 1.0
    horizon: float = 1.0
    min_exercise: float | None = None

    def __post_init__(self):
        if self.strike < 0 or self.rights <= 0 or self.a_w <= 0:
            raise ParameterDomainError("swing needs strike >= 0, rights > 0, a_w > 0")
        if self.min_exercise is not None and not 0 <= self.min_exercise <= self.rights:
            raise ParameterDomainError("min_exercise must lie in [0, rights]")

    def as_storage(self) -> StorageSpec:
        taken = self.rights if self.min_exercise is None else self.min_exercise
        return StorageSpec(c_min=0.0, c_max=self.rights, c_start=self.rights, c_end=0.0,
                           c_end_max=self.rights - taken, a_in=0.0, a_w=self.a_w,
                           k_in=0.0, k_out=self.strike, k_n=0.0, horizon=self.horizon)


@dataclass(frozen=True)
class LsmcConfig:
    """Least-squares Monte-Carlo settings.

    ``volume_step`` defaults to the largest step dividing both rates and
    the capacity; ``degree`` is the polynomial degree in log spot.  With
    ``auto_reduce`` a rank-deficient design falls back to a lower degree
    instead of raising :class:`BasisDegeneracyError`.
    """

    n_paths: int = 10_000
    seed: int = 0
    degree: int = 3
    volume_step: float | None = None
    auto_reduce: bool = True
    rate: float = 0.0

    def __post_init__(self):
        if self.degree < 1:
            raise ParameterDomainError("regression degree must be >= 1")
        if self.volume_step is not None and self.volume_step <= 0:
            raise ParameterDomainError("volume step must be > 0")
        if self.n_paths < 1:
            raise ParameterDomainError("n_paths must be >= 1")


@dataclass
class ValuationReport:
    product: str
    price: float
    rmse: float
    n_paths: int
    sampler: str
    seed: int
    path_seconds: float
    optimization_seconds: float
    total_seconds: float
    extras: dict = field(default_factory=dict)

    CSV_FIELDS = ("product", "price", "rmse", "n_paths", "sampler", "seed",
                  "path_seconds", "optimization_seconds", "total_seconds")

    def row(self) -> dict:
        d = asdict(self)
        d.pop("extras")
        return d

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.CSV_FIELDS, lineterminator="\n")
        if header:
            writer.writeheader()
        writer.writerow(self.row())
        return buf.getvalue()

    def summary(self) -> str:
        return (f"{self.product}: price {self.price:.6f} (RMSE {self.rmse:.6f}), "
                f"n={self.n_paths}, sampler={self.sampler}, seed={self.seed}\n"
                f"  PATH {self.path_seconds:.3f}s  LSMC {self.optimization_seconds:.3f}s  "
                f"total {self.total_seconds:.3f}s")


def _stats(values: np.ndarray):
    n = values.size
    price = float(values.mean())
    rmse = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return price, rmse


# ---------------------------------------------------------------------------
# Asian options
# ---------------------------------------------------------------------------


def price_asian(model: MarketModel, spec: AsianSpec, n_paths: int, seed: int) -> ValuationReport:
    """Monte-Carlo price of an arithmetic Asian call; deterministic per seed."""
    t0 = time.perf_counter()
    grid = spec.grid()
    fixings = spec.fixing_indices(grid)
    batch = simulate_paths(model, grid, n_paths, seed, record="none", fixings=fixings)
    t1 = time.perf_counter()
    payoff = np.maximum(batch.average - spec.strike, 0.0) * math.exp(-spec.rate * spec.maturity)
    price, rmse = _stats(payoff)
    t2 = time.perf_counter()
    return ValuationReport("asian", price, rmse, int(n_paths), model.sampler.value, int(seed),
                           t1 - t0, t2 - t1, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Volume grid and reachable sets
# ---------------------------------------------------------------------------


def _as_steps(x: float, step: float, what: str) -> int:
    q = x / step
    r = round(q)
    if abs(q - r) > _VOLUME_TOL * max(1.0, abs(q)):
        raise ParameterDomainError(f"volume step {step} does not divide {what}={x}")
    return int(r)


def _default_step(spec: StorageSpec) -> float:
    vals = [v for v in (spec.a_in, spec.a_w) if v > 0]
    # largest common divisor on a 1e-6 MWh lattice
    scaled = [round(v * 1e6) for v in vals]
    g = 0
    for v in scaled:
        g = math.gcd(g, v)
    return g / 1e6 if g else spec.c_max - spec.c_min or 1.0


@dataclass(frozen=True)
class _VolumeGrid:
    step: float
    n_levels: int
    up: int
    down: int
    start: int
    end_lo: int
    end_hi: int
    c_min: float

    def volume(self, j):
        return self.c_min + np.asarray(j) * self.step

    def dest_up(self, j):
        return np.minimum(np.asarray(j) + self.up, self.n_levels - 1)

    def dest_down(self, j):
        return np.maximum(np.asarray(j) - self.down, 0)


def _volume_grid(spec: StorageSpec, step: float | None) -> _VolumeGrid:
    step = _default_step(spec) if step is None else float(step)
    span = _as_steps(spec.c_max - spec.c_min, step, "capacity")
    c_end_max = spec.c_end if spec.c_end_max is None else spec.c_end_max
    return _VolumeGrid(
        step=step,
        n_levels=span + 1,
        up=_as_steps(spec.a_in, step, "a_in"),
        down=_as_steps(spec.a_w, step, "a_w"),
        start=_as_steps(spec.c_start - spec.c_min, step, "c_start - c_min"),
        end_lo=_as_steps(spec.c_end - spec.c_min, step, "c_end - c_min"),
        end_hi=_as_steps(c_end_max - spec.c_min, step, "c_end_max - c_min"),
        c_min=spec.c_min,
    )


def _moves(vg: _VolumeGrid, j: int):
    """Destinations reachable from level ``j`` in one date, as ``(regime, dest)``."""
    out = [(0, j)]
    if vg.up > 0 and vg.dest_up(j) != j:
        out.insert(0, (-1, int(vg.dest_up(j))))
    if vg.down > 0 and vg.dest_down(j) != j:
        out.append((1, int(vg.dest_down(j))))
    return out


def _feasible(vg: _VolumeGrid, n_dates: int, terminal: str) -> np.ndarray:
    L = vg.n_levels
    fwd = np.zeros((n_dates + 1, L), dtype=bool)
    fwd[0, vg.start] = True
    for m in range(n_dates):
        for j in np.flatnonzero(fwd[m]):
            for _, d in _moves(vg, int(j)):
                fwd[m + 1, d] = True
    bwd = np.zeros_like(fwd)
    if terminal == "hard":
        bwd[n_dates, vg.end_lo:vg.end_hi + 1] = True
    else:
        bwd[n_dates, :] = True
    for m in range(n_dates - 1, -1, -1):
        for j in range(L):
            bwd[m, j] = any(bwd[m + 1, d] for _, d in _moves(vg, j))
    feas = fwd & bwd
    if not feas[0, vg.start]:
        raise FeasibilityError(
            f"terminal volume target cannot be reached from c_start within {n_dates} decision dates")
    return feas


def feasible_levels(spec: StorageSpec, n_dates: int, volume_step: float | None = None):
    """Admissible volumes per date after forward/backward trimming.

    Returns ``(volumes, mask)`` where ``mask[m, j]`` says whether volume
    ``volumes[j]`` is both reachable at date ``m`` from the start and able to
    reach the terminal target.
    """
    vg = _volume_grid(spec, volume_step)
    return vg.volume(np.arange(vg.n_levels)), _feasible(vg, int(n_dates), spec.terminal)


# ---------------------------------------------------------------------------
# Least-squares Monte Carlo
# ---------------------------------------------------------------------------


def _design(spot: np.ndarray, degree: int):
    x = np.log(spot)
    sd = x.std()
    if not sd > 0:
        return np.ones((x.size, 1))
    z = (x - x.mean()) / sd
    return np.vander(z, degree + 1, increasing=True)


def _regression_basis(spot: np.ndarray, degree: int, auto_reduce: bool) -> np.ndarray:
    """Orthonormal basis (``Q`` factor) of the regression design at one date."""
    while True:
        X = _design(spot, degree)
        rank = np.linalg.matrix_rank(X)
        if rank == X.shape[1]:
            q, _ = np.linalg.qr(X)
            return q
        if not auto_reduce:
            raise BasisDegeneracyError(
                f"regression design of degree {degree} has rank {rank} < {X.shape[1]}")
        degree = rank - 1


@njit(cache=True, parallel=True)
def _nb_decide(s, disc, k_in, k_out, k_n, codes, dests, moved, valid, q, coef,
               value, new_value, policy):
    """One backward step: pick the regime maximising cash flow plus fitted
    continuation, record the realised cash flow plus realised continuation."""
    n_reg, n_levels = valid.shape
    n_basis = q.shape[1]
    record = policy.shape[0] > 0
    for i in prange(s.shape[0]):
        for j in range(n_levels):
            best = -np.inf
            chosen = 0.0
            regime = 0
            for r in range(n_reg):
                if not valid[r, j]:
                    continue
                d = dests[r, j]
                code = codes[r]
                if code == -1:
                    cf = -(s[i] + k_in) * moved[r, j]
                elif code == 1:
                    cf = (s[i] - k_out) * moved[r, j]
                else:
                    cf = -k_n
                cf *= disc
                cont = 0.0
                for b in range(n_basis):
                    cont += q[i, b] * coef[b, d]
                # strict comparison keeps the first regime on ties
                if cf + cont > best:
                    best = cf + cont
                    chosen = cf + value[d, i]
                    regime = code
            new_value[j, i] = chosen
            if record:
                policy[j, i] = regime


def lsmc_value(paths: PathBatch | MarketModel, spec: StorageSpec, config: LsmcConfig,
               *, return_policy: bool = False) -> ValuationReport:
    """Value a storage contract by least-squares Monte Carlo.

    ``paths`` is either a :class:`PathBatch` whose columns ``0..M-1`` are the
    decision dates (column ``M`` marks the horizon), or a model, in which case
    ``config.n_paths`` daily paths over ``spec.horizon`` are simulated first.
    """
    t0 = time.perf_counter()
    if isinstance(paths, MarketModel):
        model = paths
        paths = simulate_paths(model, spec.grid(), config.n_paths, config.seed)
    t1 = time.perf_counter()

    spot = paths.spot
    times = paths.times
    n, n_cols = spot.shape
    n_dates = n_cols - 1
    if n_dates < 1:
        raise ParameterDomainError("need at least one decision date")
    if n < 10 * (config.degree + 1):
        raise ParameterDomainError(
            f"n_paths={n} is below 10x the basis dimension {config.degree + 1}")
    vg = _volume_grid(spec, config.volume_step)
    feas = _feasible(vg, n_dates, spec.terminal)
    disc = np.exp(-config.rate * times)

    L = vg.n_levels
    idx = np.arange(L)
    regimes = [(0, idx)]
    if vg.up > 0:
        regimes.insert(0, (-1, vg.dest_up(idx)))
    if vg.down > 0:
        regimes.append((1, vg.dest_down(idx)))
    moved = [np.abs(d - idx) * vg.step for _, d in regimes]

    value = np.zeros((L, n))
    if spec.terminal == "penalty":
        value[:] = (-spec.penalty_rate * np.abs(vg.volume(idx) - spec.c_end) * disc[-1])[:, None]
    policy = np.zeros((n_dates, L, n), dtype=np.int8) if return_policy else None

    codes = np.array([r for r, _ in regimes], dtype=np.int64)
    dests = np.array([d for _, d in regimes], dtype=np.int64)
    moved = np.array(moved, dtype=float)
    new_value = np.empty_like(value)
    no_policy = np.zeros((0, 0), dtype=np.int8)
    for m in range(n_dates - 1, -1, -1):
        s = np.ascontiguousarray(spot[:, m])
        # valid[r, j]: regime r is admissible at level j (moves volume unless idle)
        valid = feas[m][None, :] & feas[m + 1][dests] & ((dests != idx) | (codes == 0)[:, None])
        if (valid.sum(axis=0) > 1).any():
            q = _regression_basis(s, config.degree, config.auto_reduce)
            coef = q.T @ value.T
        else:
            q = np.zeros((n, 1))
            coef = np.zeros((1, L))
        _nb_decide(s, float(disc[m]), float(spec.k_in), float(spec.k_out), float(spec.k_n),
                   codes, dests, moved, valid, np.ascontiguousarray(q), np.ascontiguousarray(coef),
                   value, new_value, policy[m] if policy is not None else no_policy)
        value, new_value = new_value, value

    price, rmse = _stats(value[vg.start])
    t2 = time.perf_counter()
    report = ValuationReport("storage", price, rmse, n, paths.sampler.value, paths.seed,
                             t1 - t0, t2 - t1, time.perf_counter() - t0)
    if policy is not None:
        report.extras["policy"] = policy
        report.extras["volumes"] = vg.volume(np.arange(L))
    return report


def price_storage(model: MarketModel, spec: StorageSpec | None = None,
                  config: LsmcConfig | None = None) -> ValuationReport:
    """Storage value with the fast-churn defaults when ``spec`` is omitted."""
    return lsmc_value(model, spec or StorageSpec(), config or LsmcConfig())


def price_swing(model: MarketModel, spec: SwingSpec | None = None,
                config: LsmcConfig | None = None) -> ValuationReport:
    spec = spec or SwingSpec()
    report = lsmc_value(model, spec.as_storage(), config or LsmcConfig())
    report.product = "swing"
    return report
