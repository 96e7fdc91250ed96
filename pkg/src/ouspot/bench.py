"""Wall-clock benchmark of the path samplers and of LSMC storage valuation.

Timings are medians over repetitions after one discarded warm-up run, and
are reported as ratios against the Polya sampler: absolute seconds depend on
the machine, ratios much less so.
"""

from __future__ import annotations

import csv
import io
import os
import platform
import statistics
import time
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import BuildProfileError, ParameterDomainError
from .market import MarketModel, TimeGrid, simulate_paths
from .ou_kernels import EXACT_KINDS, GouSamplerKind
from .pricing import LsmcConfig, StorageSpec, lsmc_value

__all__ = ["BenchRow", "BenchReport", "environment", "time_paths", "run_bench"]


@dataclass
class BenchRow:
    task: str
    sampler: str
    n_paths: int
    median_seconds: float
    ratio_to_polya: float = float("nan")
    path_seconds: float = float("nan")
    optimization_seconds: float = float("nan")


@dataclass
class BenchReport:
    rows: list[BenchRow]
    env: dict = field(default_factory=dict)

    def ratio(self, task: str, sampler: str, n_paths: int) -> float:
        for r in self.rows:
            if (r.task, r.sampler, r.n_paths) == (task, sampler, n_paths):
                return r.ratio_to_polya
        raise KeyError((task, sampler, n_paths))

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = list(BenchRow.__dataclass_fields__)
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        for r in self.rows:
            writer.writerow([getattr(r, k) for k in names])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"{'task':<6} {'sampler':<11} {'n_paths':>8} {'median s':>10} {'vs polya':>9}"]
        for r in self.rows:
            lines.append(f"{r.task:<6} {r.sampler:<11} {r.n_paths:>8} "
                         f"{r.median_seconds:>10.3f} {r.ratio_to_polya:>9.2f}")
        lines.append("environment: " + ", ".join(f"{k}={v}" for k, v in self.env.items()))
        return "\n".join(lines)


def environment() -> dict:
    return {
        "cpu_count": os.cpu_count(),
        "numba_threads": numba.get_num_threads(),
        "threading_layer": os.environ.get("NUMBA_THREADING_LAYER", "default"),
        "jit": "disabled" if numba.config.DISABLE_JIT else "enabled",
        "python": platform.python_version(),
        "numpy": np.__version__,
        "numba": numba.__version__,
        "machine": platform.machine(),
    }


def _median_time(fn, reps: int) -> tuple[float, list]:
    fn()  # warm-up, discarded
    times, results = [], []
    for _ in range(reps):
        t0 = time.perf_counter()
        results.append(fn())
        times.append(time.perf_counter() - t0)
    return statistics.median(times), results


def time_paths(model: MarketModel, sampler, n_paths: int, steps: int = 365,
               reps: int = 3, seed: int = 1) -> float:
    """Median seconds for ``n_paths`` paths of ``steps`` daily steps (terminal values only)."""
    m = model.with_sampler(sampler)
    grid = TimeGrid.uniform(steps / 365.0, steps)
    median, _ = _median_time(lambda: simulate_paths(m, grid, n_paths, seed, record="last"), reps)
    return median


def run_bench(model: MarketModel, *, ladder=(10_000, 100_000), samplers=EXACT_KINDS,
              steps: int = 365, reps: int = 3, lsmc_paths: int | None = None,
              storage: StorageSpec | None = None, force: bool = False) -> BenchReport:
    """Time path generation (and optionally LSMC storage valuation) per sampler.

    Refuses to time a JIT-disabled build unless ``force`` is set.
    """
    if numba.config.DISABLE_JIT and not force:
        raise BuildProfileError("numba JIT is disabled (NUMBA_DISABLE_JIT); timings would be "
                                "meaningless. Pass force=True / --force to run anyway")
    ladder = [int(n) for n in ladder]
    if any(b <= a for a, b in zip(ladder, ladder[1:])) or not ladder or ladder[0] < 1:
        raise ParameterDomainError("n_paths ladder must be positive and strictly increasing")
    if reps < 3:
        raise ParameterDomainError("need at least 3 timed repetitions")
    samplers = [GouSamplerKind(s) for s in samplers]
    rows = []
    for n in ladder:
        times = {s: time_paths(model, s, n, steps, reps) for s in samplers}
        ref = times.get(GouSamplerKind.POLYA)
        for s, t in times.items():
            rows.append(BenchRow("path", s.value, n, t, t / ref if ref else float("nan"), t))
    if lsmc_paths:
        spec = storage or StorageSpec()
        cfg = LsmcConfig(n_paths=int(lsmc_paths), seed=1)
        stats = {}
        for s in samplers:
            m = model.with_sampler(s)
            median, reports = _median_time(lambda: lsmc_value(m, spec, cfg), reps)
            stats[s] = (median, statistics.median(r.path_seconds for r in reports),
                        statistics.median(r.optimization_seconds for r in reports))
        ref = stats.get(GouSamplerKind.POLYA, (None,))[0]
        for s, (t, tp, to) in stats.items():
            rows.append(BenchRow("lsmc", s.value, int(lsmc_paths), t,
                                 t / ref if ref else float("nan"), tp, to))
    return BenchReport(rows, environment())
