"""Statistical oracle suite behind ``ouspot validate``.

Each check compares simulated output with an independent closed form:
characteristic functions, moments, cross-sampler two-sample KS tests, the
martingale property of the spot and the Polya-Erlang mixture identity.  The
Euler bias demonstration is informational: it is expected to fail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .market import MarketModel, TimeGrid, simulate_paths
from .ou_kernels import (
    EXACT_KINDS,
    GouParams,
    GouSamplerKind,
    SymBgouParams,
    factor_path_moments,
    gou_chf,
    gou_increments,
    polya_erlang_mixture_chf,
    sym_bgou_chf,
    sym_bgou_increments,
)

__all__ = ["CheckResult", "U_POINTS", "chf_deviation", "run_suite", "euler_bias",
           "gou_increment_moments", "martingale_check", "format_results"]

U_POINTS = np.array([0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0])
EULER_MIN_PATHS = 1_000_000


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    informational: bool = False

    @property
    def label(self) -> str:
        if self.informational:
            return "FAIL-as-expected" if not self.passed else "PASS (unexpected)"
        return "PASS" if self.passed else "FAIL"


def chf_deviation(samples: np.ndarray, exact: np.ndarray, u=U_POINTS) -> float:
    """Largest real/imaginary gap between the empirical and exact chf on ``u``."""
    emp = np.exp(1j * np.outer(u, samples)).mean(axis=1)
    return float(max(np.abs(emp.real - exact.real).max(), np.abs(emp.imag - exact.imag).max()))


def gou_increment_moments(params: GouParams, dt: float):
    """Mean and variance of a GOU increment from ``y0 = 0``."""
    a = math.exp(-params.k * dt)
    mean = params.lam / (params.k * params.beta) * (1.0 - a)
    var = params.lam / (params.k * params.beta**2) * (1.0 - a * a)
    return mean, var


def euler_bias(params: GouParams, dt: float, horizon: float, n: int, seed: int):
    """Largest standardised gap between the Euler path mean and the exact mean.

    Returns ``(max_z, worst_time, variance_ratio)``; the variance ratio is
    the empirical terminal variance over the exact stationary-limit variance.
    """
    steps = round(horizon / dt)
    dts = np.full(steps, dt)
    mean, var = factor_path_moments(GouSamplerKind.EULER, params, dts, n, seed=seed)
    t = np.cumsum(dts)
    exact = params.lam / (params.k * params.beta) * (1.0 - np.exp(-params.k * t))
    exact_var = params.lam / (params.k * params.beta**2) * (1.0 - np.exp(-2.0 * params.k * t))
    z = np.abs(mean - exact) / np.sqrt(var / n)
    worst = int(np.argmax(z))
    return float(z[worst]), float(t[worst]), float(var[-1] / exact_var[-1])


def martingale_check(model: MarketModel, n: int, seed: int, times=(0.25, 0.5, 1.0)):
    """``max |mean(S(t)/F(0,t)) - 1| / SE`` over ``times``.

    Exact samplers need no intermediate dates, so the grid only holds the
    check times; step-wise intensities are still honoured piece by piece.
    """
    grid = TimeGrid(np.concatenate(([0.0], np.asarray(times, dtype=float))))
    batch = simulate_paths(model, grid, n, seed, record=np.arange(1, grid.times.size))
    ratio = batch.spot / model.forward(batch.times)
    z = np.abs(ratio.mean(axis=0) - 1.0) / (ratio.std(axis=0, ddof=1) / math.sqrt(n))
    return float(z.max()), ratio.mean(axis=0)


def _chf_checks(n: int, seed: int):
    out = []
    bound = 4.0 / math.sqrt(n)
    gou = GouParams(50.0, 20.0, 10.0)
    sym = SymBgouParams(50.0, 40.0, 20.0)
    for dt in (1.0 / 365, 0.1):
        exact = gou_chf(U_POINTS, dt, gou)
        exact_sym = sym_bgou_chf(U_POINTS, dt, sym)
        for i, kind in enumerate(EXACT_KINDS):
            dev = chf_deviation(gou_increments(kind, gou, dt, n, seed=seed + i), exact)
            out.append(CheckResult(f"gou chf {kind.value} dt={dt:.4g}", dev <= bound,
                                   f"max dev {dev:.2e} <= {bound:.2e}"))
            dev = chf_deviation(sym_bgou_increments(kind, sym, dt, n, seed=seed + 10 + i), exact_sym)
            out.append(CheckResult(f"sym-bgou chf {kind.value} dt={dt:.4g}", dev <= bound,
                                   f"max dev {dev:.2e} <= {bound:.2e}"))
    return out


def _moment_checks(n: int, seed: int):
    out = []
    params = GouParams(1.0, 1.0, 1.0)
    mean, var = gou_increment_moments(params, 1.0)
    for i, kind in enumerate(EXACT_KINDS):
        x = gou_increments(kind, params, 1.0, n, seed=seed + i)
        z_mean = abs(x.mean() - mean) / math.sqrt(var / n)
        # variance of the sample variance from the fourth central moment
        m4 = np.mean((x - x.mean()) ** 4)
        z_var = abs(x.var(ddof=1) - var) / math.sqrt(max(m4 - var**2, 1e-300) / n)
        ok = z_mean < 5 and z_var < 5
        out.append(CheckResult(f"gou moments {kind.value}", ok,
                               f"mean z={z_mean:.2f}, variance z={z_var:.2f} (< 5)"))
    return out


def _ks_checks(n: int, seed: int, alpha: float = 0.01):
    out = []
    gou = GouParams(50.0, 20.0, 10.0)
    sym = SymBgouParams(50.0, 40.0, 20.0)
    for label, draw, params in (("gou", gou_increments, gou), ("sym-bgou", sym_bgou_increments, sym)):
        samples = {k: draw(k, params, 0.1, n, seed=seed + 100 + i) for i, k in enumerate(EXACT_KINDS)}
        kinds = list(samples)
        for i in range(len(kinds)):
            for j in range(i + 1, len(kinds)):
                p = stats.ks_2samp(samples[kinds[i]], samples[kinds[j]]).pvalue
                out.append(CheckResult(f"{label} KS {kinds[i].value}/{kinds[j].value}", p > alpha,
                                       f"p={p:.3f} > {alpha}"))
    return out


def _polya_identity():
    worst = 0.0
    for a in (0.1, 0.5, 0.9):
        for alpha in (0.4, 1.0, 7.0):
            for u in (0.5, 2.0):
                beta = 3.0
                series = polya_erlang_mixture_chf(u, a, alpha, beta, terms=2000)
                exact = ((beta - 1j * a * u) / (beta - 1j * u)) ** alpha
                worst = max(worst, abs(series - exact))
    return CheckResult("polya-erlang mixture identity", worst < 1e-8, f"max |gap| {worst:.1e} < 1e-8")


def run_suite(models: dict[str, MarketModel], *, n: int = 100_000, n_martingale: int = 100_000,
              seed: int = 12345, include_euler: bool = True) -> list[CheckResult]:
    """Run every oracle check; ``models`` maps labels to models for the martingale check."""
    results = []
    results += _chf_checks(n, seed)
    results += _moment_checks(n, seed + 1000)
    results += _ks_checks(min(n, 100_000), seed + 2000)
    results.append(_polya_identity())
    for label, model in models.items():
        for i, kind in enumerate(EXACT_KINDS):
            route = "legs" if model.route == "kou" and kind is GouSamplerKind.POLYA else None
            m = model.with_sampler(kind, route=route)
            z, _ = martingale_check(m, n_martingale, seed + 3000 + i)
            results.append(CheckResult(f"martingale {label} {kind.value}", z < 5,
                                       f"max z={z:.2f} < 5 at t=0.25, 0.5, 1"))
    if include_euler:
        # the bias is a few SE per 10^5 paths; use enough paths to make it visible
        z, t, vr = euler_bias(GouParams(50.0, 20.0, 10.0), 1.0 / 365, 1.0, max(n, EULER_MIN_PATHS),
                              seed + 4000)
        results.append(CheckResult("euler bias (k=50, lambda=20)", z <= 5,
                                   f"max mean gap {z:.1f} SE at t={t:.3f}; variance ratio {vr:.3f}",
                                   informational=True))
    return results


def format_results(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{r.name:<{width}}  {r.label:<17}  {r.detail}" for r in results]
    failed = sum(1 for r in results if not r.passed and not r.informational)
    lines.append(f"{len(results)} checks, {failed} failed")
    return "\n".join(lines)
