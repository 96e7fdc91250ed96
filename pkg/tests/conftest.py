import sys

import numpy as np
import pytest

from ouspot.config import load_config
from ouspot.market import ForwardCurve, MarketModel
from ouspot.ou_kernels import GaussianOuParams


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical test")


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])


@pytest.fixture(scope="session")
def presets():
    return {name: load_config(name).model for name in ("case1", "case2", "case3")}


def deterministic_model(level=22.0, forward=None):
    """No diffusion noise and no jumps: the spot equals the forward curve."""
    from ouspot.market import TwoSidedJumps

    jumps = TwoSidedJumps(k1=50.0, k2=40.0, lam1=0.0, lam2=0.0, beta1=10.0, beta2=20.0)
    return MarketModel(GaussianOuParams(67.0, 0.0, 0.0), jumps,
                       forward if forward is not None else ForwardCurve.flat(level))


def se(x):
    x = np.asarray(x, float)
    return x.std(ddof=1) / np.sqrt(x.size)
