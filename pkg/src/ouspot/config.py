"""YAML run configuration.

A run file has up to five sections::

    model:        case (1, 2 or 3), forward curve, diffusion and jump parameters
    contract:     type (asian, storage or swing) and its fields
    simulation:   n_paths, seed, sampler, horizon, steps, allow_biased, workers
    lsmc:         degree, volume_step, auto_reduce, rate
    output:       dir, paths_csv, report_csv

Parameter names follow the usual notation: ``k_D``/``sigma`` for the
diffusion, ``k``/``lambda``/``beta`` for jump factors, with suffixes ``1``/``2``
for the up/down legs.  Every validation failure raises
:class:`ConfigError` naming the offending key.
"""

from __future__ import annotations

from dataclasses import MISSING, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import yaml

from .errors import ConfigError, ParameterDomainError
from .market import (
    ForwardCurve,
    KouJumps,
    LaplaceJumps,
    MarketModel,
    SeasonalIntensity,
    TimeGrid,
    TwoSidedJumps,
)
from .ou_kernels import GaussianOuParams, GouSamplerKind
from .pricing import AsianSpec, LsmcConfig, StorageSpec, SwingSpec

__all__ = ["RunConfig", "SimulationSection", "OutputSection", "load_config", "dump_config",
           "parse_config", "preset_path", "PRESETS"]

PRESETS = ("case1", "case2", "case3")

_JUMP_KEYS = {
    1: {"k": "k", "lambda": "lam", "p": "p", "beta1": "beta1", "beta2": "beta2", "y0": "y0"},
    2: {"k1": "k1", "k2": "k2", "lambda1": "lam1", "lambda2": "lam2", "beta1": "beta1",
        "beta2": "beta2", "y1_0": "y1_0", "y2_0": "y2_0"},
    3: {"k": "k", "beta": "beta", "lambda": "lam", "intensity": "lam", "y0": "y0"},
}
_JUMP_TYPES = {1: KouJumps, 2: TwoSidedJumps, 3: LaplaceJumps}
_CONTRACT_TYPES = {"asian": AsianSpec, "storage": StorageSpec, "swing": SwingSpec}


@dataclass(frozen=True)
class SimulationSection:
    n_paths: int = 10_000
    seed: int = 0
    sampler: GouSamplerKind = GouSamplerKind.POLYA
    horizon: float = 1.0
    steps: int = 365
    allow_biased: bool = False
    workers: int | None = None

    def grid(self) -> TimeGrid:
        return TimeGrid.uniform(self.horizon, self.steps)


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"
    paths_csv: str = "paths.csv"
    report_csv: str = "report.csv"


@dataclass(frozen=True)
class RunConfig:
    model: MarketModel
    simulation: SimulationSection = field(default_factory=SimulationSection)
    contract: AsianSpec | StorageSpec | SwingSpec | None = None
    lsmc: LsmcConfig = field(default_factory=LsmcConfig)
    output: OutputSection = field(default_factory=OutputSection)

    def lsmc_config(self) -> LsmcConfig:
        """LSMC settings with the simulation's path count and seed."""
        return replace(self.lsmc, n_paths=self.simulation.n_paths, seed=self.simulation.seed)

    def with_overrides(self, *, seed=None, n_paths=None, sampler=None, workers=None,
                       allow_biased=None) -> "RunConfig":
        sim = self.simulation
        changes = {k: v for k, v in dict(seed=seed, n_paths=n_paths, workers=workers,
                                         allow_biased=allow_biased).items() if v is not None}
        if sampler is not None:
            changes["sampler"] = _sampler(sampler, "sampler")
        sim = replace(sim, **changes)
        model = self.model
        if sim.sampler is not model.sampler:
            model = _build(lambda: model.with_sampler(sim.sampler), "simulation.sampler")
        _check_biased(sim)
        return replace(self, model=model, simulation=sim)

    def to_dict(self) -> dict:
        return {
            "model": _model_to_dict(self.model),
            "simulation": _simulation_to_dict(self.simulation),
            **({"contract": _contract_to_dict(self.contract)} if self.contract else {}),
            "lsmc": {f.name: getattr(self.lsmc, f.name) for f in fields(LsmcConfig)
                     if f.name not in ("n_paths", "seed")},
            "output": {f.name: getattr(self.output, f.name) for f in fields(OutputSection)},
        }


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------


def _section(raw: dict, name: str, required: bool = False) -> dict:
    sec = raw.get(name)
    if sec is None:
        if required:
            raise ConfigError("missing section", name)
        return {}
    if not isinstance(sec, dict):
        raise ConfigError("must be a mapping", name)
    return sec


def _check_keys(sec: dict, allowed, prefix: str) -> None:
    for key in sec:
        if key not in allowed:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", f"{prefix}.{key}")


def _number(sec: dict, key: str, prefix: str, default=None, kind=float):
    if key not in sec:
        if default is None:
            raise ConfigError("missing required key", f"{prefix}.{key}")
        return default
    val = sec[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"expected a number, got {val!r}", f"{prefix}.{key}")
    if kind is int and float(val) != int(val):
        raise ConfigError(f"expected an integer, got {val!r}", f"{prefix}.{key}")
    return kind(val)


def _build(factory, key: str):
    try:
        return factory()
    except ParameterDomainError as exc:
        raise ConfigError(str(exc), key) from exc


def _sampler(value, key: str) -> GouSamplerKind:
    try:
        return GouSamplerKind(str(value).lower())
    except ValueError:
        choices = ", ".join(k.value for k in GouSamplerKind)
        raise ConfigError(f"unknown sampler {value!r} (choose from {choices})", key) from None


def _check_biased(sim: SimulationSection) -> None:
    if sim.sampler is GouSamplerKind.EULER and not sim.allow_biased:
        raise ConfigError("the euler scheme is biased; set allow_biased (or --allow-biased) to use it",
                          "simulation.sampler")


def _parse_forward(raw) -> ForwardCurve:
    key = "model.forward"
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return _build(lambda: ForwardCurve.flat(raw), key)
    if not isinstance(raw, dict):
        raise ConfigError("expected a number or a mapping with 'flat' or 'times'/'values'", key)
    _check_keys(raw, {"flat", "times", "values"}, key)
    if "flat" in raw:
        return _build(lambda: ForwardCurve.flat(_number(raw, "flat", key)), key)
    if "times" not in raw or "values" not in raw:
        raise ConfigError("tabulated curve needs both 'times' and 'values'", key)
    return _build(lambda: ForwardCurve(raw["times"], raw["values"]), key)


def _parse_intensity(raw, key: str):
    if isinstance(raw, dict):
        _check_keys(raw, {"theta", "omega", "tau", "step"}, key)
        return _build(lambda: SeasonalIntensity(
            _number(raw, "theta", key), _number(raw, "omega", key), _number(raw, "tau", key),
            _number(raw, "step", key, 1.0 / 365)), key)
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError("expected a number or a theta/omega/tau mapping", key)
    return float(raw)


def _parse_model(raw: dict, sampler: GouSamplerKind) -> MarketModel:
    sec = _section(raw, "model", required=True)
    _check_keys(sec, {"case", "forward", "diffusion", "jumps", "route"}, "model")
    case = sec.get("case")
    if case not in _JUMP_TYPES:
        raise ConfigError(f"expected 1, 2 or 3, got {case!r}", "model.case")
    forward = _parse_forward(sec.get("forward", 22.0))

    diff = sec.get("diffusion") or {}
    if not isinstance(diff, dict):
        raise ConfigError("must be a mapping", "model.diffusion")
    _check_keys(diff, {"k_D", "sigma", "x0"}, "model.diffusion")
    diffusion = _build(lambda: GaussianOuParams(
        _number(diff, "k_D", "model.diffusion"), _number(diff, "sigma", "model.diffusion"),
        _number(diff, "x0", "model.diffusion", 0.0)), "model.diffusion")

    jumps_raw = sec.get("jumps")
    if not isinstance(jumps_raw, dict):
        raise ConfigError("missing or not a mapping", "model.jumps")
    names = _JUMP_KEYS[case]
    _check_keys(jumps_raw, set(names), "model.jumps")
    if case == 3 and "lambda" in jumps_raw and "intensity" in jumps_raw:
        raise ConfigError("give either a constant lambda or an intensity mapping, not both",
                          "model.jumps.intensity")
    kwargs = {}
    for key, attr in names.items():
        if key not in jumps_raw:
            continue
        if attr == "lam" and case == 3:
            kwargs[attr] = _parse_intensity(jumps_raw[key], f"model.jumps.{key}")
        else:
            kwargs[attr] = _number(jumps_raw, key, "model.jumps")
    jump_type = _JUMP_TYPES[case]
    required = {f.name for f in fields(jump_type)
                if f.default is MISSING and f.default_factory is MISSING}
    for attr in required:
        if attr not in kwargs:
            key = next(k for k, a in names.items() if a == attr)
            raise ConfigError("missing required key", f"model.jumps.{key}")
    jumps = _build(lambda: jump_type(**kwargs), "model.jumps")
    route = sec.get("route")
    return _build(lambda: MarketModel(diffusion, jumps, forward, sampler, route), "model.route")


def _parse_contract(raw: dict):
    sec = _section(raw, "contract")
    if not sec:
        return None
    kind = sec.get("type")
    if kind not in _CONTRACT_TYPES:
        raise ConfigError(f"expected one of {', '.join(_CONTRACT_TYPES)}, got {kind!r}", "contract.type")
    cls = _CONTRACT_TYPES[kind]
    allowed = {f.name for f in fields(cls)}
    body = {k: v for k, v in sec.items() if k != "type"}
    _check_keys(body, allowed, "contract")
    kwargs = {}
    for key, val in body.items():
        if val is None:
            kwargs[key] = None
        elif key == "terminal":
            kwargs[key] = str(val)
        elif key == "fixings":
            if not isinstance(val, list):
                raise ConfigError("expected a list of grid indices", "contract.fixings")
            kwargs[key] = tuple(val)
        else:
            kwargs[key] = _number(body, key, "contract")
    return _build(lambda: cls(**kwargs), "contract")


def _parse_simulation(raw: dict) -> SimulationSection:
    sec = _section(raw, "simulation")
    allowed = {f.name for f in fields(SimulationSection)}
    _check_keys(sec, allowed, "simulation")
    d = SimulationSection()
    workers = sec.get("workers")
    sim = SimulationSection(
        n_paths=_number(sec, "n_paths", "simulation", d.n_paths, int),
        seed=_number(sec, "seed", "simulation", d.seed, int),
        sampler=_sampler(sec.get("sampler", d.sampler.value), "simulation.sampler"),
        horizon=_number(sec, "horizon", "simulation", d.horizon),
        steps=_number(sec, "steps", "simulation", d.steps, int),
        allow_biased=bool(sec.get("allow_biased", False)),
        workers=None if workers is None else _number(sec, "workers", "simulation", kind=int),
    )
    if sim.n_paths < 1:
        raise ConfigError("must be >= 1", "simulation.n_paths")
    if sim.steps < 1:
        raise ConfigError("must be >= 1", "simulation.steps")
    if sim.horizon <= 0:
        raise ConfigError("must be > 0", "simulation.horizon")
    _check_biased(sim)
    return sim


def _parse_lsmc(raw: dict) -> LsmcConfig:
    sec = _section(raw, "lsmc")
    _check_keys(sec, {"degree", "volume_step", "auto_reduce", "rate"}, "lsmc")
    d = LsmcConfig()
    step = sec.get("volume_step")
    return _build(lambda: LsmcConfig(
        degree=_number(sec, "degree", "lsmc", d.degree, int),
        volume_step=None if step is None else _number(sec, "volume_step", "lsmc"),
        auto_reduce=bool(sec.get("auto_reduce", d.auto_reduce)),
        rate=_number(sec, "rate", "lsmc", d.rate)), "lsmc")


def _parse_output(raw: dict) -> OutputSection:
    sec = _section(raw, "output")
    _check_keys(sec, {f.name for f in fields(OutputSection)}, "output")
    return OutputSection(**{k: str(v) for k, v in sec.items()})


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping at top level")
    _check_keys(raw, {"model", "simulation", "contract", "lsmc", "output"}, "config")
    sim = _parse_simulation(raw)
    return RunConfig(model=_parse_model(raw, sim.sampler), simulation=sim,
                     contract=_parse_contract(raw), lsmc=_parse_lsmc(raw), output=_parse_output(raw))


def load_config(path) -> RunConfig:
    """Load a run file, or a preset name such as ``case1``."""
    if str(path) in PRESETS:
        path = preset_path(str(path))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc.strerror}", str(path)) from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}", str(path)) from exc
    return parse_config(raw or {})


def dump_config(config: RunConfig, path=None) -> str:
    text = yaml.safe_dump(config.to_dict(), sort_keys=False)
    if path is not None:
        Path(path).write_text(text)
    return text


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset (choose from {', '.join(PRESETS)})", "preset")
    return Path(str(resources.files("ouspot") / "presets" / f"{name}.yaml"))


# ---------------------------------------------------------------------------
# Serialisation
# ---------------------------------------------------------------------------

def _model_to_dict(model: MarketModel) -> dict:
    fwd = model.forward
    forward = ({"flat": float(fwd.values[0])} if fwd.is_flat and fwd.times[0] == 0.0
               else {"times": fwd.times.tolist(), "values": fwd.values.tolist()})
    names = {attr: key for key, attr in _JUMP_KEYS[model.case].items() if key != "intensity"}
    jumps = {}
    for f in fields(model.jumps):
        val = getattr(model.jumps, f.name)
        if isinstance(val, SeasonalIntensity):
            jumps["intensity"] = {"theta": val.theta, "omega": val.omega, "tau": val.tau,
                                  "step": val.step}
        elif f.name == "lam" and not isinstance(val, (int, float)):
            raise ConfigError("tabulated step-wise intensities cannot be written to a run file",
                              "model.jumps.intensity")
        elif f.name in names:
            jumps[names[f.name]] = float(val)
    d = model.diffusion
    return {"case": model.case, "forward": forward, "route": model.route,
            "diffusion": {"k_D": d.k_D, "sigma": d.sigma, "x0": d.x0}, "jumps": jumps}


def _simulation_to_dict(sim: SimulationSection) -> dict:
    out = {f.name: getattr(sim, f.name) for f in fields(SimulationSection)}
    out["sampler"] = sim.sampler.value
    return out


def _contract_to_dict(contract) -> dict:
    kind = next(k for k, cls in _CONTRACT_TYPES.items() if isinstance(contract, cls))
    out = {"type": kind}
    for f in fields(contract):
        val = getattr(contract, f.name)
        out[f.name] = list(val) if isinstance(val, tuple) else val
    return out
