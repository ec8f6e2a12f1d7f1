"""Scenario configuration: a single YAML file describing one experiment.

A scenario bundles the network model, the initial condition, and the
optional observer/control/run blocks.  Loading is strict: unknown keys
anywhere are rejected, array shapes must match the declared node and
virus counts, and the parsed model/state must pass the model-assumption
checks -- a scenario that loads is a scenario that runs.

Schema (see the shipped ``europe`` and ``scalar-toy`` scenarios):

    model:
      n: <int>            m: <int>           h: <float>
      nodes: [<label>, ...]
      viruses:
        - name: <str>
          beta: [[...], ...]   # n x n, row i = rates into node i
          gamma: [...]         # length n
          c: [...]             # length n
    initial:
      x: [[...], ...]          # per virus, length-n rows
      r: [...]                 # optional, defaults to zero
    observer:                  # optional
      x_hat: [[...], ...]
      r_hat: [...]             # optional
      gains: [[...], ...]      # optional explicit per-virus gains
      synthesize: {tau: <float | [floats] | grid>, l: <float>}  # optional
    control:                   # optional
      mode: true-state | estimated-state
      horizon: <int>
    run:                       # optional
      horizon: <int>           out_dir: <str>
      pipelines: [simulate, analyze, observe, synthesize, control]
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import yaml

from .estimator import ObserverGain
from .model import EpidemicState, NetworkModel, initial_state, validate

PIPELINES = ("simulate", "analyze", "observe", "synthesize", "control")


class ConfigError(ValueError):
    """Scenario file rejected; the message names the offending field."""


@dataclass(frozen=True)
class SynthesisSettings:
    tau: Union[tuple[float, ...], str]   # per-virus values or "grid"
    l: float


@dataclass(frozen=True)
class ObserverSettings:
    x_hat0: np.ndarray
    r_hat0: Optional[np.ndarray]
    gains: Optional[ObserverGain]
    synthesize: Optional[SynthesisSettings]


@dataclass(frozen=True)
class ControlSettings:
    mode: str
    horizon: int


@dataclass(frozen=True)
class RunSettings:
    horizon: int = 500
    out_dir: str = "out"
    pipelines: tuple[str, ...] = PIPELINES


@dataclass(frozen=True)
class ScenarioConfig:
    model: NetworkModel
    initial: EpidemicState
    virus_names: tuple[str, ...]
    run: RunSettings
    observer: Optional[ObserverSettings] = None
    control: Optional[ControlSettings] = None
    source: str = "<memory>"


def _expect_mapping(node, where: str) -> dict:
    if not isinstance(node, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(node).__name__}")
    return node


def _check_keys(node: dict, allowed: set, required: set, where: str):
    unknown = set(node) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    missing = required - set(node)
    if missing:
        raise ConfigError(f"{where}: missing required key(s) {sorted(missing)}")


def _as_float(node, where: str) -> float:
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {node!r}")
    value = float(node)
    if not np.isfinite(value):
        raise ConfigError(f"{where}: expected a finite number, got {node!r}")
    return value


def _as_int(node, where: str) -> int:
    if isinstance(node, bool) or not isinstance(node, int):
        raise ConfigError(f"{where}: expected an integer, got {node!r}")
    return node


def _as_vector(node, n: int, where: str) -> np.ndarray:
    if not isinstance(node, list) or len(node) != n:
        raise ConfigError(f"{where}: expected a list of {n} numbers")
    return np.array([_as_float(v, f"{where}[{i}]") for i, v in enumerate(node)])


def _as_matrix(node, n: int, where: str) -> np.ndarray:
    if not isinstance(node, list) or len(node) != n:
        raise ConfigError(f"{where}: expected {n} rows")
    return np.vstack([_as_vector(row, n, f"{where}[{i}]")
                      for i, row in enumerate(node)])


def _parse_model(node, where: str) -> tuple[NetworkModel, tuple[str, ...]]:
    node = _expect_mapping(node, where)
    _check_keys(node, {"n", "m", "h", "nodes", "viruses"},
                {"n", "m", "viruses"}, where)
    n = _as_int(node["n"], f"{where}.n")
    m = _as_int(node["m"], f"{where}.m")
    h = _as_float(node.get("h", 1.0), f"{where}.h")
    labels = node.get("nodes", [f"node{i}" for i in range(n)])
    if not isinstance(labels, list) or len(labels) != n:
        raise ConfigError(f"{where}.nodes: expected {n} labels")
    labels = tuple(str(v) for v in labels)

    viruses = node["viruses"]
    if not isinstance(viruses, list) or len(viruses) != m:
        raise ConfigError(f"{where}.viruses: expected {m} entries")
    beta, gamma, c, names = [], [], [], []
    for k, venter in enumerate(viruses):
        vwhere = f"{where}.viruses[{k}]"
        venter = _expect_mapping(venter, vwhere)
        _check_keys(venter, {"name", "beta", "gamma", "c"},
                    {"beta", "gamma", "c"}, vwhere)
        names.append(str(venter.get("name", f"virus{k + 1}")))
        beta.append(_as_matrix(venter["beta"], n, f"{vwhere}.beta"))
        gamma.append(_as_vector(venter["gamma"], n, f"{vwhere}.gamma"))
        c.append(_as_vector(venter["c"], n, f"{vwhere}.c"))
    try:
        model = NetworkModel(beta=np.array(beta), gamma=np.array(gamma),
                             c=np.array(c), h=h, node_labels=labels)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return model, tuple(names)


def _parse_per_virus(node, model: NetworkModel, where: str) -> np.ndarray:
    if not isinstance(node, list) or len(node) != model.m:
        raise ConfigError(f"{where}: expected {model.m} per-virus rows")
    return np.vstack([_as_vector(row, model.n, f"{where}[{k}]")
                      for k, row in enumerate(node)])


def _parse_initial(node, model: NetworkModel, where: str) -> EpidemicState:
    node = _expect_mapping(node, where)
    _check_keys(node, {"x", "r"}, {"x"}, where)
    x0 = _parse_per_virus(node["x"], model, f"{where}.x")
    r0 = None
    if "r" in node:
        r0 = _as_vector(node["r"], model.n, f"{where}.r")
    return initial_state(model, x0, r0)


def _parse_observer(node, model: NetworkModel, where: str) -> ObserverSettings:
    node = _expect_mapping(node, where)
    _check_keys(node, {"x_hat", "r_hat", "gains", "synthesize"}, {"x_hat"}, where)
    x_hat0 = _parse_per_virus(node["x_hat"], model, f"{where}.x_hat")
    r_hat0 = None
    if "r_hat" in node:
        r_hat0 = _as_vector(node["r_hat"], model.n, f"{where}.r_hat")
    gains = None
    if "gains" in node:
        gains = ObserverGain(_parse_per_virus(node["gains"], model, f"{where}.gains"))
    synth = None
    if "synthesize" in node:
        swhere = f"{where}.synthesize"
        snode = _expect_mapping(node["synthesize"], swhere)
        _check_keys(snode, {"tau", "l"}, {"tau", "l"}, swhere)
        tau_node = snode["tau"]
        tau: Union[tuple[float, ...], str]
        if tau_node == "grid":
            tau = "grid"
        elif isinstance(tau_node, list):
            if len(tau_node) != model.m:
                raise ConfigError(f"{swhere}.tau: expected {model.m} values")
            tau = tuple(_as_float(v, f"{swhere}.tau[{k}]")
                        for k, v in enumerate(tau_node))
        else:
            tau = (_as_float(tau_node, f"{swhere}.tau"),) * model.m
        synth = SynthesisSettings(tau=tau, l=_as_float(snode["l"], f"{swhere}.l"))
    return ObserverSettings(x_hat0=x_hat0, r_hat0=r_hat0, gains=gains,
                            synthesize=synth)


def _parse_control(node, where: str) -> ControlSettings:
    node = _expect_mapping(node, where)
    _check_keys(node, {"mode", "horizon"}, {"mode"}, where)
    mode = str(node["mode"])
    if mode not in ("true-state", "estimated-state"):
        raise ConfigError(
            f"{where}.mode: expected 'true-state' or 'estimated-state', "
            f"got {mode!r}")
    return ControlSettings(mode=mode,
                           horizon=_as_int(node.get("horizon", 200),
                                           f"{where}.horizon"))


def _parse_run(node, where: str) -> RunSettings:
    node = _expect_mapping(node, where)
    _check_keys(node, {"horizon", "out_dir", "pipelines"}, set(), where)
    pipelines = node.get("pipelines", list(PIPELINES))
    if not isinstance(pipelines, list) or not pipelines:
        raise ConfigError(f"{where}.pipelines: expected a non-empty list")
    for p in pipelines:
        if p not in PIPELINES:
            raise ConfigError(
                f"{where}.pipelines: unknown pipeline {p!r} "
                f"(choose from {list(PIPELINES)})")
    return RunSettings(
        horizon=_as_int(node.get("horizon", 500), f"{where}.horizon"),
        out_dir=str(node.get("out_dir", "out")),
        pipelines=tuple(pipelines))


def parse_scenario(data: dict, source: str = "<memory>") -> ScenarioConfig:
    """Build and validate a scenario from already-parsed YAML data."""
    data = _expect_mapping(data, source)
    _check_keys(data, {"model", "initial", "observer", "control", "run"},
                {"model", "initial"}, source)
    model, names = _parse_model(data["model"], f"{source}:model")
    state0 = _parse_initial(data["initial"], model, f"{source}:initial")

    report = validate(model, state0)
    if not report.passed:
        lines = "; ".join(str(c) for c in report.failures())
        raise ConfigError(f"{source}: model assumptions violated: {lines}")

    observer = None
    if "observer" in data:
        observer = _parse_observer(data["observer"], model, f"{source}:observer")
    control = None
    if "control" in data:
        control = _parse_control(data["control"], f"{source}:control")
        if control.mode == "estimated-state" and (
                observer is None or (observer.gains is None
                                     and observer.synthesize is None)):
            raise ConfigError(
                f"{source}:control: estimated-state mode requires an "
                f"observer block with gains or a synthesize directive")
    run = _parse_run(data.get("run", {}), f"{source}:run")
    return ScenarioConfig(model=model, initial=state0, virus_names=names,
                          run=run, observer=observer, control=control,
                          source=source)


def load_scenario(path) -> ScenarioConfig:
    """Load and fully validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read scenario file: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse error: {exc}") from exc
    return parse_scenario(data, source=str(path))


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    """Plain-python tree for dumping; inverse of ``parse_scenario``."""
    model = cfg.model
    data: dict = {
        "model": {
            "n": model.n,
            "m": model.m,
            "h": model.h,
            "nodes": list(model.node_labels),
            "viruses": [
                {
                    "name": cfg.virus_names[k],
                    "beta": model.beta[k].tolist(),
                    "gamma": model.gamma[k].tolist(),
                    "c": model.c[k].tolist(),
                }
                for k in range(model.m)
            ],
        },
        "initial": {
            "x": cfg.initial.x.tolist(),
            "r": cfg.initial.r.tolist(),
        },
    }
    if cfg.observer is not None:
        obs: dict = {"x_hat": cfg.observer.x_hat0.tolist()}
        if cfg.observer.r_hat0 is not None:
            obs["r_hat"] = cfg.observer.r_hat0.tolist()
        if cfg.observer.gains is not None:
            obs["gains"] = cfg.observer.gains.L.tolist()
        if cfg.observer.synthesize is not None:
            synth = cfg.observer.synthesize
            obs["synthesize"] = {
                "tau": synth.tau if isinstance(synth.tau, str) else list(synth.tau),
                "l": synth.l,
            }
        data["observer"] = obs
    if cfg.control is not None:
        data["control"] = {"mode": cfg.control.mode,
                           "horizon": cfg.control.horizon}
    data["run"] = {"horizon": cfg.run.horizon, "out_dir": cfg.run.out_dir,
                   "pipelines": list(cfg.run.pipelines)}
    return data


def dump_scenario(cfg: ScenarioConfig) -> str:
    """Serialize a scenario back to YAML; reloads to an equivalent config."""
    return yaml.safe_dump(scenario_to_dict(cfg), sort_keys=False)
