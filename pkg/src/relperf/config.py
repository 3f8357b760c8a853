"""Run configuration: JSON ingestion, schema validation, figure presets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from relperf.equilibria import Setting
from relperf.errors import DomainError
from relperf.model import (
    AgentType,
    ModelKind,
    Population,
    TypeDistribution,
    reparam_exclude_self,
)
from relperf.simulation import SimConfig


class ConfigError(DomainError):
    """Malformed or inconsistent configuration."""


def load_schema() -> dict:
    text = resources.files("relperf").joinpath("schema/config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class Axis:
    param: str
    label: str
    values: tuple[float, ...]

    @property
    def scope(self) -> str:
        """``"probe"``, an agent index as text, or ``""`` for every agent."""
        return self.param.rpartition(".")[0]

    @property
    def field_name(self) -> str:
        return self.param.rpartition(".")[2]


@dataclass(frozen=True)
class SweepSpec:
    axes: tuple[Axis, ...]
    target: int = 0
    probe: AgentType | None = None


@dataclass(frozen=True)
class ConvergenceSpec:
    mode: str = "replicated_type"
    n_list: tuple[int, ...] = (8, 16, 32, 64, 128)
    replications: int = 1


@dataclass(frozen=True)
class RunConfig:
    kind: ModelKind
    setting: Setting
    source: Population | TypeDistribution
    horizon: float = 1.0
    exclude_self: bool = False
    strategies: np.ndarray | None = None
    simulation: SimConfig = field(default_factory=SimConfig)
    tolerance: float = 1e-6
    sweep: SweepSpec | None = None
    convergence: ConvergenceSpec | None = None


def grid_values(lo: float, hi: float, size: int) -> tuple[float, ...]:
    """Inclusive uniform grid. ``lo + (hi - lo) * i / (size - 1)`` keeps exact midpoints exact."""
    if size < 2:
        raise ConfigError("grid size must be >= 2")
    if not hi > lo:
        raise ConfigError(f"grid needs max > min (got [{lo}, {hi}])")
    span = hi - lo
    return tuple(lo + span * i / (size - 1) for i in range(size))


def _agent(raw: dict) -> AgentType:
    return AgentType(
        x0=float(raw.get("x0", 1.0)),
        delta=float(raw["delta"]),
        theta=float(raw["theta"]),
        mu=float(raw["mu"]),
        nu=float(raw["nu"]),
        sigma=float(raw["sigma"]),
    )


def _read_json(path: Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None


def _inline_or_file(raw: dict, key: str, base: Path):
    inline, ref = raw.get(key), raw.get(f"{key}_file")
    if inline is not None and ref is not None:
        raise ConfigError(f"give either {key} or {key}_file, not both")
    if ref is not None:
        return _read_json(base / ref)
    return inline


def _check_items(data: Any, definition: str, what: str) -> None:
    # file-sourced arrays bypass the top-level schema, so check them here
    schema = load_schema()
    sub = {"$defs": schema["$defs"], "type": "array", "minItems": 1, "items": {"$ref": f"#/$defs/{definition}"}}
    try:
        jsonschema.validate(data, sub)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{what} invalid at {where}: {exc.message}") from None


def parse_config(raw: dict, base_dir: Path | str = ".") -> RunConfig:
    """Validate a decoded config document and build a :class:`RunConfig`."""
    base = Path(base_dir)
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None

    kind = ModelKind.parse(raw["model"])
    population = _inline_or_file(raw, "population", base)
    distribution = _inline_or_file(raw, "distribution", base)
    if (population is None) == (distribution is None):
        raise ConfigError("exactly one of population/distribution must be given")

    if population is not None:
        _check_items(population, "agent", "population")
        agents = [_agent(a) for a in population]
        exclude = bool(raw.get("exclude_self", False))
        if exclude:
            n = len(agents)
            mapped = []
            for a in agents:
                delta, theta = reparam_exclude_self(kind, a.delta, a.theta, n)
                mapped.append(a.replace(delta=delta, theta=theta))
            agents = mapped
        source: Population | TypeDistribution = Population(tuple(agents))
        implied = Setting.NASH
    else:
        if raw.get("exclude_self"):
            raise ConfigError("exclude_self applies to n-agent populations only")
        _check_items(distribution, "atom", "distribution")
        atoms = [(_agent(a["type"]), float(a["weight"])) for a in distribution]
        source = TypeDistribution.from_pairs(atoms)
        implied = Setting.MEAN_FIELD
    setting = Setting.parse(raw.get("setting", implied.value))
    if setting is not implied:
        raise ConfigError(
            f"setting {setting.value!r} does not match the data source"
            f" ({'population' if implied is Setting.NASH else 'distribution'})"
        )
    source.validate(kind)

    strategies = _inline_or_file(raw, "strategies", base)
    if strategies is not None:
        strategies = np.array([float(s) for s in strategies])
        if strategies.shape[0] != len(source.agents):
            raise ConfigError(f"{strategies.shape[0]} strategies for {len(source.agents)} agents")

    horizon = float(raw.get("horizon", 1.0))
    sim_raw = raw.get("simulation", {})
    simulation = SimConfig(
        horizon=horizon,
        num_paths=int(sim_raw.get("num_paths", 100_000)),
        seed=int(sim_raw.get("seed", 0)),
        num_agents_sampled=int(sim_raw.get("num_agents_sampled", 10_000)),
        time_steps=int(sim_raw.get("time_steps", 1)),
    )
    tolerance = float(raw.get("verification", {}).get("tolerance", 1e-6))

    sweep = None
    if "sweep" in raw:
        sweep = _parse_sweep(raw["sweep"], source, setting)
    conv = None
    if "convergence" in raw:
        c = raw["convergence"]
        if setting is not Setting.MEAN_FIELD:
            raise ConfigError("convergence studies need a distribution")
        conv = ConvergenceSpec(
            mode=c.get("mode", "replicated_type"),
            n_list=tuple(int(n) for n in c["n_list"]),
            replications=int(c.get("replications", 1)),
        )
    return RunConfig(
        kind=kind,
        setting=setting,
        source=source,
        horizon=horizon,
        exclude_self=bool(raw.get("exclude_self", False)),
        strategies=strategies,
        simulation=simulation,
        tolerance=tolerance,
        sweep=sweep,
        convergence=conv,
    )


def _parse_sweep(raw: dict, source, setting: Setting) -> SweepSpec:
    probe = _agent(raw["probe"]) if "probe" in raw else None
    if probe is not None and setting is not Setting.MEAN_FIELD:
        raise ConfigError("a sweep probe needs a distribution (mean-field setting)")
    n = len(source.agents)
    target = int(raw.get("target", 0))
    if probe is None and target >= n:
        raise ConfigError(f"sweep target {target} out of range for {n} agents")
    axes = []
    for a in raw["axes"]:
        param = a["param"]
        scope = param.rpartition(".")[0]
        if scope == "probe" and probe is None:
            raise ConfigError(f"axis {param!r} needs a sweep probe")
        if scope not in ("", "probe") and int(scope) >= n:
            raise ConfigError(f"axis {param!r} references a missing agent")
        axes.append(Axis(param, a.get("label", param.replace(".", "_")), grid_values(float(a["min"]), float(a["max"]), int(a["size"]))))
    labels = [a.label for a in axes]
    if len(set(labels)) != len(labels):
        raise ConfigError("sweep axis labels must be distinct")
    return SweepSpec(tuple(axes), target, probe)


def load_config(path: Path | str) -> RunConfig:
    path = Path(path)
    raw = _read_json(path)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return parse_config(raw, path.parent)


def _point_mass(delta: float, theta: float, mu: float, sigma: float) -> list:
    return [{"type": {"x0": 1.0, "delta": delta, "theta": theta, "mu": mu, "nu": 0.0, "sigma": sigma}, "weight": 1.0}]


def preset(name: str) -> dict:
    """Figure presets: a single-stock population plus a probe agent.

    fig1 (CARA) sweeps the probe's theta against the population's theta,
    with delta=5, population delta=6 and mu=sigma=1. The population theta
    stops at 0.95 to stay where an equilibrium exists.
    fig2 (CRRA) sweeps the probe's delta against the population's theta,
    with probe theta=3/4, population delta=2, mu=5, sigma=1.
    fig3 (CRRA) sweeps the probe's delta and theta with population
    theta=1/5, delta=2, mu=5, sigma=1.
    """
    if name == "fig1":
        return {
            "model": "cara",
            "setting": "mean_field",
            "distribution": _point_mass(6.0, 0.0, 1.0, 1.0),
            "sweep": {
                "probe": {"x0": 1.0, "delta": 5.0, "theta": 0.0, "mu": 1.0, "nu": 0.0, "sigma": 1.0},
                "axes": [
                    {"param": "probe.theta", "label": "theta", "min": 0.0, "max": 1.0, "size": 21},
                    {"param": "theta", "label": "theta_bar", "min": 0.0, "max": 0.95, "size": 20},
                ],
            },
        }
    if name == "fig2":
        return {
            "model": "crra",
            "setting": "mean_field",
            "distribution": _point_mass(2.0, 0.0, 5.0, 1.0),
            "sweep": {
                "probe": {"x0": 1.0, "delta": 1.0, "theta": 0.75, "mu": 5.0, "nu": 0.0, "sigma": 1.0},
                "axes": [
                    {"param": "probe.delta", "label": "delta", "min": 0.5, "max": 5.0, "size": 19},
                    {"param": "theta", "label": "theta_bar", "min": 0.0, "max": 1.0, "size": 21},
                ],
            },
        }
    if name == "fig3":
        return {
            "model": "crra",
            "setting": "mean_field",
            "distribution": _point_mass(2.0, 0.2, 5.0, 1.0),
            "sweep": {
                "probe": {"x0": 1.0, "delta": 1.0, "theta": 0.0, "mu": 5.0, "nu": 0.0, "sigma": 1.0},
                "axes": [
                    {"param": "probe.delta", "label": "delta", "min": 0.5, "max": 5.0, "size": 19},
                    {"param": "probe.theta", "label": "theta", "min": 0.0, "max": 1.0, "size": 21},
                ],
            },
        }
    raise ConfigError(f"unknown preset {name!r}; expected fig1, fig2 or fig3")
