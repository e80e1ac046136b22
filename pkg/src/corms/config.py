"""Run configuration: a versioned TOML file with typed sections.

The file needs a top-level `config_version = 1` plus `[model]`, `[chain]`,
`[data]` and `[output]` sections; `[base_measure]` is optional. Validation
collects every problem it can find before failing, so one round trip
reports all mistakes. See the package README for the full key reference.
"""

from __future__ import annotations

from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .data import SCENARIO_NAMES, GroupedData, ScenarioTruth, generate_scenario, ingest_csv
from .errors import ConfigError
from .kernels import BaseMeasureSpec, KernelSpec
from .posterior import ImportanceSpec
from .samplers import ChainConfig, ModelSpec

__all__ = ["DataSource", "OutputSpec", "RunConfig", "load_config", "build_config"]

CONFIG_VERSION = 1

_MODEL_KEYS = {
    "kind",
    "kernel",
    "directing",
    "sigma_prior",
    "phi",
    "phi_prior",
    "q",
    "beta",
}
_BASE_KEYS = {"a0", "m1", "s1sq", "a1", "b1", "c1", "d1", "update_hypers"}
_CHAIN_KEYS = {
    "iterations",
    "burn_in",
    "thinning",
    "epsilon",
    "fixed_jump_sampler",
    "importance_draws",
    "step_sigma",
    "step_phi",
    "seed",
}
_DATA_KEYS = {
    "path",
    "group_column",
    "value_column",
    "scenario",
    "n_per_group",
    "scenario_seed",
}
_OUTPUT_KEYS = {"chain_path", "store_densities", "grid_points", "level"}


@dataclass(frozen=True)
class DataSource:
    """Where observations come from: a CSV file or a named scenario."""

    path: str | None = None
    group_column: str = "group"
    value_column: str = "value"
    scenario: str | None = None
    n_per_group: int = 50
    scenario_seed: int = 1

    def load(self) -> tuple[GroupedData, ScenarioTruth | None]:
        if self.path is not None:
            return ingest_csv(self.path, self.group_column, self.value_column), None
        data, truth = generate_scenario(
            self.scenario, self.n_per_group, self.scenario_seed
        )
        return data, truth


@dataclass(frozen=True)
class OutputSpec:
    chain_path: str = "chain.jsonl"
    store_densities: bool = False
    grid_points: int = 512
    level: float = 0.95


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    chain: ChainConfig
    data: DataSource
    output: OutputSpec


def _expect(table: dict, section: str, allowed: set, problems: list) -> None:
    for key in table:
        if key not in allowed:
            problems.append(f"[{section}] has unknown key {key!r}")


def _number(table, section, key, problems, default=None, required=False):
    if key not in table:
        if required:
            problems.append(f"[{section}] is missing required key {key!r}")
        return default
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        problems.append(f"[{section}] {key} must be a number")
        return default
    return float(value)


def _integer(table, section, key, problems, default=None):
    if key not in table:
        return default
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, int):
        problems.append(f"[{section}] {key} must be an integer")
        return default
    return int(value)


def _pair(table, section, key, problems, default=None):
    if key not in table:
        return default
    value = table[key]
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
    ):
        problems.append(f"[{section}] {key} must be a pair of numbers")
        return default
    return (float(value[0]), float(value[1]))


def _string(table, section, key, problems, default=None, choices=None):
    if key not in table:
        return default
    value = table[key]
    if not isinstance(value, str):
        problems.append(f"[{section}] {key} must be a string")
        return default
    if choices is not None and value not in choices:
        problems.append(
            f"[{section}] {key} must be one of {', '.join(sorted(choices))}"
        )
        return default
    return value


def _boolean(table, section, key, problems, default):
    if key not in table:
        return default
    value = table[key]
    if not isinstance(value, bool):
        problems.append(f"[{section}] {key} must be true or false")
        return default
    return value


def build_config(raw: dict) -> RunConfig:
    """Validate a parsed configuration mapping into a RunConfig."""
    problems: list[str] = []
    version = raw.get("config_version")
    if version != CONFIG_VERSION:
        problems.append(
            f"config_version must be {CONFIG_VERSION}, found {version!r}"
        )
    for section in ("model", "chain", "data", "output"):
        if section in raw and not isinstance(raw[section], dict):
            problems.append(f"[{section}] must be a table")
    model_raw = raw.get("model") or {}
    base_raw = raw.get("base_measure") or {}
    chain_raw = raw.get("chain") or {}
    data_raw = raw.get("data") or {}
    output_raw = raw.get("output") or {}
    for key in raw:
        if key not in (
            "config_version",
            "model",
            "base_measure",
            "chain",
            "data",
            "output",
        ):
            problems.append(f"unknown top-level key {key!r}")

    _expect(model_raw, "model", _MODEL_KEYS, problems)
    _expect(base_raw, "base_measure", _BASE_KEYS, problems)
    _expect(chain_raw, "chain", _CHAIN_KEYS, problems)
    _expect(data_raw, "data", _DATA_KEYS, problems)
    _expect(output_raw, "output", _OUTPUT_KEYS, problems)

    kind = _string(model_raw, "model", "kind", problems, default="corm",
                   choices={"corm", "ncorm"})
    kernel_name = _string(model_raw, "model", "kernel", problems,
                          default="gaussian", choices={"gaussian", "lognormal"})
    directing = _string(model_raw, "model", "directing", problems,
                        default="stable")
    sigma_prior = _pair(model_raw, "model", "sigma_prior", problems,
                        default=(2.0, 2.0))
    phi = _number(model_raw, "model", "phi", problems)
    phi_prior = _pair(model_raw, "model", "phi_prior", problems)
    if phi is not None and phi_prior is not None:
        problems.append("[model] phi and phi_prior are mutually exclusive")
    if phi is None and phi_prior is None:
        phi = 1.0
    q = _integer(model_raw, "model", "q", problems)
    beta = _number(model_raw, "model", "beta", problems)
    if kind == "corm":
        if q is not None:
            problems.append("[model] q applies to the nested model only")
        if beta is not None:
            problems.append("[model] beta applies to the nested model only")

    base_kwargs = {}
    for key in ("a0", "m1", "s1sq", "a1", "b1", "c1", "d1"):
        value = _number(base_raw, "base_measure", key, problems)
        if value is not None:
            base_kwargs[key] = value
    base_kwargs["update_hypers"] = _boolean(
        base_raw, "base_measure", "update_hypers", problems, True
    )

    iterations = _integer(chain_raw, "chain", "iterations", problems)
    burn_in = _integer(chain_raw, "chain", "burn_in", problems)
    thinning = _integer(chain_raw, "chain", "thinning", problems)
    epsilon = _number(chain_raw, "chain", "epsilon", problems)
    sampler = _string(chain_raw, "chain", "fixed_jump_sampler", problems,
                      default="grid", choices={"grid", "sir"})
    importance_draws = _integer(chain_raw, "chain", "importance_draws", problems)
    step_sigma = _number(chain_raw, "chain", "step_sigma", problems)
    step_phi = _number(chain_raw, "chain", "step_phi", problems)
    seed = _integer(chain_raw, "chain", "seed", problems, default=0)

    path = _string(data_raw, "data", "path", problems)
    scenario = _string(data_raw, "data", "scenario", problems,
                       choices=set(SCENARIO_NAMES))
    if (path is None) == (scenario is None):
        problems.append("[data] needs exactly one of path or scenario")
    n_per_group = _integer(data_raw, "data", "n_per_group", problems, default=50)
    scenario_seed = _integer(data_raw, "data", "scenario_seed", problems, default=1)
    group_column = _string(data_raw, "data", "group_column", problems,
                           default="group")
    value_column = _string(data_raw, "data", "value_column", problems,
                           default="value")
    if n_per_group is not None and n_per_group < 1:
        problems.append("[data] n_per_group must be at least 1")

    chain_path = _string(output_raw, "output", "chain_path", problems,
                         default="chain.jsonl")
    store_densities = _boolean(output_raw, "output", "store_densities",
                               problems, False)
    grid_points = _integer(output_raw, "output", "grid_points", problems,
                           default=512)
    level = _number(output_raw, "output", "level", problems, default=0.95)
    if grid_points is not None and grid_points < 2:
        problems.append("[output] grid_points must be at least 2")
    if level is not None and not (0.0 < level < 1.0):
        problems.append("[output] level must lie in (0, 1)")

    if problems:
        raise ConfigError(problems)

    model_kwargs = dict(
        kind=kind,
        kernel=KernelSpec(kernel_name),
        base=BaseMeasureSpec(**base_kwargs),
        directing=directing,
        sigma_prior=sigma_prior,
        phi=phi,
    )
    if phi_prior is not None:
        model_kwargs["phi_prior"] = phi_prior
    if kind == "ncorm":
        model_kwargs["q"] = q if q is not None else 2
        model_kwargs["beta"] = beta if beta is not None else 1.0

    chain_kwargs = dict(seed=seed, fixed_jump_sampler=sampler)
    if iterations is not None:
        chain_kwargs["iterations"] = iterations
    if burn_in is not None:
        chain_kwargs["burn_in"] = burn_in
    if thinning is not None:
        chain_kwargs["thinning"] = thinning
    if epsilon is not None:
        chain_kwargs["epsilon"] = epsilon
    if importance_draws is not None:
        chain_kwargs["importance"] = ImportanceSpec(r=importance_draws)
    if step_sigma is not None:
        chain_kwargs["step_sigma"] = step_sigma
    if step_phi is not None:
        chain_kwargs["step_phi"] = step_phi

    return RunConfig(
        model=ModelSpec(**model_kwargs),
        chain=ChainConfig(**chain_kwargs),
        data=DataSource(
            path=path,
            group_column=group_column,
            value_column=value_column,
            scenario=scenario,
            n_per_group=n_per_group,
            scenario_seed=scenario_seed,
        ),
        output=OutputSpec(
            chain_path=chain_path,
            store_densities=store_densities,
            grid_points=grid_points,
            level=level,
        ),
    )


def load_config(path) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path} is not valid TOML: {exc}") from exc
    return build_config(raw)
