"""TOML run configuration.

Schema (every section optional, defaults in brackets)::

    seed = 0

    [topology]            # pick one layout
    groups = 5            # G [5]
    users_per_group = 2   # n, equal groups [2]
    subgroups = [1, 2, 2] # L, with subgroup_size
    subgroup_size = 2     # nbar
    group_sizes = [3, 4]  # unequal groups

    [quantizers]
    levels = [2, 6, 8, 10, 12]
    r1 = -1.0
    r2 = 1.0

    [task]
    kind = "quadratic"    # or "logistic_blobs"
    model_size = 20
    samples_per_user = 20
    batch_size = 5        # omit for full batch
    curvature = [0.2, 1.0]
    spread = 0.4
    separation = 1.0
    noise = 1.0
    l2 = 0.01

    [training]
    rounds = 100
    lr = 0.5              # omit for 1/L
    aggregator = "mean"   # or "median"
    threshold = 4         # omit for ceil(N/2)+1

    [attack]
    kind = "none"         # gaussian | sign_flip | label_flip
    byzantine = [0]
    sigma = 5.0
    multiplier = -5.0
    label_multiplier = 30.0

    [dropout]
    p = 0.0

    [comm]
    rates = [1e6, 2e6, 2e6, 2e6, 2e6]   # bit/s per group
    model_size = 79510                  # elements used for time estimates
    rounds = 200
    download_bits = 0

    [[scenario]]          # compare only; overrides quantizer levels
    name = "heterogeneous"
    levels = [2, 6, 8, 10, 12]

Overrides use ``section.key=value`` with a TOML value, e.g.
``training.rounds=50`` or ``quantizers.levels=[2,2,2,2,2]``.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .byzantine import AttackSpec
from .errors import ConfigError
from .sim import RoundConfig, TaskSpec

_SECTIONS = {
    "topology": {"groups", "users_per_group", "subgroups", "subgroup_size", "group_sizes"},
    "quantizers": {"levels", "r1", "r2"},
    "task": {"kind", "model_size", "samples_per_user", "batch_size", "curvature", "spread",
             "separation", "noise", "l2"},
    "training": {"rounds", "lr", "aggregator", "threshold"},
    "attack": {"kind", "byzantine", "sigma", "multiplier", "label_multiplier"},
    "dropout": {"p"},
    "comm": {"rates", "model_size", "rounds", "download_bits"},
}


@dataclass
class LoadedConfig:
    """A RoundConfig plus the parts of the file it does not cover."""

    round: RoundConfig
    comm_model_size: int | None = None
    comm_rounds: int | None = None
    download_bits: int = 0
    scenarios: list[dict] = field(default_factory=list)


def _parse_value(text: str) -> Any:
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(data: dict, overrides: Sequence[str]) -> dict:
    data = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not section.key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) == 1:
            data[parts[0]] = _parse_value(value.strip())
        elif len(parts) == 2:
            data.setdefault(parts[0], {})[parts[1]] = _parse_value(value.strip())
        else:
            raise ConfigError(f"override key {key!r} nests too deeply")
    return data


def _check_keys(data: dict) -> None:
    for name, body in data.items():
        if name in ("seed", "scenario"):
            continue
        if name not in _SECTIONS:
            raise ConfigError(f"unknown config section [{name}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{name}] must be a table")
        unknown = set(body) - _SECTIONS[name]
        if unknown:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")


def config_from_dict(data: dict) -> LoadedConfig:
    """Build a LoadedConfig from parsed TOML.

    Raises:
        ConfigError: on unknown keys or invalid values.
    """
    _check_keys(data)
    topo = data.get("topology", {})
    quant = data.get("quantizers", {})
    task = data.get("task", {})
    train = data.get("training", {})
    attack = data.get("attack", {})
    comm = data.get("comm", {})

    G = int(topo.get("groups", 5))
    kwargs: dict[str, Any] = {"G": G}
    if "subgroups" in topo:
        kwargs.update(L=tuple(topo["subgroups"]), nbar=int(topo.get("subgroup_size", 1)), n=None)
    elif "group_sizes" in topo:
        kwargs.update(group_sizes=tuple(topo["group_sizes"]), n=None)
    else:
        kwargs["n"] = int(topo.get("users_per_group", 2))
    try:
        task_spec = TaskSpec(
            kind=task.get("kind", "quadratic"),
            samples_per_user=int(task.get("samples_per_user", 20)),
            batch_size=task.get("batch_size"),
            curvature=tuple(task.get("curvature", (0.2, 1.0))),
            spread=float(task.get("spread", 0.4)),
            separation=float(task.get("separation", 1.0)),
            noise=float(task.get("noise", 1.0)),
            l2=float(task.get("l2", 0.01)),
        )
        attack_spec = AttackSpec(
            kind=attack.get("kind", "none"),
            byzantine=tuple(attack.get("byzantine", ())),
            sigma=float(attack.get("sigma", 5.0)),
            multiplier=float(attack.get("multiplier", -5.0)),
            label_multiplier=float(attack.get("label_multiplier", 30.0)),
        )
        rates = comm.get("rates")
        rc = RoundConfig(
            K=tuple(quant.get("levels", (2, 6, 8, 10, 12))),
            m=int(task.get("model_size", 20)),
            r1=float(quant.get("r1", -1.0)),
            r2=float(quant.get("r2", 1.0)),
            dropout=float(data.get("dropout", {}).get("p", 0.0)),
            attack=attack_spec,
            aggregator=train.get("aggregator", "mean"),
            lr=None if train.get("lr") is None else float(train["lr"]),
            rounds=int(train.get("rounds", 100)),
            task=task_spec,
            seed=int(data.get("seed", 0)),
            threshold=train.get("threshold"),
            rates=None if rates is None else tuple(float(r) for r in rates),
            **kwargs,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    scenarios = data.get("scenario", [])
    if not isinstance(scenarios, list):
        raise ConfigError("[[scenario]] entries must be an array of tables")
    return LoadedConfig(rc, comm.get("model_size"), comm.get("rounds"),
                        int(comm.get("download_bits", 0)), scenarios)


def load_config(path: str | None, overrides: Sequence[str] = ()) -> LoadedConfig:
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(apply_overrides(data, overrides))


def scenario_configs(loaded: LoadedConfig) -> list[RoundConfig]:
    """One RoundConfig per [[scenario]] entry (just the base if there are none)."""
    if not loaded.scenarios:
        return [replace(loaded.round, name=loaded.round.name or "base")]
    out = []
    for i, sc in enumerate(loaded.scenarios):
        if "levels" not in sc:
            raise ConfigError(f"scenario {i} has no levels")
        out.append(replace(loaded.round, K=tuple(sc["levels"]), name=sc.get("name", f"scenario{i}")))
    return out
