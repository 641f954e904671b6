"""TOML experiment configuration with a strict, self-documenting schema.

Unknown sections or keys are rejected so an experiment file always means
exactly what it says; the CLI help is generated from the same schema the
parser enforces.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

from .engine import SimulationConfig
from .errors import ConfigError
from .observation import NoiseSpec
from .topology import Topology

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class Field:
    kind: str  # int | float | bool | str | int_list
    default: object
    help: str
    required: bool = False


SCHEMA = {
    "model": {
        "dim": Field("int", None, "parameter dimension d", required=True),
        "n_good": Field("int", None, "number of good agents", required=True),
        "truth_radius": Field("float", 1.0, "true parameter drawn uniform in [-radius, radius]"),
    },
    "run": {
        "rounds": Field("int", None, "number of synchronous rounds T", required=True),
        "b": Field("int", None, "fault budget and trim parameter", required=True),
        "seed": Field("int", 0, "master seed; all streams derive from it"),
        "fault_ids": Field("int_list", [], "agent ids controlled by the adversary"),
        "epsilon": Field("float", 0.0, "confidence slack in the logged error envelope"),
        "init": Field("str", "zero", "initial estimates: 'zero' or 'random'"),
        "init_radius": Field("float", 1.0, "radius of the random-init box"),
        "per_agent_every": Field("int", 0, "per-agent error columns cadence (0 = off)"),
        "feasibility_checks": Field(
            "bool", False, "assert capped-convex feasibility of every aggregate (slow)"
        ),
        "divergence_limit": Field("float", 1e12, "halt and flag when any |coordinate| passes this"),
    },
    "topology": {
        "kind": Field("str", "complete", "'complete' or 'file'"),
        "path": Field("str", "", "edge-list file (for kind = 'file'), relative to the config"),
    },
    "observation": {
        "n_rows": Field("int", None, "measurement rows per agent n_i", required=True),
        "multiplicity": Field(
            "int", None, "good agents observing each coordinate", required=True
        ),
    },
    "noise": {
        "kind": Field("str", "zero", "'zero', 'uniform_box', or 'truncated_gaussian'"),
        "variance": Field("float", 0.0, "per-component variance of the measurement noise"),
        "bound_c": Field("float", 0.0, "almost-sure noise norm bound (0 = derive from variance)"),
    },
    "adversary": {
        "strategy": Field(
            "str", "none", "'none', 'gaussian_noise', 'extreme_coordinate', or 'pull_toward'"
        ),
        "sigma": Field("float", 3.0, "per-component std dev of the gaussian_noise attack"),
        "direction": Field(
            "str", "alternating", "extreme_coordinate signs: 'alternating', 'positive', 'negative'"
        ),
        "margin": Field("float", 1e6, "how far beyond the good range extreme values sit"),
        "target": Field("float", 0.0, "coordinate value the pull_toward attack drifts to"),
    },
    "sweep": {
        "fault_counts": Field("int_list", [], "adversary counts to sweep (complete graphs)"),
        "seeds": Field("int_list", [], "seeds per sweep point (empty = master seed only)"),
    },
}


def _convert(section: str, key: str, field: Field, value):
    kind = field.kind
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{section}.{key} must be an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{key} must be a number, got {value!r}")
        return float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{key} must be a boolean, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{section}.{key} must be a string, got {value!r}")
        return value
    if kind == "int_list":
        if not isinstance(value, list) or any(
            isinstance(v, bool) or not isinstance(v, int) for v in value
        ):
            raise ConfigError(f"{section}.{key} must be a list of integers, got {value!r}")
        return list(value)
    raise AssertionError(f"unhandled field kind {kind}")


def parse_document(doc: dict) -> dict:
    """Validate a parsed TOML document against the schema; returns the
    fully-defaulted {section: {key: value}} table."""
    out = {}
    for section, table in doc.items():
        if section not in SCHEMA:
            raise ConfigError(
                f"unknown section [{section}]; expected one of {sorted(SCHEMA)}"
            )
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key in table:
            if key not in SCHEMA[section]:
                raise ConfigError(
                    f"unknown key {section}.{key}; expected one of {sorted(SCHEMA[section])}"
                )
    for section, fields in SCHEMA.items():
        table = doc.get(section, {})
        resolved = {}
        for key, field in fields.items():
            if key in table:
                resolved[key] = _convert(section, key, field, table[key])
            elif field.required:
                raise ConfigError(f"missing required key {section}.{key}")
            else:
                resolved[key] = field.default
        out[section] = resolved
    return out


def _build_noise(noise_table: dict, n_rows: int) -> NoiseSpec | None:
    kind = noise_table["kind"]
    variance = noise_table["variance"]
    bound = noise_table["bound_c"]
    if kind == "zero":
        return None
    if variance <= 0.0:
        raise ConfigError(f"noise.variance must be positive for kind {kind!r}")
    if kind == "uniform_box":
        return NoiseSpec.uniform([variance] * n_rows, bound or None)
    if kind == "truncated_gaussian":
        if bound <= 0.0:
            raise ConfigError("truncated_gaussian noise requires noise.bound_c > 0")
        import numpy as np

        return NoiseSpec.truncated_gaussian(variance * np.eye(n_rows), bound)
    raise ConfigError(f"unknown noise kind {kind!r}")


def build_simulation_config(tables: dict, base_dir: Path) -> tuple:
    """Build (SimulationConfig, sweep) from validated tables.

    ``sweep`` is a (fault_counts, seeds) pair; empty fault_counts means a
    single run of the base config.
    """
    model = tables["model"]
    run_t = tables["run"]
    topo_t = tables["topology"]
    obs = tables["observation"]
    adv = tables["adversary"]
    sweep = tables["sweep"]

    topology = None
    if topo_t["kind"] == "file":
        if not topo_t["path"]:
            raise ConfigError("topology.kind = 'file' requires topology.path")
        graph_path = (base_dir / topo_t["path"]).resolve()
        topology = Topology.from_text(graph_path.read_text())
    elif topo_t["kind"] != "complete":
        raise ConfigError(f"unknown topology.kind {topo_t['kind']!r}")

    adversary_params = {}
    if adv["strategy"] == "gaussian_noise":
        adversary_params = {"sigma": adv["sigma"]}
    elif adv["strategy"] == "extreme_coordinate":
        adversary_params = {"direction": adv["direction"], "margin": adv["margin"]}
    elif adv["strategy"] == "pull_toward":
        adversary_params = {"target": adv["target"]}

    config = SimulationConfig(
        dim=model["dim"],
        n_good=model["n_good"],
        b=run_t["b"],
        rounds=run_t["rounds"],
        n_rows=obs["n_rows"],
        multiplicity=obs["multiplicity"],
        fault_ids=tuple(run_t["fault_ids"]),
        topology=topology,
        noise=_build_noise(tables["noise"], obs["n_rows"]),
        adversary=adv["strategy"],
        adversary_params=adversary_params,
        init=run_t["init"],
        init_radius=run_t["init_radius"],
        truth_radius=model["truth_radius"],
        seed=run_t["seed"],
        slack=run_t["epsilon"],
        per_agent_every=run_t["per_agent_every"],
        feasibility_checks=run_t["feasibility_checks"],
        divergence_limit=run_t["divergence_limit"],
    )
    return config, (tuple(sweep["fault_counts"]), tuple(sweep["seeds"]))


def load_config(path) -> tuple:
    """Parse, validate, and build a config file; returns (config, sweep)."""
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file is not valid TOML: {exc}")
    tables = parse_document(doc)
    return build_simulation_config(tables, path.parent)


def schema_help() -> str:
    """Human-readable listing of every config key, for --help."""
    lines = ["configuration file keys (TOML):"]
    for section, fields in SCHEMA.items():
        lines.append(f"  [{section}]")
        for key, field in fields.items():
            req = " (required)" if field.required else f" (default {field.default!r})"
            lines.append(f"    {key}: {field.help}{req}")
    return "\n".join(lines)
