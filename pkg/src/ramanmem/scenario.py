"""Scenario files: schema validation, loading and typed access.

A scenario is a JSON document with named sections (state, channel, memory,
homodyne, tomography, sweeps, outputs) validated against the published
schema in ``schemas/scenario.schema.json``.  Unknown keys are errors, and
the master seed is mandatory; every random stream in a run derives from it.
"""

from __future__ import annotations

import json
import zlib
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

__all__ = ["ScenarioError", "Scenario", "load_scenario", "scenario_schema"]


class ScenarioError(ValueError):
    """Malformed or schema-violating scenario."""


_REQUIRED_SECTIONS = {
    "simulate-memory": ("memory",),
    "optimize-write": ("memory",),
    "simulate-homodyne": ("state", "homodyne"),
    "estimate-channel": ("state", "channel", "homodyne"),
    "tomography": ("state", "homodyne", "tomography"),
    "full-pipeline": ("state", "homodyne", "tomography"),
    "sweep-bandwidth": ("sweep_bandwidth",),
    "sweep-read-power": ("memory", "sweep_read_power"),
}

COMMANDS = tuple(_REQUIRED_SECTIONS)


def scenario_schema() -> dict:
    with resources.files("ramanmem.schemas").joinpath("scenario.schema.json").open() as fh:
        return json.load(fh)


class Scenario:
    """Validated scenario document with per-section accessors."""

    def __init__(self, data: dict, path: str | None = None):
        try:
            jsonschema.validate(data, scenario_schema())
        except jsonschema.ValidationError as exc:
            raise ScenarioError(f"scenario schema violation: {exc.message}") from exc
        self.data = data
        self.path = path

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def subseed(self, *labels) -> int:
        """Deterministic child seed derived from the master seed and labels."""
        tokens = [self.seed] + [zlib.crc32(str(label).encode()) for label in labels]
        return int(np.random.SeedSequence(tokens).generate_state(1)[0])

    def require(self, command: str):
        if command not in _REQUIRED_SECTIONS:
            raise ScenarioError(
                f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}"
            )
        missing = [s for s in _REQUIRED_SECTIONS[command] if s not in self.data]
        if command == "full-pipeline" and "channel" not in self.data \
                and "memory" not in self.data:
            missing.append("channel (or memory)")
        if missing:
            raise ScenarioError(
                f"command {command!r} needs scenario section(s): {', '.join(missing)}"
            )

    def section(self, name: str, default=None):
        return self.data.get(name, default if default is not None else {})

    @property
    def output_directory(self) -> str | None:
        return self.data.get("outputs", {}).get("directory")

    @property
    def formats(self):
        return tuple(self.data.get("outputs", {}).get("formats", ("csv", "json", "svg")))


def load_scenario(path, seed_override: int | None = None) -> Scenario:
    """Load and validate a scenario file.

    Raises :class:`ScenarioError` for unreadable or malformed files so the
    CLI can map every input problem to the schema-error exit code.
    """
    path = Path(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ScenarioError(f"scenario file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError("scenario root must be a JSON object")
    if seed_override is not None:
        data["seed"] = int(seed_override)
    return Scenario(data, path=str(path))
