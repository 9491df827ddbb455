"""Experiment manifests: flat ``key = value`` files, optionally under one ``[section]``.

Example::

    dataset_path = data/synthetic
    output_dir = runs/entropy
    seed = 7
    methods = lc, margin, entropy
    eval_mode = timestep
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
from pathlib import Path

from .active import ExperimentConfig
from .errors import ConfigError
from .sampling import BASE_METHODS, resolve_method

_BOOL = {"true": True, "yes": True, "1": True, "on": True, "false": False, "no": False, "0": False, "off": False}


def _bool(v: str) -> bool:
    try:
        return _BOOL[v.strip().lower()]
    except KeyError:
        raise ConfigError(f"expected a boolean, got {v!r}") from None


def _opt_float(v: str) -> float | None:
    return None if v.strip().lower() in ("none", "") else float(v)


def _methods(v: str) -> tuple[str, ...]:
    out = tuple(m.strip() for m in v.split(",") if m.strip())
    for m in out:
        base = resolve_method(m)
        if base not in BASE_METHODS:
            raise ConfigError(f"list base methods only (lc, margin, entropy); got {m!r}")
    return out


def _folds(v: str) -> tuple[int, ...] | None:
    v = v.strip()
    if v.lower() in ("", "all"):
        return None
    return tuple(int(x) for x in v.split(","))


@dataclass
class Manifest:
    dataset_path: str = ""
    output_dir: str = "runs/default"
    seed: int = 0
    methods: tuple[str, ...] = BASE_METHODS
    normalized: bool = True
    baseline: bool = True
    initial_fraction: float = 0.2
    increment: float = 0.2
    rounds: int = 5
    hidden_dim: int = 32
    learning_rate: float = 0.02
    gradient_clip: float | None = 5.0
    warm_start: bool = True
    eval_mode: str = "timestep"
    folds: tuple[int, ...] | None = None
    min_hours: int = 24

    _PARSERS = {
        "seed": int, "rounds": int, "hidden_dim": int, "min_hours": int,
        "initial_fraction": float, "increment": float, "learning_rate": float,
        "gradient_clip": _opt_float, "normalized": _bool, "baseline": _bool, "warm_start": _bool,
        "methods": _methods, "folds": _folds,
    }

    def set(self, key: str, value: str) -> None:
        key = key.strip()
        names = {f.name for f in fields(self)}
        if key not in names:
            raise ConfigError(f"unknown manifest key {key!r}")
        parse = self._PARSERS.get(key, str)
        try:
            setattr(self, key, parse(value.strip()) if isinstance(value, str) else value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from exc

    def validate(self, need_dataset: bool = True) -> None:
        if self.eval_mode not in ("timestep", "patient"):
            raise ConfigError(f"eval_mode must be timestep or patient, got {self.eval_mode!r}")
        if need_dataset:
            if not self.dataset_path:
                raise ConfigError("manifest has no dataset_path")
            if not Path(self.dataset_path).is_dir():
                raise ConfigError(f"dataset_path {self.dataset_path!r} is not a directory")
        if self.folds is not None and any(not 0 <= f < 5 for f in self.folds):
            raise ConfigError("folds must be in 0..4")
        self.experiment_config()

    def experiment_config(self, method: str | None = None) -> ExperimentConfig:
        return ExperimentConfig(
            method=method or (self.methods[0] if self.methods else "entropy"),
            normalized=self.normalized,
            initial_fraction=self.initial_fraction,
            increment=self.increment,
            rounds=self.rounds,
            hidden_dim=self.hidden_dim,
            learning_rate=self.learning_rate,
            gradient_clip=self.gradient_clip,
            warm_start=self.warm_start,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["methods"] = list(self.methods)
        d["folds"] = list(self.folds) if self.folds is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        m = cls()
        names = {f.name for f in fields(cls)}
        for k, v in d.items():
            if k not in names:
                continue
            if k in ("methods", "folds") and v is not None:
                v = tuple(v)
            setattr(m, k, v)
        return m


def read_manifest(path) -> Manifest:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc.strerror or exc}") from exc
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    if not text.lstrip().startswith("["):
        text = "[manifest]\n" + text
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed manifest {path}: {exc}") from exc
    sections = parser.sections()
    if len(sections) != 1:
        raise ConfigError("manifest must be flat (a single section at most)")
    manifest = Manifest()
    for key, value in parser[sections[0]].items():
        manifest.set(key, value)
    return manifest
