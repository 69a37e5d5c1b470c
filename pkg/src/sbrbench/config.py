"""Experiment config files.

An INI-style file with sections ``[dataset]``, ``[experiment]`` and one
``[model.<kind>]`` section per baseline. Model values use a small grammar::

    k = 100                      # fixed value
    k = 50, 100, 200             # search over a finite list
    lambda1 = log(0.1, 100)      # log-uniform range
    lambda2 = none, log(0.1, 100)  # range that may also draw "disabled"
    idf_power = uniform(0, 3)    # linear range
    max_steps = none             # unlimited / disabled

Atoms are ``none``, ``true``/``false``, integers and floats. Tunable
parameters a model section leaves out fall back to the built-in defaults in
:data:`sbrbench.tuning.DEFAULT_DIMS`.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from sbrbench.models import MODELS, TUNABLE
from sbrbench.tuning import DEFAULT_DIMS, Choice, Range, SearchSpace

NONE_PROB = 0.2
_RANGE = re.compile(r"^(log|uniform)\(\s*([^,]+?)\s*,\s*([^)]+?)\s*\)$")


class ConfigError(ValueError):
    pass


def parse_atom(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("none", "null", "disabled", "unlimited"):
        return None
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def split_top_level(text: str) -> list[str]:
    parts, depth, cur = [], 0, ""
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
        else:
            cur += ch
    parts.append(cur)
    return [p.strip() for p in parts if p.strip()]


def parse_value(text: str):
    """Return ``("fixed", value)`` or ``("search", Choice|Range)``."""
    parts = split_top_level(text)
    ranges = [p for p in parts if _RANGE.match(p)]
    if len(ranges) > 1:
        raise ConfigError(f"at most one range per parameter: {text!r}")
    if ranges:
        others = [parse_atom(p) for p in parts if p not in ranges]
        if any(o is not None for o in others):
            raise ConfigError(f"a range can only be combined with 'none': {text!r}")
        kind, lo, hi = _RANGE.match(ranges[0]).groups()
        return "search", Range(float(lo), float(hi), log=kind == "log", none_prob=NONE_PROB if others else 0.0)
    values = tuple(parse_atom(p) for p in parts)
    if len(values) == 1:
        return "fixed", values[0]
    return "search", Choice(values)


def format_atom(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return str(value).lower()
    return repr(value) if isinstance(value, float) else str(value)


def config_hash(params: dict) -> str:
    canonical = json.dumps({k: params[k] for k in sorted(params)}, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


@dataclass
class DatasetSpec:
    name: str
    format: str
    path: Path
    fraction: int = 1
    test_days: int = 1
    retail_gap: int = 30 * 60
    min_item_support: int = 5
    min_session_length: int = 2
    categories: Path | None = None

    def as_dict(self) -> dict:
        return {k: str(v) if isinstance(v, Path) else v for k, v in self.__dict__.items()}


@dataclass
class ModelSpec:
    kind: str
    fixed: dict = field(default_factory=dict)
    dims: dict = field(default_factory=dict)

    def space(self) -> SearchSpace | None:
        """Search dimensions, or None when every tunable parameter is fixed."""
        dims = {name: DEFAULT_DIMS[name] for name in TUNABLE[self.kind] if name not in self.fixed}
        dims.update(self.dims)
        return SearchSpace(dims) if dims else None


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec
    models: dict[str, ModelSpec]
    seed: int | None
    cutoffs: tuple[int, ...] = (10, 20)
    n_trials: int | None = None
    out: Path = Path("runs")
    threads: int = 1
    source: Path | None = None

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("no seed given: set [experiment] seed or pass --seed")
        return self.seed

    def model(self, kind: str) -> ModelSpec:
        if kind not in MODELS:
            raise KeyError(kind)
        return self.models.get(kind, ModelSpec(kind))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    base = path.parent

    if "dataset" not in parser:
        raise ConfigError(f"{path}: missing [dataset] section")
    ds = parser["dataset"]
    try:
        dataset = DatasetSpec(
            name=ds.get("name", path.stem),
            format=ds["format"],
            path=base / ds["path"],
            fraction=ds.getint("fraction", 1),
            test_days=ds.getint("test_days", 1),
            retail_gap=int(ds.getfloat("retail_gap_minutes", 30) * 60),
            min_item_support=ds.getint("min_item_support", 5),
            min_session_length=ds.getint("min_session_length", 2),
            categories=base / ds["categories"] if "categories" in ds else None,
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: bad [dataset] section: {exc}") from exc

    exp = parser["experiment"] if "experiment" in parser else {}
    try:
        seed = int(exp["seed"]) if "seed" in exp else None
        cutoffs = tuple(sorted(int(c) for c in split_top_level(exp.get("cutoffs", "10, 20"))))
        n_trials = int(exp["n_trials"]) if "n_trials" in exp else None
        threads = int(exp.get("threads", 1))
    except ValueError as exc:
        raise ConfigError(f"{path}: bad [experiment] section: {exc}") from exc
    out = base / exp.get("out", "runs")

    models = {}
    for section in parser.sections():
        if not section.startswith("model."):
            continue
        kind = section.split(".", 1)[1]
        if kind not in MODELS:
            raise ConfigError(f"{path}: unknown model section [{section}]")
        spec = ModelSpec(kind)
        allowed = set(MODELS[kind].param_names())
        for key, raw in parser[section].items():
            if key not in allowed:
                raise ConfigError(f"{path}: [{section}] has no parameter {key!r}")
            mode, value = parse_value(raw)
            (spec.fixed if mode == "fixed" else spec.dims)[key] = value
        models[kind] = spec
    names = exp.get("models")
    if names:
        for kind in split_top_level(names):
            if kind not in MODELS:
                raise ConfigError(f"{path}: unknown model {kind!r}")
            models.setdefault(kind, ModelSpec(kind))
    return ExperimentConfig(dataset, models, seed, cutoffs, n_trials, out, threads, path)


def write_best_config(path, kind: str, params: dict, extra: dict) -> None:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser["best"] = {"model": kind, **{k: format_atom(v) for k, v in sorted(params.items())}}
    parser["provenance"] = {k: format_atom(v) for k, v in extra.items()}
    with open(path, "w") as fh:
        parser.write(fh)


def read_best_config(path) -> tuple[str, dict]:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if not parser.read(path) or "best" not in parser:
        raise FileNotFoundError(path)
    section = dict(parser["best"])
    kind = section.pop("model")
    return kind, {k: parse_atom(v) for k, v in section.items()}
