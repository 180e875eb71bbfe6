"""Run configuration: one JSON file, ``"schema": 1``.

Example::

    {
      "schema": 1,
      "model": {"model": "ising", "d": 1, "beta": 0.15,
                "kernel": {"type": "nn", "J": 1.0},
                "field": {"type": "constant", "h": 0.0}},
      "sampler": {"sites": [[0], [1]], "replicas": 1000, "seed": 7,
                  "step_cap": null, "t": null, "initial": "iid",
                  "backend": "auto", "range_cap": 4096},
      "output": {"path": "samples.jsonl", "format": "jsonl"}
    }

The ``model`` block accepts ``"model"`` in {"ising", "gibbs-cont",
"autonormal", "ising-pair"}. The pair model also reads ``kernel_tilde`` and
``field_tilde``. Kernels: ``nn`` (J), ``table`` (entries: [[offset, J], ...]),
``exponential`` (theta, r), ``power`` (theta, p, L) and ``zero``; an absent
kernel is nearest neighbour, except for ``autonormal`` where it is zero. Fields:
``constant`` (h) and ``alternating`` (h_even, h_odd). ``autonormal`` takes
``sigma``; ``gibbs-cont`` takes ``reference: {"density": ...}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from .kernels import KernelError
from .lattice import Site
from .models import ModelError, RateModel, model_from_config

SCHEMA = 1


class ConfigError(ValueError):
    pass


@dataclass
class SamplerConfig:
    sites: List[Site]
    replicas: int = 1
    seed: Optional[int] = None
    step_cap: Optional[int] = None
    t: Optional[float] = None
    initial: Any = None
    backend: str = "auto"
    range_cap: int = 4096


@dataclass
class RunConfig:
    model: Dict[str, Any]
    sampler: SamplerConfig
    output: Dict[str, Any] = field(default_factory=dict)
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return int(self.model.get("d", 1))

    def build_model(self) -> RateModel:
        try:
            if self.model.get("model") == "ising-pair":
                from .coupling import pair_model_from_config

                return pair_model_from_config(self.model)
            return model_from_config(self.model)
        except (KernelError, ModelError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid model block: {exc}") from exc


def _site(x, d: int) -> Site:
    if isinstance(x, (int, float)):
        x = [x]
    s = tuple(int(c) for c in x)
    if len(s) != d:
        raise ConfigError(f"site {x!r} does not have dimension {d}")
    return s


def parse_sites(raw, d: int) -> List[Site]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("sampler.sites must be a non-empty list of coordinates")
    return sorted(set(_site(x, d) for x in raw))


def parse_config(obj: Dict[str, Any]) -> RunConfig:
    if not isinstance(obj, dict):
        raise ConfigError("configuration must be a JSON object")
    if obj.get("schema") != SCHEMA:
        raise ConfigError(f"unsupported or missing schema (expected {SCHEMA})")
    model = obj.get("model")
    if not isinstance(model, dict) or "model" not in model:
        raise ConfigError("missing model block")
    d = int(model.get("d", 1))
    if d < 1:
        raise ConfigError("d must be >= 1")
    s = obj.get("sampler", {}) or {}
    sites = parse_sites(s.get("sites", [[0] * d]), d)
    replicas = int(s.get("replicas", 1))
    if replicas < 1:
        raise ConfigError("replicas must be >= 1")
    seed = s.get("seed")
    if seed is not None and (not isinstance(seed, int) or seed < 0):
        raise ConfigError("seed must be a non-negative integer")
    step_cap = s.get("step_cap")
    if step_cap is not None and (not isinstance(step_cap, int) or step_cap < 1):
        raise ConfigError("step_cap must be a positive integer")
    t = s.get("t")
    if t is not None:
        t = float(t)
        if not t > 0:
            raise ConfigError("t must be > 0")
    backend = s.get("backend", "auto")
    if backend not in ("auto", "generic", "python", "cython"):
        raise ConfigError(f"unknown backend {backend!r}")
    sampler = SamplerConfig(sites, replicas, seed, step_cap, t, s.get("initial"), backend,
                            int(s.get("range_cap", 4096)))
    extra = {k: v for k, v in obj.items() if k not in ("schema", "model", "sampler", "output")}
    return RunConfig(model, sampler, obj.get("output", {}) or {}, extra)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_config(obj)


def site_label(s: Site) -> str:
    return "(" + ",".join(str(c) for c in s) + ")"
