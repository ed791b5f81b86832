"""Run configuration: a flat key=value file with CLI-flag overrides.

The file format is one ``key = value`` pair per line, '#' comments, and
comma-separated lists for the sweep grids and ablation flags. Parsing and
serialization round-trip exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields

from .losses import SslConfig
from .trainer import TrainConfig


@dataclass
class RunConfig:
    ratings: str = ""
    trust: str = ""
    output_dir: str = "out"

    epochs: int = 30
    batch_size: int = 2000
    dim: int = 50
    depth: int = 2
    learning_rate: float = 0.01
    seed: int = 0
    l_views: int = 0
    attention_scope: str = "batch"
    topk_k: int = 64
    ablate: tuple = ()
    direct_contrast: str = "off"
    triplet_margin: float = 1.0
    deterministic: bool = False

    tau: float = 0.5
    beta1: float = 0.01
    beta2: float = 0.001
    lambda_reg: float = 0.03
    shuffle_mode: str = "row"

    k: int = 10
    scenario: str = "general"
    folds: int = 5
    repeats: int = 1
    threshold: int = 20

    dump_attention: str = ""
    sweep_beta1: tuple = ()
    sweep_beta2: tuple = ()
    sweep_tau: tuple = ()
    sweep_depth: tuple = ()

    def train_config(self):
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, dim=self.dim,
            depth=self.depth, learning_rate=self.learning_rate, seed=self.seed,
            l_views=self.l_views, attention_scope=self.attention_scope,
            topk_k=self.topk_k, ablations=tuple(self.ablate),
            direct_contrast=self.direct_contrast,
            triplet_margin=self.triplet_margin, eval_k=self.k,
            eval_scenario=self.scenario, deterministic=self.deterministic)

    def ssl_config(self):
        return SslConfig(tau=self.tau, beta1=self.beta1, beta2=self.beta2,
                         lambda_reg=self.lambda_reg, shuffle_mode=self.shuffle_mode)

    def sweeps(self):
        return {
            "beta1": list(self.sweep_beta1),
            "beta2": list(self.sweep_beta2),
            "tau": list(self.sweep_tau),
            "depth": list(self.sweep_depth),
        }

    def config_hash(self):
        blob = json.dumps({f.name: _serialize_value(getattr(self, f.name))
                           for f in fields(self)}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_STR_FIELDS = {"ratings", "trust", "output_dir", "attention_scope",
               "direct_contrast", "shuffle_mode", "scenario", "dump_attention"}
_LIST_FLOAT = {"sweep_beta1", "sweep_beta2", "sweep_tau"}
_LIST_INT = {"sweep_depth"}
_LIST_STR = {"ablate"}


def _parse_value(name, raw):
    raw = raw.strip()
    if name in _STR_FIELDS:
        return raw
    if name in _LIST_STR:
        return tuple(x.strip() for x in raw.split(",") if x.strip())
    if name in _LIST_FLOAT:
        return tuple(float(x) for x in raw.split(",") if x.strip())
    if name in _LIST_INT:
        return tuple(int(x) for x in raw.split(",") if x.strip())
    if name == "deterministic":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"bad boolean {raw!r} for {name}")
    proto = RunConfig.__dataclass_fields__[name].default
    if isinstance(proto, bool):
        return raw.lower() in ("true", "1", "yes")
    if isinstance(proto, int):
        return int(raw)
    if isinstance(proto, float):
        return float(raw)
    return raw


def _serialize_value(value):
    if isinstance(value, tuple):
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text):
    """Parse key=value text into a RunConfig; unknown keys are an error."""
    values = {}
    names = {f.name for f in fields(RunConfig)}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in names:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    return RunConfig(**values)


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(cfg):
    lines = []
    for f in fields(RunConfig):
        lines.append(f"{f.name} = {_serialize_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def save_config(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_config(cfg))
    return path
