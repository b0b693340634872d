"""Flat run configuration: one key=value per line, CLI flags override.

Every tunable across the toolkit lives here with its documented default.
Unknown keys are rejected rather than ignored.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass
from typing import Optional

from .errors import ConfigError, FormatError, IoError
from .gpt import GptConfig, SampleOpts
from .vqt import VqtConfig


@dataclass
class RunConfig:
    # model dimensions
    d_model: int = 768
    heads: int = 12
    layers: int = 8
    max_len: int = 16
    dropout: float = 0.1
    # optimization
    batch_size: int = 256
    epochs: int = 1
    base_lr: float = 5e-5
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    dtype: str = "float32"
    view: str = "unique"           # or "all-occurrences"
    # quantizer (train-vqt)
    enc_layers: int = 8
    dec_layers: int = 8
    code_dim: int = 10
    codebook_size: int = 300
    commitment_beta: float = 0.25
    ema_decay: float = 0.99
    dead_code_threshold: float = 0.5
    # corpus split
    train_fraction: float = 0.8
    # sampling
    temperature: float = 1.0
    top_k: Optional[int] = None
    max_new: Optional[int] = None
    workers: int = 1
    # evaluation
    budgets: str = "1000,10000,100000"
    quantiles: str = "0,0.25,0.5,0.75,1"
    quantile_length: Optional[int] = None
    low_percentile: float = 10.0
    high_percentile: float = 90.0

    def gpt_config(self) -> GptConfig:
        return GptConfig(
            d_model=self.d_model, heads=self.heads, layers=self.layers,
            max_len=self.max_len, dropout=self.dropout,
            batch_size=self.batch_size, epochs=self.epochs,
            base_lr=self.base_lr, weight_decay=self.weight_decay,
            beta1=self.beta1, beta2=self.beta2, adam_eps=self.adam_eps,
            seed=self.seed, dtype=self.dtype)

    def vqt_config(self) -> VqtConfig:
        return VqtConfig(
            d_model=self.d_model, heads=self.heads,
            enc_layers=self.enc_layers, dec_layers=self.dec_layers,
            code_dim=self.code_dim, codebook_size=self.codebook_size,
            commitment_beta=self.commitment_beta, ema_decay=self.ema_decay,
            dead_code_threshold=self.dead_code_threshold,
            max_len=self.max_len, dropout=self.dropout,
            batch_size=self.batch_size, epochs=self.epochs,
            base_lr=self.base_lr, weight_decay=self.weight_decay,
            beta1=self.beta1, beta2=self.beta2, adam_eps=self.adam_eps,
            seed=self.seed, dtype=self.dtype)

    def sample_opts(self) -> SampleOpts:
        return SampleOpts(temperature=self.temperature, top_k=self.top_k,
                          seed=self.seed, max_new=self.max_new)

    def budget_list(self):
        return [int(b) for b in self.budgets.split(",") if b.strip()]

    def quantile_list(self):
        return [float(q) for q in self.quantiles.split(",") if q.strip()]


_HINTS = typing.get_type_hints(RunConfig)
_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, raw: str):
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    typ = _HINTS[key]
    if typing.get_origin(typ) is typing.Union:  # Optional[int]
        if raw.lower() in ("none", ""):
            return None
        typ = [a for a in typing.get_args(typ) if a is not type(None)][0]
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from None


def load_run_config(path: Optional[str] = None, overrides=()) -> RunConfig:
    """Defaults, then the config file, then key=value override pairs."""
    values = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line or line.startswith("#"):
                        continue
                    key, sep, raw = line.partition("=")
                    if not sep:
                        raise FormatError(f"{path}:{lineno}: expected key=value")
                    values[key.strip()] = _coerce(key.strip(), raw.strip())
        except OSError as e:
            raise IoError(f"cannot read {path}: {e}") from e
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} must be key=value")
        values[key.strip()] = _coerce(key.strip(), raw.strip())
    return RunConfig(**values)
