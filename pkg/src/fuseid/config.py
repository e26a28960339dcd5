"""Run configuration shared by the CLI, the service, and the pipeline.

Precedence when resolving a configuration: explicit flags beat config-file
values beat built-in defaults. The resolved configuration is echoed back in
every command's output so runs are auditable.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

DEFAULT_ROWS = 32
DEFAULT_COLS = 32
DEFAULT_ENERGY = 0.95
DEFAULT_SEED = 1
DEFAULT_TOP = 5
DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class RunConfig:
    """Numeric knobs for training, fusion, and evaluation.

    ``k=None`` means pick K by the energy fraction. ``alpha``/``beta`` of
    None means fit weights from tuning data (equal weights where no tuning
    data exists); ``threshold=None`` means use the tuned EER threshold
    (plain 0.5 where there is nothing to tune on).
    """

    rows: int = DEFAULT_ROWS
    cols: int = DEFAULT_COLS
    energy: float = DEFAULT_ENERGY
    k: int | None = None
    alpha: float | None = None
    beta: float | None = None
    threshold: float | None = None
    seed: int = DEFAULT_SEED
    top: int = DEFAULT_TOP

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"canonical size {self.rows}x{self.cols} must be positive")
        if not 0.0 < self.energy <= 1.0:
            raise ValueError(f"energy must be in (0, 1], got {self.energy}")
        if self.k is not None and self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if (self.alpha is None) != (self.beta is None):
            raise ValueError("alpha and beta must be given together or not at all")
        if self.alpha is not None:
            if self.alpha < 0.0 or self.beta < 0.0 or self.alpha + self.beta <= 0.0:
                raise ValueError(
                    f"weights must be nonnegative with a positive sum, got ({self.alpha}, {self.beta})"
                )
        if self.threshold is not None and not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.top < 1:
            raise ValueError(f"top must be >= 1, got {self.top}")

    @property
    def size(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def as_dict(self) -> dict:
        return asdict(self)


_CONFIG_KEYS = {f.name for f in fields(RunConfig)} | {"size"}


def load_config_file(path) -> dict:
    """Read a JSON config file; unknown keys are an error."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys in {path}: {sorted(unknown)}")
    return _expand_size(raw)


def resolve_config(flags: dict | None = None, file_values: dict | None = None) -> RunConfig:
    """Merge flag values over file values over defaults.

    ``flags`` entries that are None count as unset.
    """
    merged: dict = {}
    if file_values:
        merged.update(file_values)
    if flags:
        merged.update({k: v for k, v in _expand_size(flags).items() if v is not None})
    return RunConfig(**merged)


def _expand_size(values: dict) -> dict:
    """Turn a 'size' shorthand (int or [rows, cols]) into rows/cols."""
    out = dict(values)
    size = out.pop("size", None)
    if size is None:
        return out
    if isinstance(size, int):
        rows = cols = size
    else:
        rows, cols = size
    out.setdefault("rows", rows)
    out.setdefault("cols", cols)
    return out
