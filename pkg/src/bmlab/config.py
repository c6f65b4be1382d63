"""Flat ``key = value`` experiment configuration with command-line overrides."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import FormatError, InvalidParameterError
from .hermite import HermiteCombination
from .simulation import Method
from .spectral import SpectralModel, parse_model

DEFAULT_THRESHOLDS = {
    "variance_se": 4.0,
    "fourth_moment_lo": 2.92,
    "fourth_moment_hi": 3.08,
    "ks": 0.01,
    "sup_density": 0.03,
    "malliavin_spread": 0.25,
    "malliavin_min_ratio": 1e-4,
}


def _ints(text: str) -> list[int]:
    out = []
    for item in text.replace(" ", "").split(","):
        if not item:
            continue
        if "^" in item:
            base, exp = item.split("^")
            out.append(int(base) ** int(exp))
        else:
            out.append(int(item))
    return out


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(" ", "").split(",") if x]


@dataclass
class ExperimentConfig:
    model: str = "fgn:H=0.6"
    f: str = "2:1.0"
    n: list = field(default_factory=lambda: [1 << 14])
    M: int = 100_000
    seed: int = 20240601
    method: str = "circulant"
    p: list = field(default_factory=lambda: [1.0, 2.0, 4.0])
    out: str = "bm_out"
    L: int = 4096
    grid: int = 0
    tail_cutoff: int = 1 << 20
    bandwidth: float = 0.0
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))

    def validate(self) -> "ExperimentConfig":
        self.spectral_model()
        self.hermite()
        if not self.n or any(b <= a for a, b in zip(self.n, self.n[1:])):
            raise InvalidParameterError(f"n grid must be non-empty and strictly increasing, got {self.n}")
        if any(v < 2 for v in self.n):
            raise InvalidParameterError("every n must be at least 2")
        if self.M < 1:
            raise InvalidParameterError("M must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidParameterError("seed must be an unsigned 64-bit integer")
        self.sim_method()
        if any(p <= 0 for p in self.p):
            raise InvalidParameterError("p values must be positive")
        unknown = set(self.thresholds) - set(DEFAULT_THRESHOLDS)
        if unknown:
            raise InvalidParameterError(f"unknown thresholds: {sorted(unknown)}")
        return self

    def spectral_model(self) -> SpectralModel:
        return parse_model(self.model)

    def hermite(self) -> HermiteCombination:
        return HermiteCombination.parse(self.f)

    def sim_method(self) -> Method:
        try:
            return Method[self.method.upper().replace("-", "_")]
        except KeyError as exc:
            raise InvalidParameterError(f"method must be circulant or causal_ma, got {self.method!r}") from exc

    # ---- text form

    def serialize(self) -> str:
        lines = [
            f"model = {self.model}",
            f"f = {self.f}",
            f"n = {','.join(str(v) for v in self.n)}",
            f"M = {self.M}",
            f"seed = {self.seed}",
            f"method = {self.method}",
            f"p = {','.join(repr(float(v)) for v in self.p)}",
            f"out = {self.out}",
            f"L = {self.L}",
            f"grid = {self.grid}",
            f"tail_cutoff = {self.tail_cutoff}",
            f"bandwidth = {self.bandwidth!r}",
        ]
        lines += [f"threshold.{k} = {self.thresholds[k]!r}" for k in sorted(self.thresholds)]
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise FormatError(f"config line {lineno}: expected key = value, got {raw!r}")
            values[key.strip()] = value.strip()
        return cls().updated(values)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.parse(Path(path).read_text())

    def updated(self, values: dict) -> "ExperimentConfig":
        """Copy with string-valued overrides applied (``None`` values ignored)."""
        cfg = replace(self, n=list(self.n), p=list(self.p), thresholds=dict(self.thresholds))
        names = {f.name for f in fields(self)}
        for key, value in values.items():
            if value is None:
                continue
            value = str(value)
            try:
                if key.startswith("threshold."):
                    name = key.split(".", 1)[1]
                    if name not in DEFAULT_THRESHOLDS:
                        raise InvalidParameterError(f"unknown threshold {name!r}")
                    cfg.thresholds[name] = float(value)
                elif key not in names or key == "thresholds":
                    raise InvalidParameterError(f"unknown config key {key!r}")
                elif key == "n":
                    cfg.n = _ints(value)
                elif key == "p":
                    cfg.p = _floats(value)
                elif key in ("M", "seed", "L", "grid", "tail_cutoff"):
                    setattr(cfg, key, int(value))
                elif key == "bandwidth":
                    cfg.bandwidth = float(value)
                else:
                    setattr(cfg, key, value)
            except ValueError as exc:
                if isinstance(exc, InvalidParameterError):
                    raise
                raise InvalidParameterError(f"bad value for {key}: {value!r}") from exc
        return cfg

    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()
