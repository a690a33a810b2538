"""Flat ``key = value`` run configuration.

Keys carry a section prefix (``model.``, ``optim.``, ``noise.``, ``data.``,
``sweep.``, ``eval.``, ``histogram.``); top-level keys are ``seed``,
``epochs``, ``checkpoint`` (relative to ``out``) and ``out``. Lines starting with ``#`` are
comments. Relative paths are resolved against the config file's folder.

Example::

    seed = 0
    epochs = 5
    model.preset = win5_r
    noise.sigma = 50
    noise.seed_policy = fresh
    data.train = images/
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .model import ModelSpec, SpecError, make_spec, preset
from .noise import NoiseConfig
from .optim import OptimConfig

FIXTURES = Path(__file__).resolve().parent / "fixtures"


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


DEFAULTS: dict[str, str] = {
    "seed": "0",
    "epochs": "5",
    "checkpoint": "model.ckpt",
    "out": "runs",
    "model.preset": "",
    "model.depth": "5",
    "model.filters": "16",
    "model.kernel": "3",
    "model.bn": "false",
    "model.skip": "true",
    "model.target_mode": "",
    "optim.base_lr": "0.1",
    "optim.momentum": "0.9",
    "optim.weight_decay": "1e-4",
    "optim.clip": "0.1",
    "optim.step_size": "30",
    "optim.gamma": "0.1",
    "optim.batch_size": "64",
    "noise.sigma": "50",
    "noise.sigma_lo": "",
    "noise.sigma_hi": "",
    "noise.seed": "0",
    "noise.seed_policy": "fresh",
    "data.train": str(FIXTURES),
    "data.val": "",
    "data.patch": "17",
    "data.stride": "8",
    "data.augment": "false",
    "sweep.depth": "",
    "sweep.filters": "",
    "sweep.kernel": "",
    "eval.sigmas": "10,30,50",
    "histogram.images": "",
    "histogram.sigmas": "10,50",
}

PATH_KEYS = {"out", "data.train", "data.val", "histogram.images"}


def parse(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {no}: expected key = value, got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def _bool(key: str, v: str) -> bool:
    lv = v.lower()
    if lv in ("1", "true", "yes", "on"):
        return True
    if lv in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {v!r}")


def _num(key: str, v: str, kind=float):
    try:
        return kind(v)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {v!r}") from None


def _int_list(key: str, v: str) -> list[int]:
    return [_num(key, p.strip(), int) for p in v.split(",") if p.strip()]


def _float_list(key: str, v: str) -> list[float]:
    return [_num(key, p.strip(), float) for p in v.split(",") if p.strip()]


@dataclass
class RunConfig:
    values: dict[str, str] = field(default_factory=lambda: dict(DEFAULTS))
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path=None, overrides: dict[str, str] | None = None) -> "RunConfig":
        values = dict(DEFAULTS)
        base = Path.cwd()
        if path is not None:
            path = Path(path)
            try:
                text = path.read_text()
            except OSError as e:
                raise ConfigError(f"cannot read config {path}: {e}") from e
            parsed = cls._checked(parse(text))
            base = path.resolve().parent
            for k in PATH_KEYS & parsed.keys():
                if parsed[k] and not Path(parsed[k]).is_absolute():
                    parsed[k] = str(base / parsed[k])
            values.update(parsed)
        values.update(cls._checked(overrides or {}))
        cfg = cls(values, base)
        cfg.validate()
        return cfg

    @staticmethod
    def _checked(d: dict[str, str]) -> dict[str, str]:
        unknown = sorted(set(d) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return d

    def __getitem__(self, key: str) -> str:
        return self.values[key]

    def validate(self) -> None:
        self.model_spec()
        self.optim()
        self.noise()
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.patch < 1 or self.stride < 1:
            raise ConfigError("data.patch and data.stride must be >= 1")

    @property
    def seed(self) -> int:
        return _num("seed", self["seed"], int)

    @property
    def epochs(self) -> int:
        return _num("epochs", self["epochs"], int)

    @property
    def patch(self) -> int:
        return _num("data.patch", self["data.patch"], int)

    @property
    def stride(self) -> int:
        return _num("data.stride", self["data.stride"], int)

    @property
    def augment(self) -> bool:
        return _bool("data.augment", self["data.augment"])

    def model_spec(self, **over) -> ModelSpec:
        try:
            if self["model.preset"] and not over:
                return preset(self["model.preset"])
            skip = _bool("model.skip", self["model.skip"])
            return make_spec(
                int(over.get("depth", _num("model.depth", self["model.depth"], int))),
                int(over.get("filters", _num("model.filters", self["model.filters"], int))),
                int(over.get("kernel", _num("model.kernel", self["model.kernel"], int))),
                bn=_bool("model.bn", self["model.bn"]),
                skip=skip,
                target_mode=self["model.target_mode"] or None,
            )
        except SpecError as e:
            raise ConfigError(f"model: {e}") from e

    def optim(self) -> OptimConfig:
        g = lambda k, kind=float: _num(f"optim.{k}", self[f"optim.{k}"], kind)
        try:
            return OptimConfig(g("base_lr"), g("momentum"), g("weight_decay"), g("clip"),
                               g("step_size", int), g("gamma"), g("batch_size", int))
        except ValueError as e:
            raise ConfigError(f"optim: {e}") from e

    def noise(self) -> NoiseConfig:
        lo, hi = self["noise.sigma_lo"], self["noise.sigma_hi"]
        try:
            if lo or hi:
                if not (lo and hi):
                    raise ConfigError("noise.sigma_lo and noise.sigma_hi must be set together")
                return NoiseConfig.blind(_num("noise.sigma_lo", lo), _num("noise.sigma_hi", hi),
                                         seed_policy=self["noise.seed_policy"],
                                         seed=_num("noise.seed", self["noise.seed"], int))
            return NoiseConfig.fixed(_num("noise.sigma", self["noise.sigma"]),
                                     seed_policy=self["noise.seed_policy"],
                                     seed=_num("noise.seed", self["noise.seed"], int))
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(f"noise: {e}") from e

    def noise_dict(self) -> dict:
        n = self.noise()
        return {"sigma": n.sigma, "sigma_hi": n.sigma_hi, "seed_policy": n.seed_policy, "seed": n.seed}

    def sweep_axes(self) -> dict[str, list[int]]:
        axes = {k: _int_list(f"sweep.{k}", self[f"sweep.{k}"]) for k in ("depth", "filters", "kernel")}
        if not any(axes.values()):
            raise ConfigError("sweep needs at least one non-empty list (sweep.depth, sweep.filters, sweep.kernel)")
        return axes

    def float_list(self, key: str) -> list[float]:
        vals = _float_list(key, self[key])
        if not vals:
            raise ConfigError(f"{key} is empty")
        return vals

    def path(self, key: str) -> Path | None:
        v = self[key]
        if not v:
            return None
        p = Path(v)
        return p if p.is_absolute() else self.base_dir / p

    def dump(self) -> str:
        return "".join(f"{k} = {self.values[k]}\n" for k in sorted(self.values))
