"""Run configuration: a flat ``key = value`` text format with typed fields.

Lines starting with ``#`` and blank lines are ignored. Values are parsed
according to the annotated type of the matching :class:`RunConfig` field;
``none`` selects the application default for optional parameters. Unknown
keys are rejected.

Example::

    application = rpca
    method = ubama
    seed = 7
    n = 64
    rank = 2
"""

import dataclasses
import os
import typing
from dataclasses import dataclass, fields
from typing import Optional

from .errors import ConfigError

__all__ = ["RunConfig", "APPLICATIONS", "METHODS", "parse_config", "load_config",
           "default_out_dir"]

APPLICATIONS = ("tv", "rpca", "bid", "prox-check")
METHODS = {
    "tv": ("ubama", "palm"),
    "rpca": ("ubama", "adca", "dca_admm"),
    "bid": ("ubama",),
    "prox-check": ("",),
}
OUT_DIR_ENV = "UBAMA_OUT_DIR"


@dataclass
class RunConfig:
    """Every knob of the three applications.

    Parameters shared by name (``tau``, ``lam``) take the meaning of the
    selected application; ``None`` means "use the application's default".
    """

    application: str = "tv"
    method: str = ""
    seed: int = 0
    eps: Optional[float] = None
    maxit: Optional[int] = None
    out_dir: Optional[str] = None
    input: Optional[str] = None
    timing: bool = False
    # tv
    n: int = 64
    delta: Optional[float] = None
    sample_rate: Optional[float] = None
    deblur: bool = False
    radius: int = 2
    tau: Optional[float] = None
    beta: Optional[float] = None
    alpha: Optional[float] = None
    pcg_tol: float = 1e-5
    # rpca
    rank: int = 2
    sparse_frac: float = 0.05
    lam: Optional[float] = None
    kappa1: Optional[float] = None
    kappa2: Optional[float] = None
    cap_rule: str = "gap"
    mu: float = 1.01
    nu: float = 1.01
    inner_tol: float = 1e-4
    trials: int = 1
    # bid
    y_mode: str = "euclidean"
    ksize: int = 7
    sigma: float = 1.5
    noise: float = 1e-3

    def __post_init__(self):
        if self.application not in APPLICATIONS:
            raise ConfigError(f"unknown application {self.application!r}; "
                              f"expected one of {APPLICATIONS}")
        if not self.method:
            self.method = METHODS[self.application][0]
        if self.method not in METHODS[self.application]:
            raise ConfigError(f"method {self.method!r} is not available for {self.application}; "
                              f"expected one of {METHODS[self.application]}")
        if self.y_mode not in ("euclidean", "entropy"):
            raise ConfigError(f"y_mode must be euclidean or entropy, got {self.y_mode!r}")
        if self.cap_rule not in ("gap", "median"):
            raise ConfigError(f"cap_rule must be gap or median, got {self.cap_rule!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.eps is not None and not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.maxit is not None and self.maxit < 1:
            raise ConfigError("maxit must be at least 1")

    @property
    def noise_level(self):
        """``delta`` or the application default (0.1 for tv, 0.01 for rpca)."""
        if self.delta is not None:
            return self.delta
        return 0.01 if self.application == "rpca" else 0.1

    @property
    def sampling(self):
        """``sample_rate`` or the application default (0.5 for tv, 0.9 for rpca)."""
        if self.sample_rate is not None:
            return self.sample_rate
        return 0.9 if self.application == "rpca" else 0.5

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


def _coerce(name, text, tp):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1]
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if text.lower() in ("none", ""):
            return None
        return _coerce(name, text, args[0])
    try:
        if tp is bool:
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if tp is int:
            return int(text, 0)
        if tp is float:
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {text!r} as {tp.__name__}") from exc
    return text


_HINTS = typing.get_type_hints(RunConfig)


def parse_config(text, **overrides):
    """Build a :class:`RunConfig` from file text; ``overrides`` win over the text."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key = key.strip().replace("-", "_")
        if key not in _HINTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value.split(" #")[0], _HINTS[key])
    for key, value in overrides.items():
        if key not in _HINTS:
            raise ConfigError(f"unknown key {key!r}")
        if value is not None:
            values[key] = value
    return RunConfig(**values)


def load_config(path, **overrides):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, **overrides)


def default_out_dir():
    """Output directory from the environment, else ``ubama-out``."""
    return os.environ.get(OUT_DIR_ENV, "ubama-out")
