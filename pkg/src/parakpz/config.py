"""Run configuration: parameter schema, defaults, and the inequality web.

The regularity exponents are interdependent; validation checks every
inequality and reports all violations at once (with the arithmetic printed),
so a misconfigured run fails before any compute starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

__all__ = ["Config", "ConfigError", "validate_exponents", "load_config",
           "emit_config"]


class ConfigError(ValueError):
    """Raised with the full list of schema/inequality violations."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  - " +
                         "\n  - ".join(self.errors))


@dataclass(frozen=True)
class Config:
    """Full parameter schema with documented defaults."""

    # regularity exponents
    alpha: float = 0.45     # spatial regularity parameter, in (2/5, 1/2)
    delta: float = 0.9      # sub-exponential weight exponent, in (0, 1)
    a: float = 0.03         # polynomial weight rate
    eps: float = 0.32       # spare regularity budget, in [0, 3*alpha - 1)
    zeta: float = 0.01      # blow-up allowance for the forcing
    b: float = 0.06         # secondary weight rate, at most 2a
    beta: float = 1.0       # initial-condition regularity, in (2*alpha-1, 2*alpha+1]

    # discretization
    num_points: int = 1024          # spatial modes N (power of two)
    half_length: float = 3.141592653589793  # L; domain [-L, L)
    horizon: float = 0.25           # T
    dt: float = 0.000244140625      # T / 1024
    level: float = 8.0              # mollification level n

    # run control
    seed: int = 0
    tol: float = 1e-8               # solver convergence tolerance

    @property
    def beta_hat(self) -> float:
        return (2 * self.alpha + 1 - self.beta) / 2

    @property
    def beta_prime(self) -> float:
        return max((self.alpha + 1 - self.beta) / 2, 0.0)


def validate_exponents(cfg: Config) -> list[str]:
    """Every inequality of the exponent web; returns all violations."""
    errors: list[str] = []
    al, de, a, eps, ze, b, be = (cfg.alpha, cfg.delta, cfg.a, cfg.eps,
                                 cfg.zeta, cfg.b, cfg.beta)
    if not (0.4 < al < 0.5):
        errors.append(f"alpha={al} outside (2/5, 1/2)")
    if not (0.0 < de < 1.0):
        errors.append(f"delta={de} outside (0, 1)")
    if a <= 0:
        errors.append(f"a={a} must be positive")
    if not (0.0 <= eps < 3 * al - 1):
        errors.append(f"eps={eps} outside [0, 3*alpha-1) = [0, {3*al-1:.4g})")
    if ze < 0:
        errors.append(f"zeta={ze} must be nonnegative")
    slack = eps - 6 * a / de - 2 * ze
    if slack <= 0:
        errors.append(
            f"eps - 6a/delta - 2*zeta = {eps} - {6*a/de:.4g} - {2*ze:.4g} "
            f"= {slack:.4g} must be positive")
    if b > 2 * a:
        errors.append(f"b={b} exceeds 2a = {2*a}")
    if not (2 * al - 1 < be <= 2 * al + 1):
        errors.append(
            f"beta={be} outside (2*alpha-1, 2*alpha+1] = "
            f"({2*al-1:.4g}, {2*al+1:.4g}]")
    return errors


def _validate_discretization(cfg: Config) -> list[str]:
    errors: list[str] = []
    n = cfg.num_points
    if n < 8 or n & (n - 1):
        errors.append(f"num_points={n} must be a power of two >= 8")
    if cfg.half_length <= 0:
        errors.append(f"half_length={cfg.half_length} must be positive")
    if cfg.horizon <= 0:
        errors.append(f"horizon={cfg.horizon} must be positive")
    if cfg.dt <= 0:
        errors.append(f"dt={cfg.dt} must be positive")
    elif cfg.horizon > 0:
        steps = cfg.horizon / cfg.dt
        if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
            errors.append(
                f"horizon/dt = {steps:.6g} must be an integer step count")
    if cfg.level <= 0:
        errors.append(f"level={cfg.level} must be positive")
    if cfg.tol <= 0:
        errors.append(f"tol={cfg.tol} must be positive")
    return errors


def check(cfg: Config) -> Config:
    errors = validate_exponents(cfg) + _validate_discretization(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


_FIELD_TYPES = {f.name: f.type for f in fields(Config)}


def load_config(path=None, text: str | None = None) -> Config:
    """Parse a key=value config file; unset keys take documented defaults."""
    if text is None:
        text = Path(path).read_text() if path is not None else ""
    values = {}
    errors = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key=value, got {raw!r}")
            continue
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _FIELD_TYPES:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            if key in ("num_points", "seed"):
                values[key] = int(val)
            else:
                values[key] = float(val)
        except ValueError:
            errors.append(f"line {lineno}: cannot parse value for {key}: {val!r}")
    if errors:
        raise ConfigError(errors)
    return check(Config(**values))


def emit_config(cfg: Config) -> str:
    lines = []
    for f in fields(Config):
        lines.append(f"{f.name} = {getattr(cfg, f.name)!r}")
    return "\n".join(lines) + "\n"
