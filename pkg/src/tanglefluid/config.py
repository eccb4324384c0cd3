"""Plain-text run configuration.

One ``key = value`` pair per line; ``#`` starts a comment; list values are
comma-separated, optionally in brackets. Example::

    mode = sweep
    lambda = 100, 400, 1600, 6400
    h = 1
    T = 6
    a_h = 1
    u = 1
    replicas = 50
    base_seed = 2024

Keys: mode, lambda, h, T, dt, replicas, base_seed, max_tries, a_h, u, out.
``u`` lists the values of the pending profile on equal-width pieces of
[0, h]. Validation reports every problem at once, each tagged with its key.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .fluid_dde import DdeInit, steps_per_delay

MODES = ("simulate", "fluid", "sweep", "decay")
KEYS = ("mode", "lambda", "h", "T", "dt", "replicas", "base_seed", "max_tries", "a_h", "u", "out")
DISCRETE_MODES = ("simulate", "sweep")


class ConfigError(ValueError):
    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{k}: {msg}" for k, msg in errors))


@dataclass
class RunConfig:
    mode: str | None
    h: float
    a_h: float
    u: tuple[float, ...]
    lambdas: tuple[float, ...] = ()
    T: float | None = None
    dt: float | None = None
    replicas: int = 50
    base_seed: int = 0
    max_tries: int = 64
    out: str | None = None

    @property
    def horizon(self) -> float:
        if self.T is not None:
            return self.T
        return (40.0 if self.mode == "decay" else 10.0) * self.h

    @property
    def step(self) -> float:
        return self.h / 1000 if self.dt is None else self.dt

    def dde_init(self) -> DdeInit:
        return DdeInit(self.a_h, self.u, self.h)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["T"] = self.horizon
        d["dt"] = self.step
        d["lambdas"] = list(self.lambdas)
        d["u"] = list(self.u)
        return d


def _split(text: str) -> tuple[list[tuple[str, str, int]], list[tuple[str, str]]]:
    pairs, errors = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append((f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}"))
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        pairs.append((key, value, lineno))
    return pairs, errors


def _floats(v: str) -> tuple[float, ...]:
    return tuple(_float(x) for x in v.strip().strip("[]").split(",") if x.strip())


def _float(v: str) -> float:
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("not finite")
    return x


def parse_config(
    text: str,
    overrides: dict[str, str] | None = None,
    mode: str | None = None,
) -> RunConfig:
    """Parse and validate; raises :class:`ConfigError` listing all violations."""
    pairs, errors = _split(text)
    raw: dict[str, str] = {}
    for key, value, lineno in pairs:
        if key not in KEYS:
            errors.append((key, f"unknown key (line {lineno})"))
        elif key in raw:
            errors.append((key, f"duplicate key (line {lineno})"))
        else:
            raw[key] = value
    for key, value in (overrides or {}).items():
        if key not in KEYS:
            errors.append((key, "unknown key"))
        elif value is not None:
            raw[key] = str(value)
    if mode is not None:
        raw["mode"] = mode

    vals: dict = {}

    def conv(key, fn, default=None):
        if key not in raw:
            return default
        try:
            return fn(raw[key])
        except ValueError as err:
            errors.append((key, f"cannot parse {raw[key]!r}: {err}"))
            return None

    # mode may be left out here and supplied later by the CLI subcommand
    vals["mode"] = raw.get("mode")
    if vals["mode"] is not None and vals["mode"] not in MODES:
        errors.append(("mode", f"must be one of {', '.join(MODES)}"))
    for key in ("h", "a_h", "u"):
        if key not in raw:
            errors.append((key, "missing required key"))
    if vals["mode"] in DISCRETE_MODES and "lambda" not in raw:
        errors.append(("lambda", "missing required key"))

    h = conv("h", _float)
    a_h = conv("a_h", _float)
    T = conv("T", _float)
    dt = conv("dt", _float)
    replicas = conv("replicas", int, 50)
    base_seed = conv("base_seed", int, 0)
    max_tries = conv("max_tries", int, 64)
    lambdas = conv("lambda", _floats, ())
    u = conv("u", _floats)

    if h is not None and h <= 0:
        errors.append(("h", "must be > 0"))
    if a_h is not None and a_h <= 0:
        errors.append(("a_h", "must be > 0"))
    if u is not None:
        if not u:
            errors.append(("u", "needs at least one value"))
        for i, x in enumerate(u):
            if not 0.0 <= x <= 2.0:
                errors.append((f"u[{i}]", f"value {x!r} outside [0, 2]"))
    if replicas is not None and replicas < 1:
        errors.append(("replicas", "must be >= 1"))
    if max_tries is not None and max_tries < 1:
        errors.append(("max_tries", "must be >= 1"))
    if base_seed is not None and base_seed < 0:
        errors.append(("base_seed", "must be >= 0"))
    if lambdas:
        for i, lam in enumerate(lambdas):
            key = "lambda" if len(lambdas) == 1 else f"lambda[{i}]"
            if lam <= 0:
                errors.append((key, "must be > 0"))
            elif h is not None and h > 0:
                prod = lam * h
                if prod != math.floor(prod) or prod < 1:
                    errors.append((key, f"λh not integer (lambda*h = {prod!r})"))
        if vals["mode"] == "simulate" and len(lambdas) != 1:
            errors.append(("lambda", "simulate takes a single value"))
    if h is not None and h > 0:
        if dt is not None:
            try:
                steps_per_delay(h, dt)
            except ValueError:
                errors.append(("dt", f"dt={dt!r} does not divide h={h!r}"))
        if T is not None:
            need = 5 * h if vals["mode"] == "decay" else 2 * h
            if T < need:
                errors.append(("T", f"must be >= {need!r} for mode {vals['mode']}"))

    if errors:
        raise ConfigError(errors)
    return RunConfig(
        mode=vals["mode"],
        h=h,
        a_h=a_h,
        u=u,
        lambdas=lambdas,
        T=T,
        dt=dt,
        replicas=replicas,
        base_seed=base_seed,
        max_tries=max_tries,
        out=raw.get("out"),
    )


def to_text(cfg: RunConfig) -> str:
    """Canonical config text; parsing it reproduces ``cfg``."""
    lines = [f"mode = {cfg.mode}"] if cfg.mode else []
    if cfg.lambdas:
        lines.append("lambda = " + ", ".join(repr(x) for x in cfg.lambdas))
    lines += [
        f"h = {cfg.h!r}",
        f"T = {cfg.horizon!r}",
        f"dt = {cfg.step!r}",
        f"replicas = {cfg.replicas}",
        f"base_seed = {cfg.base_seed}",
        f"max_tries = {cfg.max_tries}",
        f"a_h = {cfg.a_h!r}",
        "u = " + ", ".join(repr(x) for x in cfg.u),
    ]
    if cfg.out is not None:
        lines.append(f"out = {cfg.out}")
    return "\n".join(lines) + "\n"
