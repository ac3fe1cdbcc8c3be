"""Flat dotted-key experiment configuration.

The on-disk format is one `key = value` pair per line, `#` comments, and
comma-separated lists. Every key is explicitly registered; unknown keys are
rejected so typos fail loudly. parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError, ParameterError
from .model import ModelParams
from .mps import TruncationPolicy

MODES = ("equilibrium-scan", "quench-sweep", "state-diagram", "validate")

L_GUARD = 64
D_GUARD = 8


def _scalar(coerce):
    def parse(raw, key):
        if "," in raw:
            raise ConfigError(f"key {key} expects a scalar, got a list")
        try:
            return coerce(raw)
        except ValueError:
            raise ConfigError(
                f"key {key}: cannot parse {raw!r} as {coerce.__name__}")
    return parse


def _list_of(coerce):
    def parse(raw, key):
        if raw.strip() == "":
            return ()
        parts = [p.strip() for p in raw.split(",")]
        try:
            return tuple(coerce(p) for p in parts)
        except ValueError:
            raise ConfigError(
                f"key {key}: cannot parse {raw!r} as {coerce.__name__} list")
    return parse


def _pair(raw, key):
    vals = _list_of(float)(raw, key)
    if len(vals) != 2:
        raise ConfigError(f"key {key} expects two values, got {len(vals)}")
    return vals


def _string(raw, key):
    return raw.strip()


# key -> (parser, default); None defaults mean "omitted when serializing"
REGISTRY = {
    "mode": (_string, "validate"),
    "model.L": (_scalar(int), 16),
    "model.J": (_scalar(float), 0.3),
    "model.U": (_scalar(float), 1.0),
    "model.mu": (_scalar(float), 0.5),
    "model.d": (_scalar(int), 5),
    "model.boundary": (_string, "open"),
    "policy.max_bond": (_scalar(int), 64),
    "policy.svd_cutoff": (_scalar(float), 1e-10),
    "policy.dt": (_scalar(float), 0.01),
    "policy.dbeta": (_scalar(float), 0.005),
    "grids.J": (_list_of(float), ()),
    "grids.T": (_list_of(float), ()),
    "grids.mu": (_list_of(float), ()),
    "grids.tau_q": (_list_of(float), ()),
    "grids.L": (_list_of(int), ()),
    "fit.mu_window": (_pair, (0.425, 0.575)),
    "fit.kz_window": (_pair, (2.0, 15.0)),
    "fit.exponent_window": (_pair, None),
    "fit.delta_L": (_scalar(int), 2),
    "quench.j_critical": (_scalar(float), 0.30),
    "equilibrium.j_critical": (_scalar(float), 0.13),
    "output_dir": (_string, "results"),
    "seed": (_scalar(int), 0),
}

_GRID_REQUIREMENTS = {
    "equilibrium-scan": ("grids.J", "grids.T"),
    "quench-sweep": ("grids.tau_q", "grids.T"),
    "state-diagram": ("grids.J", "grids.T"),
    "validate": (),
}


@dataclass
class ExperimentConfig:
    mode: str = "validate"
    model: ModelParams = field(
        default_factory=lambda: ModelParams(L=16, J=0.3))
    policy: TruncationPolicy = field(default_factory=TruncationPolicy)
    grids: dict = field(default_factory=lambda: {
        "J": (), "T": (), "mu": (), "tau_q": (), "L": ()})
    fit_windows: dict = field(default_factory=lambda: {
        "mu_window": (0.425, 0.575), "kz_window": (2.0, 15.0),
        "exponent_window": None, "delta_L": 2})
    j_critical_quench: float = 0.30
    j_critical_equilibrium: float = 0.13
    output_dir: str = "results"
    seed: int = 0


def _values_to_config(values: dict) -> ExperimentConfig:
    mode = values["mode"]
    if mode not in MODES:
        raise ParameterError(
            f"mode must be one of {', '.join(MODES)}, got {mode!r}")
    model = ModelParams(L=values["model.L"], J=values["model.J"],
                        U=values["model.U"], mu=values["model.mu"],
                        d=values["model.d"],
                        boundary=values["model.boundary"])
    policy = TruncationPolicy(max_bond=values["policy.max_bond"],
                              svd_cutoff=values["policy.svd_cutoff"],
                              dt=values["policy.dt"],
                              dbeta=values["policy.dbeta"])
    grids = {name.split(".")[1]: values[name]
             for name in ("grids.J", "grids.T", "grids.mu", "grids.tau_q",
                          "grids.L")}
    fit_windows = {
        "mu_window": values["fit.mu_window"],
        "kz_window": values["fit.kz_window"],
        "exponent_window": values["fit.exponent_window"],
        "delta_L": values["fit.delta_L"],
    }
    cfg = ExperimentConfig(mode, model, policy, grids, fit_windows,
                           values["quench.j_critical"],
                           values["equilibrium.j_critical"],
                           values["output_dir"], values["seed"])
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: ExperimentConfig):
    sizes = [cfg.model.L] + [int(x) for x in cfg.grids.get("L", ())]
    for L in sizes:
        if not 2 <= L <= L_GUARD:
            raise ParameterError(f"L={L} outside supported range 2..{L_GUARD}")
    if not 2 <= cfg.model.d <= D_GUARD:
        raise ParameterError(
            f"d={cfg.model.d} outside supported range 2..{D_GUARD}")
    if cfg.fit_windows["delta_L"] < 1:
        raise ParameterError("fit.delta_L must be >= 1")
    for key in _GRID_REQUIREMENTS[cfg.mode]:
        grid = cfg.grids[key.split(".")[1]]
        if not grid:
            raise ParameterError(
                f"mode {cfg.mode} requires a nonempty {key}")
    for name, grid in cfg.grids.items():
        label = {"J": "coupling", "T": "temperature", "mu": "potential",
                 "tau_q": "duration", "L": "length"}[name]
        for v in grid:
            if name in ("T",) and v < 0:
                raise ParameterError(f"negative {label} {v} in grids.{name}")
            if name in ("tau_q", "L") and v <= 0:
                raise ParameterError(
                    f"non-positive {label} {v} in grids.{name}")


def parse_config(text: str) -> ExperimentConfig:
    values = {key: default for key, (_, default) in REGISTRY.items()}
    seen = set()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in REGISTRY:
            raise ConfigError(f"unknown key {key!r}", line=lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r}", line=lineno)
        seen.add(key)
        parser, _ = REGISTRY[key]
        values[key] = parser(raw.strip(), key)
    return _values_to_config(values)


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    values = {
        "mode": cfg.mode,
        "model.L": cfg.model.L,
        "model.J": cfg.model.J,
        "model.U": cfg.model.U,
        "model.mu": cfg.model.mu,
        "model.d": cfg.model.d,
        "model.boundary": cfg.model.boundary,
        "policy.max_bond": cfg.policy.max_bond,
        "policy.svd_cutoff": cfg.policy.svd_cutoff,
        "policy.dt": cfg.policy.dt,
        "policy.dbeta": cfg.policy.dbeta,
        "grids.J": cfg.grids["J"],
        "grids.T": cfg.grids["T"],
        "grids.mu": cfg.grids["mu"],
        "grids.tau_q": cfg.grids["tau_q"],
        "grids.L": cfg.grids["L"],
        "fit.mu_window": cfg.fit_windows["mu_window"],
        "fit.kz_window": cfg.fit_windows["kz_window"],
        "fit.exponent_window": cfg.fit_windows["exponent_window"],
        "fit.delta_L": cfg.fit_windows["delta_L"],
        "quench.j_critical": cfg.j_critical_quench,
        "equilibrium.j_critical": cfg.j_critical_equilibrium,
        "output_dir": cfg.output_dir,
        "seed": cfg.seed,
    }
    lines = []
    for key in REGISTRY:
        value = values[key]
        if value is None:
            continue
        if isinstance(value, tuple) and not value:
            continue
        lines.append(f"{key} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())
