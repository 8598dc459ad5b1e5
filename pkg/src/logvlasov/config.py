"""Run configuration: flat ``key = value`` sections, validated on parse."""
import configparser
import math
from dataclasses import dataclass, fields, replace

from .errors import ConfigError, DomainError
from .flow import PotentialParams

EXPERIMENTS = ("flow", "lemmas", "decay", "doeblin", "moments", "survival")


@dataclass(frozen=True)
class RunConfig:
    # [run]
    experiment: str = "flow"
    seed: int = 0
    n_particles: int = 1_000_000
    n_checkpoints: int = 10
    fluctuation: str = "default"
    threads: int = 0
    # [potential]
    ln_a: float = 0.125
    mass: float = 1.0
    # [diagnostics]
    t0: float = 32.0
    delta: float = 0.5
    theta: float = 0.2
    survival_delta: float = 0.05
    n_chains: int = 10_000_000
    n_boot: int = 32
    # [histogram]
    n_x3: int = 64
    n_v3: int = 32
    n_vpar: int = 16
    v_max: float = 6.0
    x3_tail: float = 1e-4

    @property
    def a(self):
        return math.exp(self.ln_a)

    @property
    def params(self):
        return PotentialParams.from_ln_a(self.ln_a, self.mass)

    def histogram_spec(self):
        from .engine import HistogramSpec

        return HistogramSpec.default(self.params, self.n_x3, self.n_v3, self.n_vpar, self.v_max, self.x3_tail)

    def with_(self, **kw):
        return validate(replace(self, **kw))


SECTIONS = {
    "run": ("experiment", "seed", "n_particles", "n_checkpoints", "fluctuation", "threads"),
    "potential": ("ln_a", "mass"),
    "diagnostics": ("t0", "delta", "theta", "survival_delta", "n_chains", "n_boot"),
    "histogram": ("n_x3", "n_v3", "n_vpar", "v_max", "x3_tail"),
}
_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, raw):
    typ = _TYPES[key]
    raw = raw.strip()
    try:
        if typ in ("int", int):
            val = int(raw.replace("_", ""), 0)
            if not -(1 << 63) <= val < (1 << 63):
                raise ValueError
            return val
        if typ in ("float", float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(key, f"cannot read {raw!r} as {getattr(typ, '__name__', typ)}") from None


def validate(cfg):
    def need(ok, key, msg):
        if not ok:
            raise ConfigError(key, msg)

    need(cfg.experiment in EXPERIMENTS, "run.experiment", f"must be one of {', '.join(EXPERIMENTS)}")
    need(0 <= cfg.seed < (1 << 63), "run.seed", "must lie in [0, 2^63)")
    need(cfg.n_particles > 0, "run.n_particles", "must be positive")
    need(cfg.n_checkpoints > 0, "run.n_checkpoints", "must be positive")
    need(cfg.threads >= 0, "run.threads", "must be non-negative (0 = all available)")
    need(cfg.fluctuation in ("default", "null"), "run.fluctuation", "must be 'default' or 'null'")
    need(math.isfinite(cfg.ln_a) and 0.0 < cfg.ln_a < 1.0, "potential.a", "need 1 < a < e")
    big_a = math.floor(1.0 / cfg.ln_a)
    need(big_a >= 8, "potential.a", f"floor(1/ln a) = {big_a} is below 8")
    need(cfg.mass > 0, "potential.mass", "must be positive")
    need(cfg.t0 > 20.0, "diagnostics.t0", "must exceed 20")
    need(0.0 < cfg.delta < 1.0, "diagnostics.delta", "must lie in (0, 1)")
    need(0.0 <= 2.0 * cfg.theta < 0.5, "diagnostics.theta", "need 0 <= 2 theta < 1/2")
    need(0.0 < cfg.survival_delta < 1.0, "diagnostics.survival_delta", "must lie in (0, 1)")
    need(cfg.n_chains > 0, "diagnostics.n_chains", "must be positive")
    need(cfg.n_boot >= 2, "diagnostics.n_boot", "must be at least 2")
    for key in ("n_x3", "n_v3", "n_vpar"):
        need(getattr(cfg, key) >= 1, f"histogram.{key}", "must be positive")
    need(cfg.v_max > 0, "histogram.v_max", "must be positive")
    need(0.0 < cfg.x3_tail < 1.0, "histogram.x3_tail", "must lie in (0, 1)")
    try:
        cfg.params
    except DomainError as exc:
        raise ConfigError("potential.a", str(exc)) from None
    return cfg


def parse_config(text):
    """Parse configuration text; unknown sections or keys are rejected by name."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None
    values = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(section, "unknown section")
        for key, raw in cp.items(section):
            path = f"{section}.{key}"
            if section == "potential" and key == "a":
                if "ln_a" in cp[section]:
                    raise ConfigError(path, "give either a or ln_a, not both")
                a = _coerce("ln_a", raw)
                if not a > 1.0:
                    raise ConfigError(path, "base must exceed 1")
                values["ln_a"] = math.log(a)
                continue
            if key not in SECTIONS[section]:
                raise ConfigError(path, "unknown key")
            try:
                values[key] = _coerce(key, raw)
            except ConfigError as exc:
                raise ConfigError(path, str(exc).split(": ", 1)[1]) from None
    return validate(RunConfig(**values))


def render_config(cfg, include_threads=True):
    out = []
    for section, keys in SECTIONS.items():
        out.append(f"[{section}]")
        for key in keys:
            if key == "threads" and not include_threads:
                continue
            val = getattr(cfg, key)
            out.append(f"{key} = {val!r}" if isinstance(val, float) else f"{key} = {val}")
        out.append("")
    return "\n".join(out)
