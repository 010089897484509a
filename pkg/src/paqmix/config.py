"""Run configuration: training hyperparameters, scenario, reward coefficients.

Config files are flat ``key = value`` lines; ``#`` starts a comment. Keys are
the field names of :class:`TrainConfig`, :class:`~paqmix.sim.ScenarioConfig`
and :class:`~paqmix.reward.RewardCoeffs`; a key present in more than one of
them (``max_steps``, ``dt``, ``w``, ``seed``) sets all of them. Ranges and the
action set are comma-separated lists.
"""
import dataclasses
from dataclasses import dataclass, field

from .qmix import ACTIONS
from .reward import RewardCoeffs
from .sim import ConfigError, ScenarioConfig


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 1000
    max_steps: int = 1000
    batch_size: int = 256
    gamma: float = 0.99
    lr: float = 1e-4
    eps_start: float = 1.0
    eps_min: float = 0.05
    eps_decay: float = 0.99
    target_update_interval: int = 4
    dt: float = 0.1
    actions: tuple = ACTIONS
    w: int = 9
    ablate_attention: bool = False
    seed: int = 0
    buffer_capacity: int = 1_000_000
    d_model: int = 32
    n_heads: int = 4
    ffn_hidden: int = 64
    head_hidden: int = 64
    mixer_hidden: int = 32
    weight_decay: float = 0.01
    checkpoint_interval: int = 50
    updates_per_step: int = 1
    update_every: int = 1
    reward_scale: float = 1.0
    grad_clip: float = 0.0

    def __post_init__(self):
        positive = ("episodes", "max_steps", "batch_size", "lr", "target_update_interval", "dt",
                    "buffer_capacity", "d_model", "n_heads", "ffn_hidden", "head_hidden",
                    "mixer_hidden", "checkpoint_interval", "update_every", "reward_scale")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0, 1]")
        if not 0.0 <= self.eps_min <= self.eps_start <= 1.0:
            raise ConfigError("need 0 <= eps_min <= eps_start <= 1")
        if not 0.0 < self.eps_decay <= 1.0:
            raise ConfigError("eps_decay must lie in (0, 1]")
        if self.d_model % self.n_heads:
            raise ConfigError("d_model must be divisible by n_heads")
        if self.updates_per_step < 0:
            raise ConfigError("updates_per_step must be non-negative")
        object.__setattr__(self, "actions", tuple(float(a) for a in self.actions))


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    reward: RewardCoeffs = field(default_factory=RewardCoeffs)

    def with_values(self, **values):
        """Return a copy with the given flat keys applied to every section that knows them."""
        sections = {"train": self.train, "scenario": self.scenario, "reward": self.reward}
        updates = {name: {} for name in sections}
        for key, value in values.items():
            owners = [name for name, obj in sections.items()
                      if key in {f.name for f in dataclasses.fields(obj)}]
            if not owners:
                raise ConfigError(f"unknown configuration key {key!r}")
            for name in owners:
                updates[name][key] = value
        try:
            return RunConfig(**{name: dataclasses.replace(obj, **updates[name])
                                for name, obj in sections.items()})
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


# small, CI-speed variant of the full setup; the encoder keeps its full width
PRESETS = {
    "full": {},
    "small": {
        "n_agents": 4,
        "episodes": 200,
        "mixer_hidden": 16,
        "depart_range": (0.0, 20.0),
        "max_steps": 600,
        "batch_size": 32,
        "update_every": 4,
        "lr": 1e-3,
        "reward_scale": 0.01,
        "buffer_capacity": 100_000,
    },
}


def preset(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return RunConfig().with_values(**PRESETS[name])


def _parse_value(raw, template):
    raw = raw.strip()
    if isinstance(template, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(template, int):
        return int(raw)
    if isinstance(template, float):
        return float(raw)
    if isinstance(template, tuple):
        items = [s for s in raw.strip("[]()").split(",") if s.strip()]
        return tuple(float(s) for s in items)
    return raw


def parse_config_text(text):
    """Parse ``key = value`` lines into a dict of typed values (typed by field defaults)."""
    defaults = {}
    for obj in (RewardCoeffs(), ScenarioConfig(), TrainConfig()):
        for f in dataclasses.fields(obj):
            defaults[f.name] = getattr(obj, f.name)
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key == "preset":
            values[key] = raw
            continue
        if key not in defaults:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(raw, defaults[key])
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return values


def load_config(path, base=None):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    values = parse_config_text(text)
    name = values.pop("preset", None)
    if base is None:
        base = preset(name) if name else RunConfig()
    return base.with_values(**values)


def dump_config(cfg):
    lines = []
    seen = set()
    for obj in (cfg.train, cfg.scenario, cfg.reward):
        for f in dataclasses.fields(obj):
            if f.name in seen:
                continue
            seen.add(f.name)
            value = getattr(obj, f.name)
            if isinstance(value, tuple):
                value = ", ".join(repr(v) for v in value)
            lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
