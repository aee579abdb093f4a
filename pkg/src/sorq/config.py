"""Line-oriented ``key = value`` experiment configs.

Blank lines and lines starting with ``#`` are ignored; dotted keys address the
nested generator and learner templates::

    num_mdps = 100
    algorithms = standard_q, sor_q
    w_values = w_star
    generator.min_self_loop = 0.05
    learner.schedule.exponent = 1.0

Per-instance seeds are derived from ``master_seed``, so the templates carry no
seed of their own.
"""

from __future__ import annotations

from dataclasses import replace

from .experiments import W_TOKENS, ExperimentConfig, w_label

ALGORITHM_ALIASES = {"q": "standard_q", "standard_q": "standard_q", "sorq": "sor_q", "sor_q": "sor_q"}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _w_value(token: str):
    token = token.strip()
    return token if token in W_TOKENS else float(token)


def _algorithms(text: str) -> tuple[str, ...]:
    names = [t.strip() for t in text.split(",") if t.strip()]
    try:
        return tuple(ALGORITHM_ALIASES[n] for n in names)
    except KeyError as exc:
        raise ValueError(f"unknown algorithm {exc.args[0]!r}") from None


def _tuple(conv):
    return lambda text: tuple(conv(t) for t in text.split(",") if t.strip())


# key -> (section, field, converter)
_KEYS = {
    "num_mdps": (None, "num_mdps", int),
    "master_seed": (None, "master_seed", int),
    "oracle_tol": (None, "oracle_tol", float),
    "algorithms": (None, "algorithms", _algorithms),
    "w_values": (None, "w_values", _tuple(_w_value)),
    "generator.num_states": ("generator", "num_states", int),
    "generator.num_actions": ("generator", "num_actions", int),
    "generator.discount": ("generator", "discount", float),
    "generator.min_self_loop": ("generator", "min_self_loop", float),
    "generator.reward_low": ("generator", "reward_low", float),
    "generator.reward_high": ("generator", "reward_high", float),
    "learner.total_steps": ("learner", "total_steps", int),
    "learner.record_every": ("learner", "record_every", int),
    "learner.initial_q": ("learner", "initial_q", float),
    "learner.schedule.kind": ("schedule", "kind", str),
    "learner.schedule.c0": ("schedule", "c0", float),
    "learner.schedule.exponent": ("schedule", "exponent", float),
}


def split_lines(text: str):
    """Yield ``(line_number, key, value)`` for every non-comment line."""
    seen = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError("expected 'key = value'", n)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", n)
        seen[key] = n
        yield n, key, value


def parse_config(text: str, ignore: tuple[str, ...] = ()) -> ExperimentConfig:
    top, sections = {}, {"generator": {}, "learner": {}, "schedule": {}}
    for n, key, value in split_lines(text):
        if key in ignore:
            continue
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}", n)
        section, name, conv = _KEYS[key]
        try:
            parsed = conv(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", n) from None
        (top if section is None else sections[section])[name] = parsed

    base = ExperimentConfig()
    try:
        schedule = replace(base.learner.schedule, **sections["schedule"])
        learner = replace(base.learner, schedule=schedule, **sections["learner"])
        generator = replace(base.generator, **sections["generator"])
        return replace(base, generator=generator, learner=learner, **top)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _g(x: float) -> str:
    return format(float(x), ".17g")


def format_config(cfg: ExperimentConfig) -> str:
    """Every key with its resolved value; ``parse_config`` reads it back unchanged."""
    g, lr, s = cfg.generator, cfg.learner, cfg.learner.schedule
    pairs = [
        ("num_mdps", cfg.num_mdps),
        ("master_seed", cfg.master_seed),
        ("oracle_tol", _g(cfg.oracle_tol)),
        ("algorithms", ", ".join(cfg.algorithms)),
        ("w_values", ", ".join(w_label(w) for w in cfg.w_values)),
        ("generator.num_states", g.num_states),
        ("generator.num_actions", g.num_actions),
        ("generator.discount", _g(g.discount)),
        ("generator.min_self_loop", _g(g.min_self_loop)),
        ("generator.reward_low", _g(g.reward_low)),
        ("generator.reward_high", _g(g.reward_high)),
        ("learner.total_steps", lr.total_steps),
        ("learner.record_every", lr.record_every),
        ("learner.initial_q", _g(lr.initial_q)),
        ("learner.schedule.kind", s.kind),
        ("learner.schedule.c0", _g(s.c0)),
        ("learner.schedule.exponent", _g(s.exponent)),
    ]
    return "".join(f"{k} = {v}\n" for k, v in pairs)

