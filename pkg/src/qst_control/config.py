"""Experiment configuration: YAML schema, validation, and resolution.

Configs are plain YAML mappings.  Validation is strict: unknown sections
or keys are errors that name the exact field path (so a typo like
``ga.populaton_size`` cannot silently fall back to a default), values are
type- and range-checked, and every missing field resolves to an explicit
default.  The resolved form can be printed (``describe``) and re-parsed
into an identical configuration.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import yaml

from .chain import ChainSpec
from .dqn import DqnConfig, RewardTable
from .ga import GaConfig
from .harness import DEFAULT_NOISE_LEVELS, HpoRanges

MODES = ("ga", "dqn-train", "validate", "sweep", "histogram", "scaling", "baseline", "hpo", "describe")
ACTION_SET_KINDS = ("site_by_site", "zhang16")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str) -> None:
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


# ---------------------------------------------------------------- checkers


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_int(v, path, lo=None, hi=None):
    if not _is_int(v):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(path, f"must be at least {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(path, f"must be at most {hi}, got {v}")
    return v


def _check_opt_int(v, path, lo=None):
    if v is None:
        return None
    return _check_int(v, path, lo=lo)


def _check_num(v, path, lo=None, hi=None):
    if not (_is_int(v) or isinstance(v, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    v = float(v)
    if lo is not None and v < lo:
        raise ConfigError(path, f"must be at least {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(path, f"must be at most {hi}, got {v}")
    return v


def _check_str(v, path, choices=None):
    if not isinstance(v, str):
        raise ConfigError(path, f"expected a string, got {v!r}")
    if choices is not None and v not in choices:
        raise ConfigError(path, f"must be one of {list(choices)}, got {v!r}")
    return v


def _check_num_list(v, path, lo=None):
    if not isinstance(v, (list, tuple)) or len(v) == 0:
        raise ConfigError(path, f"expected a non-empty list of numbers, got {v!r}")
    return [_check_num(x, f"{path}[{i}]", lo=lo) for i, x in enumerate(v)]


def _check_int_list(v, path, lo=None):
    if not isinstance(v, (list, tuple)) or len(v) == 0:
        raise ConfigError(path, f"expected a non-empty list of integers, got {v!r}")
    return [_check_int(x, f"{path}[{i}]", lo=lo) for i, x in enumerate(v)]


def _check_pair(v, path, lo=None, integer=False):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ConfigError(path, f"expected a [low, high] pair, got {v!r}")
    check = _check_int if integer else _check_num
    low = check(v[0], f"{path}[0]", lo=lo)
    high = check(v[1], f"{path}[1]", lo=lo)
    if low > high:
        raise ConfigError(path, f"low bound exceeds high bound: {v!r}")
    return [low, high]


def _check_scales(v, path):
    if not isinstance(v, (list, tuple)) or len(v) != 3:
        raise ConfigError(path, f"expected three reward scales, got {v!r}")
    return [_check_num(x, f"{path}[{i}]") for i, x in enumerate(v)]


# ------------------------------------------------------------------ schema
#
# section -> field -> (checker lambda, default); None default plus
# required=True marks fields that must be present.

_TOP_FIELDS = {
    "mode": (lambda v, p: _check_str(v, p, choices=MODES), None),
    "seed": (lambda v, p: _check_int(v, p, lo=0), 0),
    "output_dir": (_check_str, "artifacts"),
    "workers": (lambda v, p: _check_int(v, p, lo=1), 1),
    "action_set": (lambda v, p: _check_str(v, p, choices=ACTION_SET_KINDS), "site_by_site"),
}

_SECTIONS = {
    "chain": {
        "n": (lambda v, p: _check_int(v, p, lo=2), None),
        "coupling": (lambda v, p: _check_num(v, p), 1.0),
        "dt": (lambda v, p: _check_num(v, p), 0.15),
        "field_strength": (lambda v, p: _check_num(v, p), 100.0),
    },
    "ga": {
        "population_size": (lambda v, p: _check_int(v, p, lo=2), 4096),
        "max_generations": (lambda v, p: _check_int(v, p, lo=1), 1000),
        "saturation": (lambda v, p: _check_int(v, p, lo=1), 30),
        "parents_mating": (lambda v, p: _check_int(v, p, lo=2), 409),
        "keep_elitism": (lambda v, p: _check_int(v, p, lo=0), 409),
        "crossover_probability": (lambda v, p: _check_num(v, p, lo=0.0, hi=1.0), 0.8),
        "mutation_probability": (lambda v, p: _check_num(v, p, lo=0.0, hi=1.0), 0.99),
        "mutated_genes": (lambda v, p: _check_opt_int(v, p, lo=0), None),
        "target_probability": (lambda v, p: _check_num(v, p, lo=0.0, hi=1.0), 0.99),
        "n_seeds": (lambda v, p: _check_int(v, p, lo=1), 30),
    },
    "dqn": {
        "gamma": (lambda v, p: _check_num(v, p), 0.95),
        "learning_rate": (lambda v, p: _check_num(v, p), 0.01),
        "hidden1": (lambda v, p: _check_int(v, p, lo=1), 120),
        "hidden2": (lambda v, p: _check_opt_int(v, p, lo=1), None),
        "minibatch": (lambda v, p: _check_int(v, p, lo=1), 32),
        "replay_capacity": (lambda v, p: _check_int(v, p, lo=1), 40000),
        "learning_period": (lambda v, p: _check_int(v, p, lo=1), 5),
        "target_sync_period": (lambda v, p: _check_int(v, p, lo=1), 200),
        "episodes": (lambda v, p: _check_int(v, p, lo=1), 50000),
        "epsilon_start": (lambda v, p: _check_num(v, p, lo=0.0, hi=1.0), 1.0),
        "epsilon_floor": (lambda v, p: _check_num(v, p, lo=0.0, hi=1.0), 0.01),
        "epsilon_decay": (lambda v, p: _check_num(v, p, lo=0.0), 1e-4),
        "fidelity_threshold": (lambda v, p: _check_num(v, p, lo=0.0, hi=1.0), 0.0),
        "noise_p": (lambda v, p: _check_num(v, p, lo=0.0, hi=1.0), 0.0),
        "noise_delta": (lambda v, p: _check_num(v, p, lo=0.0), 0.0),
        "reward": ("subsection", None),
    },
    "reward": {
        "zeta": (lambda v, p: _check_num(v, p, lo=0.0, hi=1.0), 0.05),
        "high": (lambda v, p: _check_num(v, p, lo=0.0, hi=1.0), 0.9),
        "scales": (_check_scales, [0.0, 10.0, 2500.0]),
    },
    "validate": {
        "controller": (lambda v, p: _check_str(v, p, choices=("ga", "dqn")), "ga"),
        "p_values": (lambda v, p: _check_num_list(v, p, lo=0.0), list(DEFAULT_NOISE_LEVELS)),
        "delta_values": (lambda v, p: _check_num_list(v, p, lo=0.0), list(DEFAULT_NOISE_LEVELS)),
        "runs": (lambda v, p: _check_int(v, p, lo=1), 100),
    },
    "sweep": {
        "h_values": (lambda v, p: _check_num_list(v, p, lo=0.0), [25.0, 50.0, 100.0, 200.0]),
        "dt_values": (lambda v, p: _check_num_list(v, p), [0.05, 0.1, 0.15, 0.2]),
    },
    "histogram": {
        "n_sequences": (lambda v, p: _check_int(v, p, lo=1), 1000),
        "threshold": (lambda v, p: _check_num(v, p, lo=0.0, hi=1.0), 0.99),
        "max_runs": (lambda v, p: _check_int(v, p, lo=1), 200),
    },
    "scaling": {
        "lengths": (lambda v, p: _check_int_list(v, p, lo=2), [16, 32, 64, 128]),
        "n_seeds": (lambda v, p: _check_int(v, p, lo=1), 3),
    },
    "hpo": {
        "trials": (lambda v, p: _check_int(v, p, lo=1), 32),
        "val_runs": (lambda v, p: _check_int(v, p, lo=1), 100),
        "gamma": (lambda v, p: _check_pair(v, p), [0.95, 1.0]),
        "learning_rate": (lambda v, p: _check_pair(v, p, lo=1e-12), [1e-5, 1e-2]),
        "hidden1": (lambda v, p: _check_pair(v, p, lo=1, integer=True), [512, 4096]),
        "noise_p": (lambda v, p: _check_num(v, p, lo=0.0, hi=1.0), 0.25),
        "noise_delta": (lambda v, p: _check_num(v, p, lo=0.0), 0.25),
    },
    "baseline": {
        "n_steps": (lambda v, p: _check_opt_int(v, p, lo=0), None),
    },
}


def _resolve_section(name: str, data, schema: dict) -> dict:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(name, f"expected a mapping, got {data!r}")
    out = {}
    for key, value in data.items():
        if key not in schema:
            raise ConfigError(f"{name}.{key}" if name else str(key), "unknown key")
        check, _default = schema[key]
        path = f"{name}.{key}" if name else str(key)
        if check == "subsection":
            out[key] = _resolve_section(path, value, _SECTIONS[key])
        else:
            out[key] = check(value, path)
    for key, (check, default) in schema.items():
        if key in out:
            continue
        if check == "subsection":
            out[key] = _resolve_section(f"{name}.{key}" if name else key, {}, _SECTIONS[key])
        else:
            # copy list defaults so resolved configs never alias the schema
            out[key] = list(default) if isinstance(default, list) else default
    return out


def resolve(data: dict | None) -> dict:
    """Validate a raw mapping and fill in every default."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("", f"config must be a mapping, got {type(data).__name__}")
    out = {}
    for key, value in data.items():
        if key in _TOP_FIELDS:
            check, _default = _TOP_FIELDS[key]
            out[key] = check(value, key)
        elif key in _SECTIONS and key != "reward":
            out[key] = _resolve_section(key, value, _SECTIONS[key])
        else:
            raise ConfigError(str(key), "unknown key")
    for key, (check, default) in _TOP_FIELDS.items():
        out.setdefault(key, default)
    for key in _SECTIONS:
        if key == "reward":
            continue
        out.setdefault(key, _resolve_section(key, {}, _SECTIONS[key]))
    if out["chain"]["n"] is None:
        raise ConfigError("chain.n", "required (chain length)")
    if out["mode"] is None:
        del out["mode"]
    return out


# -------------------------------------------------------------- overrides


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``--set section.key=value`` pairs onto the raw mapping.

    Values parse as YAML scalars, so ``--set sweep.h_values=[50,100]``
    and ``--set ga.mutated_genes=null`` work as expected.
    """
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError("", f"override must look like key=value, got {item!r}")
        key, _, raw = item.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError("", f"override has an empty key: {item!r}")
        try:
            value = yaml.safe_load(raw) if raw != "" else None
        except yaml.YAMLError as exc:
            raise ConfigError(key, f"unparseable override value {raw!r}: {exc}") from None
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            nxt = node.get(part)
            if nxt is None:
                nxt = node[part] = {}
            elif not isinstance(nxt, dict):
                raise ConfigError(key, f"cannot descend into non-mapping {part!r}")
            node = nxt
        node[parts[-1]] = value
    return data


# ------------------------------------------------------------- typed form


@dataclass
class ValidateSettings:
    controller: str
    p_values: tuple
    delta_values: tuple
    runs: int


@dataclass
class SweepSettings:
    h_values: tuple
    dt_values: tuple


@dataclass
class HistogramSettings:
    n_sequences: int
    threshold: float
    max_runs: int


@dataclass
class ScalingSettings:
    lengths: tuple
    n_seeds: int


@dataclass
class HpoSettings:
    trials: int
    val_runs: int
    ranges: HpoRanges
    noise_p: float
    noise_delta: float


@dataclass
class BaselineSettings:
    n_steps: int | None


@dataclass
class ExperimentConfig:
    """Fully resolved, typed experiment description."""

    mode: str | None
    seed: int
    output_dir: str
    workers: int
    action_set_kind: str
    chain: ChainSpec
    ga: GaConfig
    dqn: DqnConfig
    validate: ValidateSettings
    sweep: SweepSettings
    histogram: HistogramSettings
    scaling: ScalingSettings
    hpo: HpoSettings
    baseline: BaselineSettings
    resolved: dict


def _build(resolved: dict) -> ExperimentConfig:
    try:
        chain = ChainSpec(**resolved["chain"])
    except (TypeError, ValueError) as exc:
        raise ConfigError("chain", str(exc)) from None
    try:
        ga = GaConfig(**resolved["ga"])
    except ValueError as exc:
        raise ConfigError("ga", str(exc)) from None
    dqn_fields = dict(resolved["dqn"])
    reward_fields = dqn_fields.pop("reward")
    try:
        reward_table = RewardTable(
            zeta=reward_fields["zeta"],
            high=reward_fields["high"],
            scales=tuple(reward_fields["scales"]),
        )
        dqn = DqnConfig(reward_table=reward_table, **dqn_fields)
    except ValueError as exc:
        raise ConfigError("dqn", str(exc)) from None
    hpo = resolved["hpo"]
    return ExperimentConfig(
        mode=resolved.get("mode"),
        seed=resolved["seed"],
        output_dir=resolved["output_dir"],
        workers=resolved["workers"],
        action_set_kind=resolved["action_set"],
        chain=chain,
        ga=ga,
        dqn=dqn,
        validate=ValidateSettings(
            controller=resolved["validate"]["controller"],
            p_values=tuple(resolved["validate"]["p_values"]),
            delta_values=tuple(resolved["validate"]["delta_values"]),
            runs=resolved["validate"]["runs"],
        ),
        sweep=SweepSettings(
            h_values=tuple(resolved["sweep"]["h_values"]),
            dt_values=tuple(resolved["sweep"]["dt_values"]),
        ),
        histogram=HistogramSettings(**resolved["histogram"]),
        scaling=ScalingSettings(
            lengths=tuple(resolved["scaling"]["lengths"]),
            n_seeds=resolved["scaling"]["n_seeds"],
        ),
        hpo=HpoSettings(
            trials=hpo["trials"],
            val_runs=hpo["val_runs"],
            ranges=HpoRanges(
                gamma=tuple(hpo["gamma"]),
                learning_rate=tuple(hpo["learning_rate"]),
                hidden1=tuple(hpo["hidden1"]),
            ),
            noise_p=hpo["noise_p"],
            noise_delta=hpo["noise_delta"],
        ),
        baseline=BaselineSettings(**resolved["baseline"]),
        resolved=resolved,
    )


def load_config(
    path=None,
    overrides=None,
    mode: str | None = None,
    seed: int | None = None,
    output_dir: str | None = None,
    workers: int | None = None,
) -> ExperimentConfig:
    """Read, override, validate, and type a configuration.

    ``mode`` is the invoked subcommand; a ``mode`` key in the file must
    agree with it.  ``seed``, ``output_dir``, and ``workers`` are the
    dedicated CLI flags and take precedence over both the file and
    ``--set`` overrides.
    """
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError("", f"invalid YAML in {path}: {exc}") from None
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("", f"config file must hold a mapping, got {type(data).__name__}")
    else:
        data = {}
    data = apply_overrides(data, overrides)
    if seed is not None:
        data["seed"] = seed
    if output_dir is not None:
        data["output_dir"] = str(output_dir)
    if workers is not None:
        data["workers"] = workers
    resolved = resolve(data)
    if mode is not None and mode != "describe":
        configured = resolved.get("mode")
        if configured is not None and configured != mode:
            raise ConfigError(
                "mode", f"config requests {configured!r} but the {mode!r} subcommand was invoked"
            )
        resolved["mode"] = mode
    return _build(resolved)


# --------------------------------------------------------------- describe


def describe(config: ExperimentConfig) -> str:
    """Resolved config as YAML, with derived quantities as comments.

    The output re-parses to the same configuration (comments are ignored),
    so a described config can be saved and rerun verbatim.
    """
    chain = config.chain
    from .actions import make_action_set

    n_actions = len(make_action_set(config.action_set_kind, chain.n, chain.field_strength))
    table = config.dqn.reward_table
    mutated = config.ga.mutated_genes if config.ga.mutated_genes is not None else chain.n
    source = "explicit" if config.ga.mutated_genes is not None else "chain length"
    lines = [
        "# resolved experiment configuration; derived quantities:",
        f"#   n_steps: {chain.n_steps}   (sequence length, deadline {chain.transfer_deadline!r})",
        f"#   n_actions: {n_actions}   ({config.action_set_kind})",
        f"#   ga swaps per mutation event: {mutated // 2}   (mutated_genes {mutated}, {source})",
        f"#   dqn hidden layers: {config.dqn.hidden1} -> {config.dqn.resolved_hidden2}",
        (
            f"#   reward: 0 below p={table.zeta!r}; {table.scales[1]!r}*p to p={table.high!r}; "
            f"{table.scales[2]!r}*p above"
        ),
        (
            f"#   epsilon: {config.dqn.epsilon_start!r} -> {config.dqn.epsilon_floor!r}, "
            f"minus {config.dqn.epsilon_decay!r} per learning event"
        ),
    ]
    body = yaml.safe_dump(config.resolved, sort_keys=True, default_flow_style=None)
    return "\n".join(lines) + "\n" + body
