"""Run configuration file: ``key = value`` sections read with :mod:`configparser`.

Sections are ``[scheduler]``, ``[router]``, ``[executor]`` and ``[backends]``.
Every key has a default, so an empty or partial file is valid;
:func:`default_config_text` renders the complete file.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from os import PathLike

from .errors import ConfigError
from .executor import DEFAULT_MAX_TOKENS, ExecutorConfig, RunConfig
from .graph import ACTIONS
from .pool import DEFAULT_ALPHA_POL, DEFAULT_B25, DEFAULT_B75
from .router import (
    COST_CLAMP,
    COST_MIN_OBS,
    COST_PRIORS,
    COST_WINDOW,
    DEFAULT_ALPHA_ASYM,
    DEFAULT_CLASS_WEIGHTS,
    DEFAULT_HIDDEN,
    DEFAULT_LAMBDA_RANK,
    DEFAULT_MARGIN,
    DEFAULT_TAU,
    ORDINAL_TRAIN,
    POLICY_TRAIN,
    SUCCESS_TRAIN,
    TrainConfig,
)
from .scheduler import Limits
from .training import RouterTrainConfig

_MAX_TOKEN_KEYS = {
    "max_tokens_io": "IO",
    "max_tokens_cot": "CoT",
    "max_tokens_decompose": "Decompose",
    "max_tokens_solve_with_plan": "SolveWithPlan",
    "max_tokens_subtask": "Subtask",
}


def _defaults() -> dict[str, dict[str, str]]:
    def train(prefix: str, tc: TrainConfig) -> dict[str, str]:
        return {f"{prefix}_epochs": str(tc.epochs), f"{prefix}_lr": repr(tc.lr),
                f"{prefix}_weight_decay": repr(tc.weight_decay)}

    return {
        "scheduler": {
            "b_total": "20000",
            "alpha_syn": "0.1",
            "b_min": "512",
            "max_depth": str(Limits.max_depth),
            "max_branch": str(Limits.max_branch),
            "max_nodes": str(Limits.max_nodes),
            "hardness_margin": "1.0",
        },
        "router": {
            "fit_thresholds": "true",
            "b25": repr(DEFAULT_B25),
            "b75": repr(DEFAULT_B75),
            "tau1": repr(DEFAULT_TAU[0]),
            "tau2": repr(DEFAULT_TAU[1]),
            "class_weights": ", ".join(repr(w) for w in DEFAULT_CLASS_WEIGHTS),
            "alpha_asym": repr(DEFAULT_ALPHA_ASYM),
            "lambda_rank": repr(DEFAULT_LAMBDA_RANK),
            "margin": repr(DEFAULT_MARGIN),
            "hidden": ", ".join(str(h) for h in DEFAULT_HIDDEN),
            "alpha_pol": repr(DEFAULT_ALPHA_POL),
            **train("success", SUCCESS_TRAIN),
            **train("ordinal", ORDINAL_TRAIN),
            **train("policy", POLICY_TRAIN),
            "batch_size": "",
            "train_seed": "0",
            "cost_window": str(COST_WINDOW),
            "cost_min_obs": str(COST_MIN_OBS),
            "cost_clamp": ", ".join(repr(c) for c in COST_CLAMP),
            "prior_io": repr(COST_PRIORS[ACTIONS[0]]),
            "prior_cot": repr(COST_PRIORS[ACTIONS[1]]),
            "prior_decompose": repr(COST_PRIORS[ACTIONS[2]]),
        },
        "executor": {
            **{k: str(DEFAULT_MAX_TOKENS[v]) for k, v in _MAX_TOKEN_KEYS.items()},
            "temperature": "0.0",
            "seed": "0",
            "plan_retries": "1",
            "update_estimator": "true",
            "reserve_synthesis_input": "true",
        },
        "backends": {
            "small": "",
            "medium": "",
            "large": "",
            "judge": "",
            "model_small": "small",
            "model_medium": "medium",
            "model_large": "large",
            "model_judge": "large",
            "api_key_env": "",
            "timeout": "120.0",
            "max_attempts": "3",
            "backoff": "1.0",
        },
    }


DEFAULTS = _defaults()


@dataclass
class BackendsConfig:
    small: str = ""
    medium: str = ""
    large: str = ""
    judge: str = ""
    models: dict[str, str] = field(default_factory=lambda: {
        "small": "small", "medium": "medium", "large": "large", "judge": "large"})
    api_key_env: str = ""
    timeout: float = 120.0
    max_attempts: int = 3
    backoff: float = 1.0


@dataclass
class AppConfig:
    run: RunConfig = field(default_factory=RunConfig)
    router: RouterTrainConfig = field(default_factory=RouterTrainConfig)
    backends: BackendsConfig = field(default_factory=BackendsConfig)


def default_config_text() -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_dict(DEFAULTS)
    lines = []
    for section in parser.sections():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in parser[section].items())
        lines.append("")
    return "\n".join(lines)


def _floats(text: str, n: int, key: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != n:
        raise ConfigError(f"{key}: expected {n} numbers, got {text!r}")
    return tuple(float(p) for p in parts)


def _build(parser: configparser.ConfigParser) -> AppConfig:
    s, r, e, b = (parser[name] for name in ("scheduler", "router", "executor", "backends"))
    limits = Limits(s.getint("max_depth"), s.getint("max_branch"), s.getint("max_nodes"))
    max_tokens = dict(DEFAULT_MAX_TOKENS)
    for key, phase in _MAX_TOKEN_KEYS.items():
        max_tokens[phase] = e.getint(key)
    executor = ExecutorConfig(
        max_tokens=max_tokens,
        temperature=e.getfloat("temperature"),
        seed=e.getint("seed"),
        plan_retries=e.getint("plan_retries"),
        update_estimator=e.getboolean("update_estimator"),
        reserve_synthesis_input=e.getboolean("reserve_synthesis_input"),
    )
    run = RunConfig(s.getfloat("b_total"), s.getfloat("alpha_syn"), s.getfloat("b_min"),
                    s.getfloat("hardness_margin"), limits, executor)

    batch = r.get("batch_size").strip()
    seed = r.getint("train_seed")

    def tc(prefix: str) -> TrainConfig:
        return TrainConfig(r.getint(f"{prefix}_epochs"), r.getfloat(f"{prefix}_lr"),
                           r.getfloat(f"{prefix}_weight_decay"),
                           int(batch) if batch else None, seed)

    router = RouterTrainConfig(
        success=tc("success"),
        ordinal=tc("ordinal"),
        policy=tc("policy"),
        alpha_pol=r.getfloat("alpha_pol"),
        lambda_rank=r.getfloat("lambda_rank"),
        margin=r.getfloat("margin"),
        hidden=tuple(int(h) for h in r.get("hidden").replace(",", " ").split()),
        tau=(r.getfloat("tau1"), r.getfloat("tau2")),
        class_weights=_floats(r.get("class_weights"), 3, "class_weights"),
        alpha_asym=r.getfloat("alpha_asym"),
        priors=(r.getfloat("prior_io"), r.getfloat("prior_cot"), r.getfloat("prior_decompose")),
        cost_window=r.getint("cost_window"),
        cost_min_obs=r.getint("cost_min_obs"),
        cost_clamp=_floats(r.get("cost_clamp"), 2, "cost_clamp"),
        thresholds=None if r.getboolean("fit_thresholds") else (r.getfloat("b25"),
                                                                r.getfloat("b75")),
    )
    backends = BackendsConfig(
        b.get("small"), b.get("medium"), b.get("large"), b.get("judge"),
        {t: b.get(f"model_{t}") for t in ("small", "medium", "large", "judge")},
        b.get("api_key_env"), b.getfloat("timeout"), b.getint("max_attempts"),
        b.getfloat("backoff"),
    )
    return AppConfig(run, router, backends)


def parse_config(text: str = "") -> AppConfig:
    """Parse config text over the defaults; unknown sections or keys are errors."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_dict(DEFAULTS)
    user = configparser.ConfigParser(interpolation=None)
    try:
        user.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for section in user.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in user[section].items():
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            parser[section][key] = value
    try:
        return _build(parser)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | PathLike | None) -> AppConfig:
    if path is None:
        return parse_config("")
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
