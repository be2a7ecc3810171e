"""
Run and reviser configuration.

Instances are built by ``RunConfigSerializer`` / ``ReviserConfigSerializer``
from settings, config files and flags; they are immutable afterwards.
"""
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import yaml

from discovery import exceptions
from discovery.conf import asmr_settings

MODEL_CLASSES = ("wadd", "ttb", "eqw")


class ReviserMode(str, Enum):
    LLM = "llm"
    SCRIPTED = "scripted"


class AcceptancePolicy(str, Enum):
    ALWAYS_ACCEPT = "always_accept"
    KEEP_BEST = "keep_best"


@dataclass(frozen=True)
class ReviserConfig:
    mode: ReviserMode = ReviserMode.LLM
    endpoint_url: str = "http://localhost:8000/v1"
    model_name: str = "Qwen/Qwen3-32B"
    temperature: float = 0.6
    top_p: float = 0.95
    max_retries: int = 2
    timeout: float = 600.0
    retry_backoff: float = 1.0
    api_key_env: str = "ASMR_API_KEY"
    script_id: str = ""
    system_text: str = ""
    multi_proposal: bool = False


@dataclass(frozen=True)
class RunConfig:
    trials_path: str
    reference_path: str
    output_dir: str
    reviser: ReviserConfig = field(default_factory=ReviserConfig)
    trials_format: str = ""
    iterations: int = 5
    simulations_per_class: int = 10
    threshold: float = 0.05
    acceptance_policy: AcceptancePolicy = AcceptancePolicy.ALWAYS_ACCEPT
    seed: int = 0
    max_points_in_prompt: int = 200
    restarts: int = 10
    workers: int = 1
    num_features: int = 4
    model_classes: tuple = MODEL_CLASSES
    log_regret_points: bool = False

    def as_dict(self) -> dict:
        """JSON-ready view used for the run-log header."""
        config = asdict(self)
        config["acceptance_policy"] = self.acceptance_policy.value
        config["model_classes"] = list(self.model_classes)
        config["reviser"]["mode"] = self.reviser.mode.value
        return config


def settings_defaults() -> dict:
    """RunConfig field values taken from the ``ASMR`` settings."""
    reviser = asmr_settings.REVISER
    return {
        "iterations": asmr_settings.ITERATIONS,
        "simulations_per_class": asmr_settings.SIMULATIONS_PER_CLASS,
        "threshold": asmr_settings.THRESHOLD,
        "acceptance_policy": asmr_settings.ACCEPTANCE_POLICY,
        "seed": asmr_settings.SEED,
        "max_points_in_prompt": asmr_settings.MAX_POINTS_IN_PROMPT,
        "restarts": asmr_settings.RESTARTS,
        "workers": asmr_settings.WORKERS,
        "num_features": asmr_settings.NUM_FEATURES,
        "reviser": {
            "mode": reviser["MODE"],
            "endpoint_url": reviser["ENDPOINT_URL"],
            "model_name": reviser["MODEL_NAME"],
            "temperature": reviser["TEMPERATURE"],
            "top_p": reviser["TOP_P"],
            "max_retries": reviser["MAX_RETRIES"],
            "timeout": reviser["TIMEOUT"],
            "retry_backoff": reviser["RETRY_BACKOFF"],
            "api_key_env": reviser["API_KEY_ENV"],
        },
    }


def read_config_file(path) -> dict:
    """Read a ``.toml`` or ``.yaml``/``.yml`` run config into a dict."""
    path = Path(path)
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            with open(path, encoding="utf-8") as handle:
                data = yaml.safe_load(handle) or {}
        else:
            with open(path, "rb") as handle:
                data = tomllib.load(handle)
    except OSError as exc:
        raise exceptions.IoError(f"cannot read config {path}: {exc}") from exc
    except (tomllib.TOMLDecodeError, yaml.YAMLError) as exc:
        raise exceptions.SchemaError(f"invalid config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise exceptions.SchemaError(f"config {path} must be a mapping")
    return data


def merge_config(*layers) -> dict:
    """Merge config layers left to right; ``None`` values do not override."""
    merged = {}
    for layer in layers:
        for key, value in (layer or {}).items():
            if value is None:
                continue
            if isinstance(value, dict) and isinstance(merged.get(key), dict):
                merged[key] = merge_config(merged[key], value)
            else:
                merged[key] = value
    return merged
