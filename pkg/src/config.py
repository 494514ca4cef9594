"""
Run configuration for the collaborative filtering engine.
Merges the defaults table, an optional flat key=value file, the environment
and command-line overrides, in that order of increasing precedence.
"""
import dataclasses
import os
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from dotenv import dotenv_values, load_dotenv

from config.settings import Settings
from src.exceptions import ParameterError
from src.iwo import IwoParams
from src.ratings import SCALES, SplitConfig
from src.similarity import SimilarityParams

BASELINE_CHOICES = ('proposed', 'user-mean', 'pcc-topk-unweighted', 'all')


@dataclass(frozen=True)
class RunConfig:
    """Effective configuration of one command-line run."""
    dataset_path: Optional[str] = None
    dataset_format: str = Settings.DATASET_FORMAT
    split_fraction: float = Settings.SPLIT_FRACTION
    split_seed: int = Settings.SPLIT_SEED
    k: float = Settings.K
    theta: float = Settings.THETA
    s_min: int = Settings.S_MIN
    s_max: int = Settings.S_MAX
    sigma_initial: float = Settings.SIGMA_INITIAL
    sigma_final: float = Settings.SIGMA_FINAL
    n: float = Settings.N
    T: int = Settings.T
    pop_initial: int = Settings.POP_INITIAL
    pop_max: int = Settings.POP_MAX
    fitness_holdout_fraction: float = Settings.FITNESS_HOLDOUT_FRACTION
    sample_users: Optional[int] = None
    baseline: str = Settings.BASELINE
    output_dir: str = Settings.OUTPUT_DIR
    model_cache: Optional[str] = None
    global_seed: int = Settings.GLOBAL_SEED
    workers: int = dataclasses.field(default_factory=lambda: os.cpu_count() or 1)
    log_level: str = Settings.LOG_LEVEL
    record_timing: bool = False

    def __post_init__(self):
        if self.dataset_format not in SCALES:
            raise ParameterError(f"Unknown dataset format {self.dataset_format!r}; expected one of {sorted(SCALES)}")
        if self.baseline not in BASELINE_CHOICES:
            raise ParameterError(f"Unknown baseline {self.baseline!r}; expected one of {list(BASELINE_CHOICES)}")
        if not 0.0 < self.fitness_holdout_fraction < 1.0:
            raise ParameterError(
                f"fitness_holdout_fraction must lie in (0, 1), got {self.fitness_holdout_fraction}")
        if self.sample_users is not None and self.sample_users < 1:
            raise ParameterError(f"sample_users must be positive, got {self.sample_users}")
        if self.workers < 1:
            raise ParameterError(f"workers must be positive, got {self.workers}")
        # constructing the typed parameters validates them
        self.sim_params()
        self.iwo_params()
        self.split_config()

    def sim_params(self) -> SimilarityParams:
        return SimilarityParams(k=self.k, theta=self.theta)

    def iwo_params(self) -> IwoParams:
        return IwoParams(s_min=self.s_min, s_max=self.s_max,
                         sigma_initial=self.sigma_initial, sigma_final=self.sigma_final,
                         n=self.n, T=self.T, pop_initial=self.pop_initial, pop_max=self.pop_max)

    def split_config(self) -> SplitConfig:
        return SplitConfig(fraction=self.split_fraction, seed=self.split_seed)

    @property
    def dataset_name(self) -> str:
        return Path(self.dataset_path).stem if self.dataset_path else 'dataset'

    def to_text(self) -> str:
        """Serialize as the flat key=value format `load_run_config` reads."""
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is None:
                text = ''
            elif isinstance(value, float):
                text = repr(value)
            elif isinstance(value, bool):
                text = 'true' if value else 'false'
            else:
                text = str(value)
            lines.append(f"{f.name}={text}")
        return "\n".join(lines) + "\n"


_HINTS = typing.get_type_hints(RunConfig)
_KEYS = {f.name.lower(): f.name for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, raw: Any) -> Any:
    """Convert a raw file, environment or flag value to the field's type."""
    hint = _HINTS[name]
    optional = type(None) in typing.get_args(hint)
    if optional:
        hint = next(a for a in typing.get_args(hint) if a is not type(None))
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if optional and text.lower() in ('', 'none'):
        return None
    try:
        if hint is bool:
            if text.lower() in ('1', 'true', 'yes', 'on'):
                return True
            if text.lower() in ('0', 'false', 'no', 'off'):
                return False
            raise ValueError(text)
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
    except ValueError:
        raise ParameterError(f"Invalid value {raw!r} for {name}") from None
    return text


def _merge(values: Dict[str, Any], source: Mapping[str, Any], origin: str) -> None:
    for key, raw in source.items():
        name = _KEYS.get(key.strip().lower())
        if name is None:
            raise ParameterError(f"Unknown configuration key {key!r} in {origin}")
        values[name] = _coerce(name, raw)


def _load_environment() -> Dict[str, Any]:
    """Load overrides from the environment."""
    # Only load from .env file if not in test mode
    if not os.getenv('TEST_MODE'):
        load_dotenv(override=False)
    seed = os.getenv(Settings.GLOBAL_SEED_ENV)
    return {'global_seed': seed} if seed else {}


def load_run_config(config_path=None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Build the effective RunConfig.

    Args:
        config_path: Optional flat key=value file.
        overrides: Values from command-line flags; None entries are ignored.

    Returns:
        RunConfig: The validated configuration.

    Raises:
        FileNotFoundError: If config_path does not exist.
        ParameterError: On unknown keys or invalid values.
    """
    values: Dict[str, Any] = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise FileNotFoundError(f"Config file not found: {path}")
        _merge(values, {k: v if v is not None else '' for k, v in dotenv_values(path).items()}, str(path))
    _merge(values, _load_environment(), 'environment')
    if overrides:
        _merge(values, {k: v for k, v in overrides.items() if v is not None}, 'command line')
    return RunConfig(**values)
