"""Run configuration: defaults, file parsing, and command-line overrides.

The config file is plain key = value, one per line, with JSON values on
the right-hand side and ``#`` comments:

    seed = 7
    observation_kind = "onset"
    generation_time = {"family": "gamma", "param1": 4.44, "param2": 1.89}
    change_points = [[23, 1.6], [33, 0.5], [83, 3.0]]

Precedence is command line > file > default.  Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import datetime
import json
from dataclasses import dataclass, field

from .delays import ContinuousDelaySpec, discretize
from .engine import RunOptions
from .errors import ConfigError, MissingComponent, ParseError
from .model import ModelParams
from .observation import build_kernel
from .renewal import DETERMINISTIC_MEAN
from .scenario import ScenarioConfig


@dataclass
class RunConfig:
    """Every tunable of the simulate/estimate/validate pipeline."""

    # delay distributions
    generation_time: dict = field(
        default_factory=lambda: {"family": "gamma", "param1": 5.51, "param2": 0.81}
    )
    incubation: dict = field(
        default_factory=lambda: {"family": "lognormal", "param1": 1.644, "param2": 0.363}
    )
    onset_to_report: dict | None = None
    infection_to_death: dict | None = None
    mortality_rate: float | None = None
    truncation_threshold: float = 0.1
    max_span: int = 60

    # observation model
    observation_kind: str = "onset"
    variance_window: int = 7
    variance_floor: float = 1.0
    relative_variance_floor: float = 0.05
    likelihood: str = "gaussian"

    # latent model
    sigma_R: float = 0.1
    delta: float = 0.5
    alpha: float = 0.95
    n_particles: int = 200
    r_prior: list = field(default_factory=lambda: [1.0, 5.0])
    import_rate: float = 0.1
    reset_prob: float = 0.45

    # inference engine
    ess_threshold_fraction: float = 0.5
    resampling: str = "systematic"
    smoother: str = "ffbsm"
    seed: int = 0
    start_threshold: float = 10.0

    # scenario generation
    r0: float = 3.2
    walk_sd: float = 0.05
    change_points: list = field(
        default_factory=lambda: [[23, 1.6, True], [33, 0.5, False], [83, 3.0, True]]
    )
    horizon: int = 100
    j_init: float = 1.0
    noise_multiplier: float = 1.0
    sim_mode: str = DETERMINISTIC_MEAN
    init_history: str = "constant"
    noise_scale: str = "sqrt"
    start_date: str = "2020-01-01"

    # change detection and validation thresholds
    change_threshold: float = 0.15
    change_window: int = 3
    r_mean_abs_max: float = 0.25
    r_sd_max: float = 0.50
    c_coverage_min: float = 0.85
    change_hits_min: int = 2

    # reporting
    plots: bool = True

    @classmethod
    def field_names(cls):
        return {f.name for f in dataclasses.fields(cls)}

    @classmethod
    def load(cls, path) -> "RunConfig":
        """Parse a key = JSON-value config file."""
        values = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ParseError(f"expected 'key = value', got {line!r}", line=lineno)
                key, _, rhs = line.partition("=")
                key = key.strip()
                try:
                    values[key] = json.loads(rhs.strip())
                except json.JSONDecodeError as exc:
                    raise ParseError(f"bad JSON value for {key!r}: {exc}", line=lineno) from None
        return cls().updated(values)

    def updated(self, values: dict) -> "RunConfig":
        """Copy with overrides; unknown keys are rejected."""
        known = self.field_names()
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return dataclasses.replace(self, **values)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    # -- derived objects ------------------------------------------------

    def _spec(self, key) -> ContinuousDelaySpec | None:
        raw = getattr(self, key)
        if raw is None:
            return None
        try:
            return ContinuousDelaySpec(raw["family"], raw["param1"], raw["param2"])
        except (KeyError, TypeError):
            raise ConfigError(
                f"{key} must be {{family, param1, param2}}, got {raw!r}"
            ) from None

    def _pmf(self, key):
        spec = self._spec(key)
        if spec is None:
            return None
        return discretize(spec, self.truncation_threshold, max_span=self.max_span)

    def observation_kernel(self):
        try:
            return build_kernel(
                self.observation_kind,
                incubation=self._pmf("incubation"),
                onset_to_report=self._pmf("onset_to_report"),
                infection_to_death=self._pmf("infection_to_death"),
                mortality=self.mortality_rate,
            )
        except MissingComponent as exc:
            raise ConfigError(str(exc)) from None

    def model_params(self) -> ModelParams:
        return ModelParams(
            w=self._pmf("generation_time"),
            kernel=self.observation_kernel(),
            sigma_R=self.sigma_R,
            delta=self.delta,
            alpha=self.alpha,
            r_prior=tuple(self.r_prior),
            import_rate=self.import_rate,
            reset_prob=self.reset_prob,
        )

    def run_options(self) -> RunOptions:
        return RunOptions(
            n_particles=self.n_particles,
            seed=self.seed,
            start_threshold=self.start_threshold,
            likelihood=self.likelihood,
            resampling=self.resampling,
            ess_threshold_fraction=self.ess_threshold_fraction,
            smoother=self.smoother,
            variance_window=self.variance_window,
            variance_floor=self.variance_floor,
            relative_variance_floor=self.relative_variance_floor,
        )

    def scenario_config(self) -> ScenarioConfig:
        return ScenarioConfig(
            r0=self.r0,
            walk_sd=self.walk_sd,
            change_points=tuple(tuple(p) for p in self.change_points),
            horizon=self.horizon,
            j_init=self.j_init,
            noise_multiplier=self.noise_multiplier,
            generation_time=self._spec("generation_time"),
            incubation=self._spec("incubation"),
            truncation_threshold=self.truncation_threshold,
            max_span=self.max_span,
            sim_mode=self.sim_mode,
            init_history=self.init_history,
            noise_scale=self.noise_scale,
            seed=self.seed,
        )

    def epoch(self) -> datetime.date:
        return datetime.date.fromisoformat(self.start_date)
