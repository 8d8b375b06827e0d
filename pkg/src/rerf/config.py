import json
import pathlib
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import yaml
from config_morpher import ConfigMorpher

from .dataset import CONCRETE_RATIO, DatasetError, FeatureExpansionSpec, SplitRule, concrete_split_rules
from .forest import DEFAULT_N_TREES
from .lasso import LassoError, PenaltyGrid
from .simgen import ScenarioSpec, SimulationError, scenario as registered_scenario
from .tuning import DEFAULT_CV_N_TREES, DEFAULT_K_FOLDS, SearchMethod, TuningError, TuningGrid, default_grid


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentKind:
    SIMULATION :str = 'simulation'
    DATASET    :str = 'dataset'

    @classmethod
    def values(cls) -> List[str]:
        return [getattr(cls, attr) for attr in cls.__annotations__.keys()]


@dataclass(frozen=True)
class Method:
    LASSO :str = 'lasso'
    RF    :str = 'rf'
    RERF  :str = 'rerf'

    @classmethod
    def values(cls) -> List[str]:
        return [getattr(cls, attr) for attr in cls.__annotations__.keys()]


@dataclass(frozen=True)
class ConfigCommand:
    SHOW     :str = 'show'
    VALIDATE :str = 'validate'


DEFAULT_REPLICATES = 50
DEFAULT_OUTPUT_DIR = './runs'
DATASET_PRESETS = (None, 'concrete')


def _load_config_file(config_path: pathlib.Path) -> Dict[str, Any]:
    """Load a YAML or JSON file into a dictionary."""
    if config_path.suffix in {".yaml", ".yml"}:
        with open(config_path, 'r', encoding='utf-8') as f:
            return yaml.safe_load(f) or {}
    elif config_path.suffix == ".json":
        with open(config_path, 'r', encoding='utf-8') as f:
            return json.load(f) or {}
    raise ConfigError(
        f"Unsupported file extension: {config_path.suffix}. "
        f"Supported extensions: .yaml, .yml, .json"
    )


def _counts(value: Any, name: str) -> Optional[Tuple[int, ...]]:
    if value is None:
        return None
    values = value if isinstance(value, (list, tuple)) else [value]
    try:
        return tuple(int(v) for v in values)
    except (TypeError, ValueError):
        raise ConfigError(f"'{name}' must be a list of integers, got {value!r}") from None


def _split_rules(raw: Any, seed: int) -> Tuple[SplitRule, ...]:
    if not raw:
        raise ConfigError("dataset.splits must list at least one split")
    named = concrete_split_rules(seed=seed)
    rules = []
    for i, entry in enumerate(raw if isinstance(raw, list) else [raw]):
        if isinstance(entry, str):
            if entry not in named:
                raise ConfigError(f"Unknown split label '{entry}'. Known labels: {list(named)}")
            rules.append(named[entry])
        elif isinstance(entry, Mapping):
            rule = SplitRule.from_dict(entry)
            rules.append(rule if rule.label else replace(rule, label=f"split{i}"))
        else:
            raise ConfigError(f"Split {i} must be a label or a mapping, got {entry!r}")
    labels = [rule.label for rule in rules]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"Split labels must be unique, got {labels}")
    return tuple(rules)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything one benchmark run needs.

    A simulation experiment draws a fresh dataset per replicate from
    `scenario`; a dataset experiment loads `csv` once and applies every rule
    of `splits` in every replicate.
    """
    name: str
    kind: str
    methods: Tuple[str, ...]
    scenario: Optional[ScenarioSpec] = None
    csv: Optional[str] = None
    preset: Optional[str] = None
    response_column: Optional[str] = None
    exclude_columns: Tuple[str, ...] = ()
    expansion: FeatureExpansionSpec = field(default_factory=FeatureExpansionSpec)
    splits: Tuple[SplitRule, ...] = ()
    replicates: int = DEFAULT_REPLICATES
    k_folds: int = DEFAULT_K_FOLDS
    seed: int = 0
    output_dir: str = DEFAULT_OUTPUT_DIR
    search: str = SearchMethod.EXHAUSTIVE
    n_trees: int = DEFAULT_N_TREES
    cv_n_trees: int = DEFAULT_CV_N_TREES
    lambdas: Optional[Tuple[float, ...]] = None
    mtry: Optional[Tuple[int, ...]] = None
    nodesize: Optional[Tuple[int, ...]] = None
    forest_on_expanded: bool = False
    pointwise_column: Optional[str] = None
    n_jobs: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ExperimentKind.values():
            raise ConfigError(f"Invalid kind '{self.kind}'. Must be one of: {ExperimentKind.values()}")
        if not self.methods:
            raise ConfigError("At least one method is required")
        unknown = [m for m in self.methods if m not in Method.values()]
        if unknown:
            raise ConfigError(f"Unknown methods {unknown}. Must be among: {Method.values()}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError(f"Duplicate methods: {list(self.methods)}")
        if self.replicates < 1:
            raise ConfigError(f"replicates must be >= 1, got {self.replicates}")
        if self.k_folds < 2:
            raise ConfigError(f"k_folds must be >= 2, got {self.k_folds}")
        if self.n_trees < 1 or self.cv_n_trees < 1:
            raise ConfigError("n_trees and cv_n_trees must be >= 1")
        if self.search not in SearchMethod.values():
            raise ConfigError(f"Invalid search '{self.search}'. Must be one of: {SearchMethod.values()}")

        match self.kind:
            case ExperimentKind.SIMULATION:
                if self.scenario is None:
                    raise ConfigError("A simulation experiment needs a scenario")
            case ExperimentKind.DATASET:
                if not self.csv or not self.response_column:
                    raise ConfigError("A dataset experiment needs dataset.csv and dataset.response_column")
                if not self.splits:
                    raise ConfigError("A dataset experiment needs at least one split")
                if self.preset not in DATASET_PRESETS:
                    raise ConfigError(f"Invalid preset '{self.preset}'. Must be one of: {DATASET_PRESETS}")
                if self.preset == 'concrete' and CONCRETE_RATIO in self.expansion.generated_names():
                    raise ConfigError(f"The concrete preset already adds {CONCRETE_RATIO} as a dataset column; "
                                      f"remove it from dataset.expansion")

        if self.lambdas is not None:
            try:
                PenaltyGrid(self.lambdas)
            except LassoError as e:
                raise ConfigError(f"Invalid lambdas: {e}") from e

    @property
    def labels(self) -> List[str]:
        """Scenario labels of the run, one per split or the single scenario."""
        if self.kind == ExperimentKind.SIMULATION:
            return [self.scenario.label]
        return [rule.label for rule in self.splits]

    def grid(self, p: int) -> TuningGrid:
        """Default grid for p columns with the configured overrides applied."""
        base = default_grid(p)
        try:
            return TuningGrid(
                lambdas=PenaltyGrid(self.lambdas) if self.lambdas is not None else base.lambdas,
                mtry_candidates=self.mtry or base.mtry_candidates,
                nodesize_candidates=self.nodesize or base.nodesize_candidates,
                default_mtry=base.default_mtry,
                default_nodesize=base.default_nodesize,
            )
        except (TuningError, LassoError) as e:
            raise ConfigError(f"Invalid tuning grid: {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        """Canonical echo of the config, as written to the run manifest."""
        source: Dict[str, Any] = {
            'name': self.name,
            'kind': self.kind,
            'methods': list(self.methods),
            'replicates': self.replicates,
            'k_folds': self.k_folds,
            'seed': self.seed,
            'output_dir': self.output_dir,
            'search': self.search,
            'n_trees': self.n_trees,
            'cv_n_trees': self.cv_n_trees,
            'lambdas': None if self.lambdas is None else list(self.lambdas),
            'mtry': None if self.mtry is None else list(self.mtry),
            'nodesize': None if self.nodesize is None else list(self.nodesize),
            'forest_on_expanded': self.forest_on_expanded,
            'pointwise_column': self.pointwise_column,
        }
        if self.kind == ExperimentKind.SIMULATION:
            source['scenario'] = {
                **{k: v for k, v in self.scenario.to_dict().items() if k != 'seed'},
                'expansion': self.expansion.to_dict(),
            }
        else:
            source['dataset'] = {
                'csv': self.csv,
                'preset': self.preset,
                'response_column': self.response_column,
                'exclude_columns': list(self.exclude_columns),
                'expansion': self.expansion.to_dict(),
                'splits': [rule.to_dict() for rule in self.splits],
            }
        return source

    @classmethod
    def from_dict(cls, source: Union[Mapping[str, Any], ConfigMorpher]) -> "ExperimentConfig":
        config = source if isinstance(source, ConfigMorpher) else ConfigMorpher(dict(source))
        try:
            return cls._from_morpher(config)
        except (DatasetError, SimulationError, TuningError, LassoError) as e:
            raise ConfigError(str(e)) from e
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Malformed config: {e}") from e

    @classmethod
    def _from_morpher(cls, config: ConfigMorpher) -> "ExperimentConfig":
        kind = config.fetch('kind', ExperimentKind.SIMULATION)
        seed = int(config.fetch('seed', 0))
        common: Dict[str, Any] = dict(
            name=str(config.fetch('name', 'experiment')),
            kind=kind,
            methods=tuple(config.fetch('methods', Method.values())),
            replicates=int(config.fetch('replicates', DEFAULT_REPLICATES)),
            k_folds=int(config.fetch('k_folds', DEFAULT_K_FOLDS)),
            seed=seed,
            output_dir=str(config.fetch('output_dir', DEFAULT_OUTPUT_DIR)),
            search=config.fetch('search', SearchMethod.EXHAUSTIVE),
            n_trees=int(config.fetch('n_trees', DEFAULT_N_TREES)),
            cv_n_trees=int(config.fetch('cv_n_trees', DEFAULT_CV_N_TREES)),
            mtry=_counts(config.fetch('mtry', None), 'mtry'),
            nodesize=_counts(config.fetch('nodesize', None), 'nodesize'),
            forest_on_expanded=bool(config.fetch('forest_on_expanded', False)),
            pointwise_column=config.fetch('pointwise_column', None),
            n_jobs=int(config.fetch('n_jobs', 1) or 1),
        )
        lambdas = config.fetch('lambdas', None)
        if lambdas is not None:
            common['lambdas'] = tuple(float(v) for v in lambdas)

        match kind:
            case ExperimentKind.SIMULATION:
                label = config.fetch('scenario.label', None)
                overrides = {
                    key: config.fetch(f'scenario.{key}')
                    for key in ('model', 'sampling', 'n_train', 'n_validation', 'noise_sd')
                    if config.fetch(f'scenario.{key}', None) is not None
                }
                if label is not None:
                    spec = registered_scenario(label, **overrides)
                elif 'model' in overrides:
                    spec = ScenarioSpec(**overrides)
                else:
                    raise ConfigError("scenario needs a 'label' or a 'model'")
                return cls(
                    scenario=spec,
                    expansion=FeatureExpansionSpec.from_dict(config.fetch('scenario.expansion', None)),
                    **common,
                )
            case ExperimentKind.DATASET:
                return cls(
                    csv=config.fetch('dataset.csv', None),
                    preset=config.fetch('dataset.preset', None),
                    response_column=config.fetch('dataset.response_column', None),
                    exclude_columns=tuple(config.fetch('dataset.exclude_columns', None) or ()),
                    expansion=FeatureExpansionSpec.from_dict(config.fetch('dataset.expansion', None)),
                    splits=_split_rules(config.fetch('dataset.splits', None), seed),
                    **common,
                )
            case _:
                raise ConfigError(f"Invalid kind '{kind}'. Must be one of: {ExperimentKind.values()}")

    @classmethod
    def from_file(cls, path: Union[str, pathlib.Path]) -> "ExperimentConfig":
        path = pathlib.Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        data = _load_config_file(path)
        if not isinstance(data, dict):
            raise ConfigError("Invalid config: Root must be a dictionary")
        return cls.from_dict(data)


class ConfigMain:
    """`bench config` subcommands."""

    @staticmethod
    def show(config_path: Union[str, pathlib.Path]) -> int:
        """Print the config file and the fully resolved experiment it describes."""
        config_path = pathlib.Path(config_path).resolve()
        if not config_path.exists():
            print(f"❌ Config file not found: {config_path}")
            return 1

        try:
            experiment = ExperimentConfig.from_file(config_path)
        except (ConfigError, yaml.YAMLError, json.JSONDecodeError) as e:
            print(f"❌ Invalid config: {e}")
            return 1

        print(f"Configuration file: {config_path}")
        print("-" * 50)
        print(yaml.safe_dump(experiment.to_dict(), sort_keys=False, allow_unicode=True))
        return 0

    @staticmethod
    def validate(config_path: Union[str, pathlib.Path]) -> int:
        """Validate an experiment config (YAML or JSON)."""
        config_path = pathlib.Path(config_path).resolve()
        if not config_path.exists():
            print(f"Config file not found: {config_path}")
            return 1

        try:
            experiment = ExperimentConfig.from_file(config_path)
        except ConfigError as e:
            print(f"❌ {e}")
            return 1
        except yaml.YAMLError as e:
            print(f"❌ Invalid YAML syntax: {e}")
            return 1
        except json.JSONDecodeError as e:
            print(f"❌ Invalid JSON syntax: {e}")
            return 1

        print(f"✅ Configuration is valid: {config_path}")
        print(f"   {experiment.kind} experiment '{experiment.name}': "
              f"{len(experiment.labels)} scenario(s), {experiment.replicates} replicate(s), "
              f"methods {list(experiment.methods)}")
        return 0
