import datetime
import json
import logging
import pathlib
import platform
import shutil
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Type, Union

import pandas as pd


class CheckpointError(Exception):
    pass


MANIFEST_FILENAME = 'manifest.json'
RESULTS_FILENAME = 'results.csv'
TIMINGS_FILENAME = 'timings.csv'
FAILURES_FILENAME = 'failures.json'
LOGS_DIRNAME = 'logs'

FLOAT_FORMAT = '%.17g'


def _dump_json(path: pathlib.Path, context: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(context, f, indent=4, ensure_ascii=False)
    except Exception as e:
        raise CheckpointError(f"Failed to write {path}: {e}")


@dataclass
class CheckpointDict:
    path: pathlib.Path
    context: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.path = pathlib.Path(self.path)
        self.dump()

    def punch(self, context: Dict[str, Any]) -> None:
        self.context.update(context)
        self.dump()

    def dump(self) -> None:
        _dump_json(self.path, self.context)


@dataclass
class CheckpointList:
    path: pathlib.Path
    context: List[Any] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.path = pathlib.Path(self.path)
        self.dump()

    def punch(self, context: Any) -> None:
        self.context.append(context)
        self.dump()

    def dump(self) -> None:
        _dump_json(self.path, self.context)


@dataclass
class CheckpointTable:
    """CSV file that grows one batch of rows at a time."""
    path: pathlib.Path
    columns: Sequence[str]

    def __post_init__(self) -> None:
        self.path = pathlib.Path(self.path)
        self.columns = list(self.columns)

    def read(self) -> pd.DataFrame:
        if not self.path.exists() or self.path.stat().st_size == 0:
            return pd.DataFrame(columns=self.columns)
        try:
            frame = pd.read_csv(self.path, dtype=str)
        except Exception as e:
            raise CheckpointError(f"Failed to read {self.path}: {e}")
        missing = [c for c in self.columns if c not in frame.columns]
        if missing:
            raise CheckpointError(f"{self.path} lacks columns {missing}")
        return frame[self.columns]

    def punch(self, rows: Sequence[Dict[str, Any]]) -> None:
        if not rows:
            return
        write_header = not self.path.exists() or self.path.stat().st_size == 0
        self._write(rows, mode='a', header=write_header)

    def rewrite(self, rows: Sequence[Dict[str, Any]]) -> None:
        self._write(rows, mode='w', header=True)

    def _write(self, rows: Sequence[Dict[str, Any]], mode: str, header: bool) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(list(rows), columns=self.columns)
        try:
            frame.to_csv(self.path, mode=mode, header=header, index=False, float_format=FLOAT_FORMAT)
        except Exception as e:
            mode_name = 'append to' if mode == 'a' else 'write'
            raise CheckpointError(f"Failed to {mode_name} {self.path}: {e}")


def platform_info() -> Dict[str, Any]:
    return {
        'create_datetime': datetime.datetime.now().strftime("%Y-%m-%d %H:%M:%S"),
        'python_version': platform.python_version(),
        **platform.uname()._asdict(),
    }


class RunCheckpoint:
    """
    Run directory of one benchmark experiment:

        manifest.json   config echo, experiment id, seeds, versions, platform
        results.csv     one row per (scenario, method, replicate)
        timings.csv     wall time of the same rows
        failures.json   units that raised during the latest attempt
        logs/           logging.log

    With `resume=True` an existing directory is reused and its results are
    kept; otherwise it is wiped first, which is refused for a non-empty
    directory without a manifest.
    """

    def __init__(
        self,
        root: Union[str, pathlib.Path],
        result_columns: Sequence[str],
        timing_columns: Sequence[str],
        resume: bool = True,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        self.logger = logger
        self.resume = resume
        self.init_checkpoint(root, force_reinit_if_existence=not resume)

        previous = self._read_manifest() if resume else {}
        self.manifest = CheckpointDict(self.root / MANIFEST_FILENAME, previous)
        self.results = CheckpointTable(self.root / RESULTS_FILENAME, result_columns)
        self.timings = CheckpointTable(self.root / TIMINGS_FILENAME, timing_columns)
        self.failures = CheckpointList(self.root / FAILURES_FILENAME)

    @property
    def logs_dir(self) -> pathlib.Path:
        return self.root / LOGS_DIRNAME

    def init_checkpoint(self, root: Union[str, pathlib.Path], force_reinit_if_existence: bool) -> None:
        self.root = pathlib.Path(root)

        if force_reinit_if_existence and self.root.exists():
            if any(self.root.iterdir()) and not (self.root / MANIFEST_FILENAME).exists():
                raise CheckpointError(
                    f"Refusing to remove {self.root}: not a run directory (no {MANIFEST_FILENAME})"
                )
            if self.logger:
                self.logger.info(f"Remove existing directory: {self.root}")
            try:
                shutil.rmtree(self.root)
            except OSError as e:
                raise CheckpointError(f"Error removing directory {self.root}: {e}")

        if self.logger:
            self.logger.info(f"Run directory: {self.root}")
        self.root.mkdir(parents=True, exist_ok=True)
        self.logs_dir.mkdir(parents=True, exist_ok=True)

    def _read_manifest(self) -> Dict[str, Any]:
        path = self.root / MANIFEST_FILENAME
        if not path.exists():
            return {}
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise CheckpointError(f"Failed to read {path}: {e}")

    def bind(self, experiment_id: str, context: Dict[str, Any]) -> None:
        """
        Record the experiment in the manifest.

        Raises:
            CheckpointError: The directory already holds a different experiment
        """
        existing = self.manifest.context.get('experiment_id')
        if existing is not None and existing != experiment_id:
            raise CheckpointError(
                f"{self.root} holds experiment {existing}, not {experiment_id}; "
                f"use another output directory or disable resume"
            )
        self.manifest.punch({'experiment_id': experiment_id, **context, 'platform': platform_info()})

    def punch_records(self, results: Sequence[Dict[str, Any]], timings: Sequence[Dict[str, Any]]) -> None:
        self.results.punch(results)
        self.timings.punch(timings)

    def punch_failure(self, failure: Dict[str, Any]) -> None:
        self.failures.punch(failure)

    def __enter__(self) -> "RunCheckpoint":
        return self

    def __exit__(
        self,
        exc_type: Optional[Type[BaseException]],
        exc_val: Optional[BaseException],
        exc_tb: Any,
    ) -> None:
        if exc_type:
            self.manifest.punch({'aborted': f"{exc_type.__name__}: {exc_val}"})
