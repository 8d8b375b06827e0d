from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from rich.console import Console
from rich.table import Table

from .simgen import ScenarioSpec


@dataclass(frozen=True)
class ReportStyle:
    SIMPLE :str = 'simple'
    RICH   :str = 'rich'

    @classmethod
    def get_values(cls) -> List[str]:
        """Get all available report style values"""
        instance = cls()
        return [value for value in instance.__dict__.values()]


def _format(value: Any) -> str:
    if value is None or (isinstance(value, float) and pd.isna(value)):
        return '-'
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


class BaseReporter(ABC):
    """Renders benchmark summaries and scenario listings."""

    @abstractmethod
    def table(self, title: str, rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> None:
        pass

    def report_summary(self, summary: pd.DataFrame, title: str = 'Validation RMSE') -> None:
        self.table(title, summary.to_dict('records'), list(summary.columns))

    def report_scenarios(self, scenarios: Dict[str, ScenarioSpec]) -> None:
        rows = [
            {'label': label, 'model': spec.model, 'sampling': '-' if spec.model == 'INTRO' else spec.sampling,
             'n_train': spec.n_train, 'n_validation': spec.n_validation, 'noise_sd': spec.noise_sd}
            for label, spec in scenarios.items()
        ]
        self.table('Scenarios', rows, ['label', 'model', 'sampling', 'n_train', 'n_validation', 'noise_sd'])


class SimpleReporter(BaseReporter):
    """Plain text, one line per row."""

    def table(self, title: str, rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> None:
        print(title)
        widths = {
            c: max([len(c)] + [len(_format(row.get(c))) for row in rows])
            for c in columns
        }
        print('  '.join(c.ljust(widths[c]) for c in columns))
        for row in rows:
            print('  '.join(_format(row.get(c)).ljust(widths[c]) for c in columns))


class RichReporter(BaseReporter):
    """rich tables on the console."""

    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console()

    def table(self, title: str, rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> None:
        table = Table(title=title)
        for column in columns:
            numeric = rows and isinstance(rows[0].get(column), (int, float))
            table.add_column(column, justify='right' if numeric else 'left')
        for row in rows:
            table.add_row(*(_format(row.get(c)) for c in columns))
        self.console.print(table)


def get_reporter(style: str = ReportStyle.RICH) -> BaseReporter:
    match style.lower():
        case ReportStyle.SIMPLE:
            return SimpleReporter()
        case ReportStyle.RICH:
            return RichReporter()
        case _:
            raise ValueError(f"Invalid report style '{style}'. Must be one of: {ReportStyle.get_values()}")
