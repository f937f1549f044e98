"""Result rows, CSV/JSON result files and the terminal summary table."""

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from io import StringIO
from logging import getLogger
from pathlib import Path
from typing import Any, Optional, Union

from dappertable import DapperTable, Column, Columns, PaginationLength

from .config import ExperimentConfig, OutputFormat

logger = getLogger(__name__)

MAX_LEN = 2000


@dataclass
class ResultRow:
    """One (sketch, m) cell of an experiment sweep. Field order is the CSV column order."""

    experiment: str
    family: str
    debiased: bool
    m: int
    m_r: Optional[int]
    bias: float
    variance: float
    bias_rel: float
    variance_rel: float
    bias_stderr: float
    variance_stderr: float
    accepted: int
    rejected: int
    predicted: float
    wall_time_ms: float
    seed: int
    normalized: float = math.nan
    # JSON only.
    extras: dict[str, Any] = field(default_factory=dict)

    @property
    def label(self) -> str:
        size = f"m={self.m}" if self.m_r is None else f"m_c={self.m}, m_r={self.m_r}"
        return f"{self.experiment}[{self.family}{' debiased' if self.debiased else ''}, {size}]"


COLUMNS = [f.name for f in fields(ResultRow) if f.name != "extras"]


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _plain(value: Any) -> Any:
    """JSON-safe copy: NaN and infinities become null, numpy scalars become Python numbers."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def build_csv(cfg: ExperimentConfig, rows: list[ResultRow], provenance: Optional[dict[str, Any]] = None) -> str:
    output = StringIO()
    output.write(f"# config: {json.dumps(_plain(cfg.resolved()), sort_keys=True)}\n")
    if provenance:
        output.write(f"# provenance: {json.dumps(_plain(provenance), sort_keys=True)}\n")
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        values = asdict(row)
        writer.writerow([_cell(values[name]) for name in COLUMNS])
    return output.getvalue()


def build_json(cfg: ExperimentConfig, rows: list[ResultRow], provenance: Optional[dict[str, Any]] = None) -> str:
    document = {
        "config": cfg.resolved(),
        "provenance": provenance or {},
        "rows": [asdict(row) for row in rows],
    }
    return json.dumps(_plain(document), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_results(cfg: ExperimentConfig, rows: list[ResultRow], provenance: Optional[dict[str, Any]] = None,
                  path: Optional[Union[str, Path]] = None) -> Path:
    path = Path(path or cfg.output.path)
    if OutputFormat(cfg.output.format) == OutputFormat.JSON:
        content = build_json(cfg, rows, provenance)
    else:
        content = build_csv(cfg, rows, provenance)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content, encoding="utf-8")
    logger.info(f"Wrote {len(rows)} result rows to {path}")
    return path


def _short(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    return f"{value:.4g}"


def summary_table(rows: list[ResultRow]) -> list[str]:
    table = DapperTable(
        columns=Columns([
            Column("Family", 16),
            Column("Deb", 4),
            Column("m", 10),
            Column("Bias", 11),
            Column("Variance", 11),
            Column("Predicted", 11),
            Column("Acc/Rej", 12),
        ]),
        pagination_options=PaginationLength(MAX_LEN),
        enclosure_start="```",
        enclosure_end="```",
        prefix=f"## {rows[0].experiment if rows else 'experiment'} results\n",
    )
    for row in rows:
        table.add_row([
            row.family[:16],
            "yes" if row.debiased else "no",
            str(row.m) if row.m_r is None else f"{row.m}/{row.m_r}",
            _short(row.bias),
            _short(row.variance),
            _short(row.predicted),
            f"{row.accepted}/{row.rejected}",
        ])
    rendered = table.render()
    return rendered if isinstance(rendered, list) else [rendered]
