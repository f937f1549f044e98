import json
import math

import numpy as np

from src.experiments.config import ExperimentConfig
from src.experiments.report import COLUMNS, ResultRow, build_csv, build_json, summary_table, write_results


def make_cfg(**overrides) -> ExperimentConfig:
    raw = {"experiment": "ols", "seed": 5, "trials": 10, "m_grid": [16],
           "sketches": [{"family": "uniform"}], **overrides}
    return ExperimentConfig.from_dict(raw)


def make_row(**overrides) -> ResultRow:
    values = dict(experiment="ols", family="uniform", debiased=True, m=16, m_r=None, bias=0.25, variance=1.5,
                  bias_rel=0.1, variance_rel=0.6, bias_stderr=math.nan, variance_stderr=0.01, accepted=9,
                  rejected=1, predicted=0.2, wall_time_ms=0.0, seed=5)
    values.update(overrides)
    return ResultRow(**values)


def test_csv_layout():
    lines = build_csv(make_cfg(), [make_row()], {"generator": "gaussian"}).splitlines()
    assert lines[0].startswith("# config: {")
    assert json.loads(lines[0][len("# config: "):])["seed"] == 5
    assert lines[1] == '# provenance: {"generator": "gaussian"}'
    assert lines[2] == ",".join(COLUMNS)
    cells = dict(zip(COLUMNS, lines[3].split(",")))
    assert cells["debiased"] == "true"
    assert cells["m_r"] == ""
    assert cells["bias"] == "0.25"
    assert cells["bias_stderr"] == "nan"
    assert cells["normalized"] == "nan"


def test_csv_without_provenance_has_no_provenance_line():
    lines = build_csv(make_cfg(), []).splitlines()
    assert len(lines) == 2
    assert lines[1] == ",".join(COLUMNS)


def test_json_nulls_and_numpy_scalars():
    row = make_row(bias=np.float64(0.5), extras={"col_ids": (1, 3), "floor": np.float64(math.inf)})
    document = json.loads(build_json(make_cfg(), [row]))
    assert document["provenance"] == {}
    assert document["rows"][0]["bias"] == 0.5
    assert document["rows"][0]["bias_stderr"] is None
    assert document["rows"][0]["extras"] == {"col_ids": [1, 3], "floor": None}


def test_write_results_creates_parents(tmp_path):
    cfg = make_cfg(output={"path": str(tmp_path / "nested" / "out.json"), "format": "json"})
    path = write_results(cfg, [make_row()])
    assert path.exists()
    assert json.loads(path.read_text())["config"]["output"]["format"] == "json"


def test_summary_table_shows_each_row():
    rows = [make_row(), make_row(debiased=False, m=32, m_r=8, predicted=math.nan)]
    text = "".join(summary_table(rows))
    assert "ols results" in text
    assert "9/1" in text
    assert "32/8" in text
    assert "-" in text


def test_row_label():
    assert make_row().label == "ols[uniform debiased, m=16]"
    assert make_row(experiment="cur", debiased=False, m_r=4).label == "cur[uniform, m_c=16, m_r=4]"
