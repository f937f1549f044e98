"""Declarative experiment configuration, read from a TOML file."""

import math
import tomllib
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from logging import getLogger
from pathlib import Path
from typing import Any, Optional, Union

from ..errors import ConfigError
from ..metrics import ZetaPolicy, ZetaRule
from ..sketching import Family, SketchFamily

logger = getLogger(__name__)


class Experiment(str, Enum):
    OLS = "ols"
    CUR = "cur"
    PROJECTION = "projection"
    LOWERBOUND = "lowerbound"
    ORACLE_CHECK = "oracle-check"
    INVERSION_CHECK = "inversion-check"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


GENERATORS = ("gaussian", "coherent", "powerlaw", "lowerbound")
UNDEBIASABLE = (Family.SRHT, Family.GAUSSIAN, Family.SPARSE_SIGN)
SAMPLING_FAMILIES = (Family.UNIFORM, Family.ROWNORM, Family.LEV, Family.SHRINKAGE)


@dataclass
class DataSpec:
    source: str = "synthetic"
    generator: str = "gaussian"
    # None picks the generator default: 1024 rows, or 2p for the lowerbound instance.
    n: Optional[int] = None
    p: int = 8
    spike: int = 0
    exponent: float = 1.0
    noise_std: float = 1.0
    # Lower-bound instance size, p = 4k.
    k: int = 1
    path: str = ""
    has_header: bool = False
    response_column: Optional[Union[int, str]] = None
    standardize: Optional[str] = None
    quadratic: bool = False

    def rows(self) -> int:
        if self.n is not None:
            return self.n
        return 8 * self.k if self.generator == "lowerbound" else 1024


@dataclass
class SketchSpec:
    family: str
    debiased: bool = False
    lam: Optional[float] = None
    sparsity: Optional[int] = None

    def to_family(self, probabilities: Optional[tuple[float, ...]] = None) -> SketchFamily:
        return SketchFamily(Family(self.family), shrinkage=self.lam, sparsity=self.sparsity,
                            probabilities=probabilities)

    @property
    def is_debiased(self) -> bool:
        return self.debiased or self.family == Family.DSRHT.value


@dataclass
class ZetaSpec:
    enabled: bool = True
    eps: Union[float, str] = "auto"
    delta: float = 0.01

    def policy(self, basis: str = "X", rule: ZetaRule = ZetaRule.EMBEDDING) -> ZetaPolicy:
        if not self.enabled:
            return ZetaPolicy.disabled()
        eps = None if self.eps == "auto" else float(self.eps)
        return ZetaPolicy(enabled=True, eps=eps, basis=basis, delta=self.delta, rule=rule)


@dataclass
class OutputSpec:
    path: str = "results.csv"
    format: str = "csv"


@dataclass
class LowerBoundSpec:
    gamma_step: float = 0.01


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    trials: int = 10_000
    m_grid: list[int] = field(default_factory=list)
    m_c_grid: list[int] = field(default_factory=list)
    m_r_grid: list[int] = field(default_factory=list)
    c: int = 8
    r: int = 16
    record_timing: bool = False
    data: DataSpec = field(default_factory=DataSpec)
    sketches: list[SketchSpec] = field(default_factory=list)
    zeta: ZetaSpec = field(default_factory=ZetaSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    lowerbound: LowerBoundSpec = field(default_factory=LowerBoundSpec)

    @property
    def kind(self) -> Experiment:
        return Experiment(self.experiment)

    @property
    def cells(self) -> list[tuple[int, Optional[int]]]:
        """(m, m_r) per sweep point; m_r is None outside CUR experiments."""
        if self.experiment == Experiment.CUR.value:
            return list(zip(self.m_c_grid, self.m_r_grid))
        return [(m, None) for m in self.m_grid]

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "ExperimentConfig":
        raw = dict(raw)
        try:
            sketches = [_build(SketchSpec, _rename(s, {"lambda": "lam"}), "sketches") for s in raw.pop("sketches", [])]
            nested = {
                "data": _build(DataSpec, raw.pop("data", {}), "data"),
                "zeta": _build(ZetaSpec, raw.pop("zeta", {}), "zeta"),
                "output": _build(OutputSpec, raw.pop("output", {}), "output"),
                "lowerbound": _build(LowerBoundSpec, raw.pop("lowerbound", {}), "lowerbound"),
            }
            return _build(cls, {**raw, **nested, "sketches": sketches}, "top level")
        except TypeError as e:
            raise ConfigError(f"malformed experiment config: {e}") from e

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
        path = Path(path)
        try:
            with path.open("rb") as handle:
                raw = tomllib.load(handle)
        except (OSError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"cannot read experiment config {path}: {e}") from e
        cfg = cls.from_dict(raw)
        violations = cfg.validate()
        if violations:
            raise ConfigError(f"{path} has {len(violations)} violation(s)", violations)
        logger.debug(f"Loaded experiment config {path}")
        return cfg

    def validate(self) -> list[str]:
        violations: list[str] = []
        try:
            kind = Experiment(self.experiment)
        except ValueError:
            return [f"unknown experiment {self.experiment!r}; expected one of {[e.value for e in Experiment]}"]

        if self.trials < 1:
            violations.append(f"trials must be >= 1, got {self.trials}")
        if kind == Experiment.CUR:
            violations += _check_grid("m_c_grid", self.m_c_grid)
            violations += _check_grid("m_r_grid", self.m_r_grid)
            if len(self.m_c_grid) != len(self.m_r_grid):
                violations.append("m_c_grid and m_r_grid must have the same length")
            if self.c < 1 or self.r < 1:
                violations.append(f"c and r must be >= 1, got c={self.c}, r={self.r}")
        else:
            violations += _check_grid("m_grid", self.m_grid)

        if not self.sketches and kind != Experiment.LOWERBOUND:
            violations.append("sketches empty")
        for i, sketch in enumerate(self.sketches):
            violations += _check_sketch(i, sketch, kind)

        violations += _check_data(self.data, kind)

        if self.zeta.eps != "auto":
            if isinstance(self.zeta.eps, str) or not self.zeta.eps > 0:
                violations.append(f"zeta eps must be \"auto\" or a positive number, got {self.zeta.eps!r}")
        if not 0.0 < self.zeta.delta < 1.0:
            violations.append(f"zeta delta must lie in (0, 1), got {self.zeta.delta}")
        if self.output.format not in [f.value for f in OutputFormat]:
            violations.append(f"output format must be csv or json, got {self.output.format!r}")
        if not 0.0 < self.lowerbound.gamma_step <= 0.01:
            violations.append(f"lowerbound gamma_step must lie in (0, 0.01], got {self.lowerbound.gamma_step}")
        return violations

    def resolved(self) -> dict[str, Any]:
        """Plain-data echo of the full configuration, written into every result file."""
        return asdict(self)


def _rename(raw: dict[str, Any], names: dict[str, str]) -> dict[str, Any]:
    return {names.get(key, key): value for key, value in raw.items()}


def _build(cls, raw: dict[str, Any], where: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {unknown}", [f"unknown key {k!r} in {where}" for k in unknown])
    return cls(**raw)


def _check_grid(name: str, grid: list[int]) -> list[str]:
    if not grid:
        return [f"{name} empty"]
    problems = []
    if any(not isinstance(m, int) or m < 1 for m in grid):
        problems.append(f"{name} entries must be positive integers, got {grid}")
    elif any(b <= a for a, b in zip(grid, grid[1:])):
        problems.append(f"{name} must be strictly increasing, got {grid}")
    return problems


def _check_sketch(i: int, sketch: SketchSpec, kind: Experiment) -> list[str]:
    where = f"sketches[{i}]"
    try:
        family = Family(sketch.family)
    except ValueError:
        return [f"{where}: unknown family {sketch.family!r}; expected one of {[f.value for f in Family]}"]
    problems = []
    if family == Family.SHRINKAGE and (sketch.lam is None or not 0.0 <= sketch.lam <= 1.0):
        problems.append(f"{where}: shrinkage needs lambda in [0, 1], got {sketch.lam}")
    if family == Family.SPARSE_SIGN and (sketch.sparsity is None or sketch.sparsity < 1):
        problems.append(f"{where}: sparse_sign needs sparsity >= 1, got {sketch.sparsity}")
    if kind == Experiment.LOWERBOUND and family != Family.CUSTOM:
        problems.append(f"{where}: lowerbound experiments sample with the instance plan; use family \"custom\"")
    elif kind != Experiment.LOWERBOUND and family == Family.CUSTOM:
        problems.append(f"{where}: custom plans are only available to the lowerbound experiment")
    if sketch.debiased and family == Family.SRHT:
        problems.append(f"{where}: debiased srht is not supported; SRHT already flattens leverage scores and "
                        f"needs no matrix debiasing. Use family \"dsrht\" to debias the uniform sampling stage "
                        f"after the Hadamard transform")
    elif sketch.debiased and family in UNDEBIASABLE:
        problems.append(f"{where}: {family.value} sketches have no debiased variant")
    if kind == Experiment.ORACLE_CHECK and family not in SAMPLING_FAMILIES:
        problems.append(f"{where}: oracle-check supports row-sampling families only")
    if kind == Experiment.INVERSION_CHECK and family not in SAMPLING_FAMILIES + (Family.GAUSSIAN,):
        problems.append(f"{where}: inversion-check supports row-sampling families and gaussian only")
    return problems


def _check_data(data: DataSpec, kind: Experiment) -> list[str]:
    problems = []
    if data.source not in ("synthetic", "csv"):
        problems.append(f"data source must be synthetic or csv, got {data.source!r}")
    elif data.source == "csv":
        if not data.path:
            problems.append("data path is required for csv sources")
        if kind == Experiment.LOWERBOUND:
            problems.append("lowerbound experiments run on the synthetic lowerbound instance only")
        elif kind in (Experiment.OLS, Experiment.ORACLE_CHECK) and data.response_column is None:
            problems.append(f"{kind.value} experiments on csv data need a response_column")
    elif data.generator not in GENERATORS:
        problems.append(f"data generator must be one of {list(GENERATORS)}, got {data.generator!r}")
    elif data.generator == "lowerbound" or kind == Experiment.LOWERBOUND:
        if data.k < 1:
            problems.append(f"lowerbound instance needs k >= 1, got {data.k}")
        elif data.n is not None and data.n < 8 * data.k:
            problems.append(f"lowerbound instance needs n >= {8 * data.k} for k={data.k}, got {data.n}")
    elif not 1 <= data.p <= data.rows():
        problems.append(f"synthetic data needs n >= p >= 1, got n={data.rows()}, p={data.p}")
    if data.standardize not in (None, "columns", "response", "both"):
        problems.append(f"data standardize must be columns, response or both, got {data.standardize!r}")
    if isinstance(data.noise_std, (int, float)) and (data.noise_std < 0 or math.isnan(data.noise_std)):
        problems.append(f"noise_std must be >= 0, got {data.noise_std}")
    return problems
