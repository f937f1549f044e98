"""Turn an ExperimentConfig into result rows, one per (sketch, m) cell."""

import math
import time
from logging import getLogger
from typing import Callable, Optional

import numpy as np

from ..adversarial import coverage_zeta, default_gamma_grid, lower_bound_instance, scalar_debias_floor
from ..dataio import (Dataset, load_matrix_csv, quadratic_features, standardize, synth_coherent, synth_gaussian,
                      synth_powerlaw_rows)
from ..errors import ConfigError, DebiasUndefined, SketchingError, Undefined
from ..estimators import select_columns_rows
from ..inversion import mean_inverse_gram, predicted_inverse_gram
from ..matcore import pseudoinverse, thin_factorize
from ..metrics import (DEFAULT_BOOTSTRAP, EstimatorKind, EstimatorSpec, TrialStats, ZetaPolicy, ZetaRule,
                       delta_cur, delta_X, gaussian_variance_prediction, min_row_norm_ratio,
                       monte_carlo_bias_variance, projection_moments, residual_vector)
from ..oracle import enumerate_expectation_beta
from ..sketching import Family, SketchFamily, check_debias_feasible
from ..telemetry import Metrics
from ..trials import auxiliary_rng
from .config import Experiment, ExperimentConfig, SketchSpec
from .report import ResultRow

logger = getLogger(__name__)

# Auxiliary stream keys; key 0 is the bootstrap stream.
DATA_KEY = 1
SELECT_KEY = 2


class ExperimentRunner:
    """Runs every cell of one experiment config in config order.

    All cells share the config's base seed, so classical and debiased cells
    at the same m see the same sketch draws.
    """

    def __init__(self, cfg: ExperimentConfig, threads: int = 1, bootstrap: int = DEFAULT_BOOTSTRAP,
                 metrics: Optional[Metrics] = None):
        self.cfg = cfg
        self.threads = threads
        self.bootstrap = bootstrap
        self.metrics = metrics
        self._dataset: Optional[Dataset] = None
        self._instance = None
        self._selection = None

    @property
    def dataset(self) -> Dataset:
        if self._dataset is None:
            self._dataset = self._load_dataset()
        return self._dataset

    def _load_dataset(self) -> Dataset:
        data = self.cfg.data
        if self.cfg.kind == Experiment.LOWERBOUND or (data.source == "synthetic" and data.generator == "lowerbound"):
            self._instance = lower_bound_instance(data.k, data.n)
            ds = Dataset(X=self._instance.X, y=self._instance.y, name="lowerbound",
                         provenance={"generator": "lowerbound", "k": data.k, "n": self._instance.n})
            return ds

        if data.source == "csv":
            ds = load_matrix_csv(data.path, has_header=data.has_header, response_column=data.response_column)
        else:
            rng = auxiliary_rng(self.cfg.seed, DATA_KEY)
            n = data.rows()
            if data.generator == "coherent":
                ds = synth_coherent(n, data.p, data.spike, rng, noise_std=data.noise_std)
            elif data.generator == "powerlaw":
                ds = synth_powerlaw_rows(n, data.p, data.exponent, rng, noise_std=data.noise_std)
            else:
                ds = synth_gaussian(n, data.p, rng, noise_std=data.noise_std)
        if data.quadratic:
            ds = quadratic_features(ds)
        if data.standardize:
            ds = standardize(ds, data.standardize)
        logger.info(f"Dataset {ds.name}: {ds.X.shape[0]}x{ds.X.shape[1]}")
        return ds

    def _sketches(self) -> list[SketchSpec]:
        if self.cfg.sketches:
            return self.cfg.sketches
        return [SketchSpec("custom"), SketchSpec("custom", debiased=True)]

    def _family(self, sketch: SketchSpec) -> SketchFamily:
        if Family(sketch.family) == Family.CUSTOM:
            _ = self.dataset
            return self._instance.sketch_family()
        return sketch.to_family()

    def run(self) -> list[ResultRow]:
        handlers: dict[Experiment, Callable[[SketchSpec, int, Optional[int]], ResultRow]] = {
            Experiment.OLS: self._ols_cell,
            Experiment.CUR: self._cur_cell,
            Experiment.PROJECTION: self._projection_cell,
            Experiment.LOWERBOUND: self._lowerbound_cell,
            Experiment.ORACLE_CHECK: self._oracle_cell,
            Experiment.INVERSION_CHECK: self._inversion_cell,
        }
        handler = handlers[self.cfg.kind]
        violations = self.feasibility_violations()
        if violations:
            raise ConfigError(f"{len(violations)} debiased cell(s) cannot be debiased", violations)
        rows = []
        for sketch in self._sketches():
            for m, m_r in self.cfg.cells:
                where = f"{self.cfg.experiment}[{sketch.family}{' debiased' if sketch.debiased else ''}, " \
                        f"m={m}{'' if m_r is None else f', m_r={m_r}'}]"
                start = time.perf_counter()
                try:
                    row = handler(sketch, m, m_r)
                except SketchingError as e:
                    logger.error(f"Cell {where} failed: {e}")
                    raise
                if self.cfg.record_timing:
                    row.wall_time_ms = (time.perf_counter() - start) * 1000.0
                logger.info(f"{row.label}: bias={row.bias:.4g} variance={row.variance:.4g} "
                            f"accepted={row.accepted} rejected={row.rejected}")
                self._record(row)
                rows.append(row)
        return rows

    def _record(self, row: ResultRow):
        if not self.metrics:
            return
        attributes = {"experiment": row.experiment, "family": row.family, "debiased": row.debiased, "m": row.m}
        if row.m_r is not None:
            attributes["m_r"] = row.m_r
        self.metrics.record(attributes, row.bias, row.variance, row.accepted, row.rejected)

    def _row(self, sketch: SketchSpec, family: SketchFamily, m: int, stats: TrialStats, predicted: float,
             m_r: Optional[int] = None, **kwargs) -> ResultRow:
        return ResultRow(
            experiment=self.cfg.experiment,
            family=family.label,
            debiased=sketch.is_debiased,
            m=m,
            m_r=m_r,
            bias=stats.bias,
            variance=stats.variance,
            bias_rel=stats.bias_rel,
            variance_rel=stats.variance_rel,
            bias_stderr=stats.bias_stderr,
            variance_stderr=stats.variance_stderr,
            accepted=stats.accepted,
            rejected=stats.rejected,
            predicted=predicted,
            wall_time_ms=0.0,
            seed=self.cfg.seed,
            **kwargs,
        )

    def _monte_carlo(self, spec: EstimatorSpec, zeta: ZetaPolicy) -> TrialStats:
        return monte_carlo_bias_variance(spec, self.cfg.trials, zeta, self.cfg.seed, threads=self.threads,
                                         bootstrap=self.bootstrap)

    def _ols_prediction(self, family: SketchFamily, X: np.ndarray, m: int, r: np.ndarray) -> float:
        plan = family.plan_for(X)
        if plan is not None:
            return delta_X(X, plan, m, r)
        if family.family == Family.GAUSSIAN:
            try:
                return gaussian_variance_prediction(thin_factorize(X).rank, m, float(np.sum(r * r)))
            except Undefined:
                return math.nan
        return math.nan

    @staticmethod
    def _ols_kind(sketch: SketchSpec) -> EstimatorKind:
        if Family(sketch.family) in (Family.SRHT, Family.DSRHT):
            return EstimatorKind.OLS_SRHT
        return EstimatorKind.OLS_DEBIASED if sketch.debiased else EstimatorKind.OLS_SUBSAMPLED

    def _ols_cell(self, sketch: SketchSpec, m: int, _m_r: Optional[int]) -> ResultRow:
        ds = self.dataset
        family = self._family(sketch)
        spec = EstimatorSpec(self._ols_kind(sketch), family, ds.X, m, y=ds.y)
        stats = self._monte_carlo(spec, self.cfg.zeta.policy("X"))
        r = residual_vector(ds.X, ds.y)
        r2 = float(np.sum(r * r))
        p = ds.X.shape[1]
        return self._row(sketch, family, m, stats, self._ols_prediction(family, ds.X, m, r),
                         normalized=stats.bias * m * m / (p * p * r2) if r2 > 0 else math.nan)

    def _cur_cell(self, sketch: SketchSpec, m_c: int, m_r: Optional[int]) -> ResultRow:
        X = self.dataset.X
        sel = self._selection
        family = self._family(sketch)
        kind = EstimatorKind.CUR_DEBIASED if sketch.is_debiased else EstimatorKind.CUR_FAST
        spec = EstimatorSpec(kind, family, X, m_c, C=sel.C, R=sel.R, m_r=m_r)
        stats = self._monte_carlo(spec, self.cfg.zeta.policy("CR"))
        plan_C, plan_R = family.plan_for(sel.C), family.plan_for(sel.R.T)
        predicted = math.nan
        if plan_C is not None:
            predicted = delta_cur(X, sel.C, sel.R, plan_C, plan_R, m_c, m_r).delta_cur
        x_norm2 = float(np.sum(X * X))
        return self._row(sketch, family, m_c, stats, predicted, m_r=m_r, extras={
            "bias_rel_x": stats.bias / x_norm2,
            "variance_rel_x": stats.variance / x_norm2,
            "col_ids": list(sel.col_ids),
            "row_ids": list(sel.row_ids),
        })

    def _projection_cell(self, sketch: SketchSpec, m: int, _m_r: Optional[int]) -> ResultRow:
        X = self.dataset.X
        family = self._family(sketch)
        moments = projection_moments(X, family, m, self.cfg.trials, self.cfg.zeta.policy("X"), self.cfg.seed,
                                     debiased=sketch.is_debiased, threads=self.threads)
        perp = moments.perp_F2
        return ResultRow(
            experiment=self.cfg.experiment,
            family=family.label,
            debiased=sketch.is_debiased,
            m=m,
            m_r=None,
            bias=moments.bias_F2,
            variance=moments.second_moment,
            bias_rel=moments.bias_F2 / perp if perp > 0 else math.nan,
            variance_rel=moments.second_moment / perp if perp > 0 else math.nan,
            bias_stderr=math.nan,
            variance_stderr=math.nan,
            accepted=moments.accepted,
            rejected=moments.rejected,
            predicted=moments.predicted_trace,
            wall_time_ms=0.0,
            seed=self.cfg.seed,
            extras={"noise_floor": moments.noise_floor, "perp_F2": perp},
        )

    def _lowerbound_zeta(self) -> ZetaPolicy:
        return coverage_zeta() if self.cfg.zeta.enabled else ZetaPolicy.disabled()

    def _lowerbound_cell(self, sketch: SketchSpec, m: int, _m_r: Optional[int]) -> ResultRow:
        _ = self.dataset
        inst = self._instance
        family = inst.sketch_family()
        predicted = delta_X(inst.X, inst.plan, m, inst.y - inst.X @ inst.beta_star)
        scale = m * m / (inst.p**2 * inst.residual_norm2)
        if sketch.debiased:
            spec = EstimatorSpec(EstimatorKind.OLS_DEBIASED, family, inst.X, m, y=inst.y)
            stats = self._monte_carlo(spec, self._lowerbound_zeta())
            return self._row(sketch, family, m, stats, predicted, normalized=stats.bias * scale)

        floor = scalar_debias_floor(inst, m, default_gamma_grid(self.cfg.lowerbound.gamma_step), self.cfg.trials,
                                    self._lowerbound_zeta(), self.cfg.seed, threads=self.threads)
        return self._row(sketch, family, m, floor.stats, predicted, normalized=floor.normalized, extras={
            "min_over_gamma_bias": floor.min_over_gamma_bias,
            "argmin_gamma": floor.argmin_gamma,
            "closed_form_gamma": floor.closed_form_gamma,
            "closed_form_bias": floor.closed_form_bias,
            "plain_normalized": floor.plain_bias * scale,
        })

    def _oracle_cell(self, sketch: SketchSpec, m: int, _m_r: Optional[int]) -> ResultRow:
        ds = self.dataset
        family = self._family(sketch)
        if self.cfg.zeta.enabled:
            logger.debug("oracle-check compares unconditional moments; conditioning event ignored")
        exact = enumerate_expectation_beta(ds.X, ds.y, family.plan_for(ds.X), m, debiased=sketch.debiased)
        kind = EstimatorKind.OLS_DEBIASED if sketch.debiased else EstimatorKind.OLS_SUBSAMPLED
        stats = self._monte_carlo(EstimatorSpec(kind, family, ds.X, m, y=ds.y), ZetaPolicy.disabled())
        gap = stats.bias - exact.exact_bias
        return self._row(sketch, family, m, stats, exact.exact_bias, extras={
            "exact_variance": exact.exact_variance,
            "bias_gap_stderrs": gap / stats.bias_stderr if stats.bias_stderr > 0 else math.nan,
        })

    def _inversion_cell(self, sketch: SketchSpec, m: int, _m_r: Optional[int]) -> ResultRow:
        X = self.dataset.X
        family = self._family(sketch)
        estimate = mean_inverse_gram(X, family, m, self.cfg.trials, self.cfg.seed, zeta=self.cfg.zeta.policy("X"),
                                     threads=self.threads)
        target = predicted_inverse_gram(X, family, m)
        naive = pseudoinverse(X.T @ X)
        to_target = float(np.linalg.norm(estimate.mean - target) / np.linalg.norm(target))
        to_naive = float(np.linalg.norm(estimate.mean - naive) / np.linalg.norm(naive))
        return ResultRow(
            experiment=self.cfg.experiment,
            family=family.label,
            debiased=False,
            m=m,
            m_r=None,
            bias=to_target,
            variance=to_naive,
            bias_rel=to_target,
            variance_rel=to_naive,
            bias_stderr=math.nan,
            variance_stderr=math.nan,
            accepted=estimate.accepted,
            rejected=estimate.rejected,
            predicted=0.0,
            wall_time_ms=0.0,
            seed=self.cfg.seed,
        )

    def _bases(self) -> dict[str, np.ndarray]:
        """Matrices each sketch acts on: X, or C and R^T once the CUR selection is drawn."""
        if self.cfg.kind != Experiment.CUR:
            return {"X": self.dataset.X}
        if self._selection is None:
            self._selection = select_columns_rows(self.dataset.X, self.cfg.c, self.cfg.r,
                                                  auxiliary_rng(self.cfg.seed, SELECT_KEY))
        return {"C": self._selection.C, "Rt": self._selection.R.T}

    def feasibility_violations(self) -> list[str]:
        """Debiased sampling cells whose weights are undefined at their sketch size."""
        if self.cfg.kind == Experiment.INVERSION_CHECK:
            return []
        violations = []
        bases = self._bases()
        for sketch in self._sketches():
            family = self._family(sketch)
            if not sketch.debiased or not family.is_sampling:
                continue
            for name, A in bases.items():
                plan = family.plan_for(A)
                for m, m_r in self.cfg.cells:
                    size = m_r if name == "Rt" and m_r is not None else m
                    try:
                        check_debias_feasible(plan, size)
                    except DebiasUndefined as e:
                        violations.append(f"{family.label} debiased {name} m={size}: {type(e).__name__}: {e}")
        return violations

    def provenance(self) -> dict:
        return dict(self.dataset.provenance)

    def diagnostics(self) -> list[str]:
        """Resolved per-cell settings, printed by `validate`."""
        ds = self.dataset
        X = ds.X
        lines = [f"dataset {ds.name}: {X.shape[0]}x{X.shape[1]}, min row-norm ratio {min_row_norm_ratio(X):.4g}"]
        bases = self._bases()
        zeta = self._lowerbound_zeta() if self.cfg.kind == Experiment.LOWERBOUND else self.cfg.zeta.policy("X")
        for sketch in self._sketches():
            family = self._family(sketch)
            for name, A in bases.items():
                plan = family.plan_for(A)
                rank = thin_factorize(A).rank
                theta_max = plan.theta_max if plan is not None else 1.0
                if plan is not None:
                    lines.append(f"{family.label} on {name}: theta_min={plan.theta_min:.4g} "
                                 f"theta_max={plan.theta_max:.4g}")
                for m, m_r in self.cfg.cells:
                    size = m if m_r is None or name != "Rt" else m_r
                    if not zeta.enabled:
                        eps = "off"
                    elif zeta.rule == ZetaRule.COVERAGE:
                        eps = "coverage"
                    else:
                        eps = f"{zeta.resolve_eps(rank, theta_max, size):.4g}"
                    lines.append(f"  {family.label}{' debiased' if sketch.is_debiased else ''} {name} m={size}: "
                                 f"zeta eps={eps}")
        return lines
