//! Decoherence-free Bell-pair and time accounting for one lattice-surgery
//! operation, and the fidelity above which raw pairs beat every distillation
//! protocol.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distillation::{evaluate_protocol, raw_pairs_per_output, ProtocolOutcome, ProtocolSpec};
use crate::error::{check_non_negative, check_positive, PlanError, Result};
use crate::error_model::{
    check_distance, min_distance, DistanceResult, FittedModelParams, NoisePoint, DEFAULT_D_MAX,
};

/// Label used for the no-distillation strategy in tables and reports.
pub const RAW: &str = "raw";

/// Duration of one distillation operation layer in units of `τ_SE`
/// (18 layers of STRINGENT take about 3.75 rounds).
pub const OP_TIME_IN_ROUNDS: f64 = 3.75 / 18.0;

/// Refinement tolerance of the crossover bisection.
pub const CROSSOVER_TOLERANCE: f64 = 1e-5;

/// Bell pairs per syndrome round, `a·d − c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundScheme {
    pub a: u32,
    pub c: u32,
}

impl Default for RoundScheme {
    fn default() -> Self {
        Self { a: 2, c: 1 }
    }
}

impl RoundScheme {
    pub fn pairs_per_round(&self, d: u32) -> Result<u32> {
        pairs_per_round(d, self.a, self.c)
    }
}

pub fn pairs_per_round(d: u32, a: u32, c: u32) -> Result<u32> {
    check_distance(d)?;
    let n = u64::from(a) * u64::from(d);
    if a == 0 || n <= u64::from(c) {
        return Err(PlanError::InvalidInput(format!(
            "a·d − c must be positive, got a = {a}, c = {c}, d = {d}"
        )));
    }
    u32::try_from(n - u64::from(c))
        .map_err(|_| PlanError::InvalidInput(format!("pairs per round overflow at d = {d}")))
}

/// Raw pairs per operation without distillation, `d·(2d − 1)`.
pub fn raw_cycle_cost(d_raw: u32) -> Result<f64> {
    Ok(f64::from(d_raw) * f64::from(pairs_per_round(d_raw, 2, 1)?))
}

/// Raw pairs per operation with distillation, `(n_pairs/p_succ)·d·(2d − 1)`
/// under full restart.
pub fn distilled_cycle_cost(
    protocol: &ProtocolSpec,
    outcome: &ProtocolOutcome,
    d_dist: u32,
) -> Result<f64> {
    Ok(raw_pairs_per_output(protocol, outcome)? * raw_cycle_cost(d_dist)?)
}

/// Wall-clock duration of one operation: `d·τ_SE` raw, `d·(τ_SE + τ_D)` distilled.
pub fn cycle_time(d: u32, tau_se: f64, tau_d: f64) -> Result<f64> {
    check_distance(d)?;
    check_positive("tau_se", tau_se)?;
    check_non_negative("tau_d", tau_d)?;
    Ok(f64::from(d) * (tau_se + tau_d))
}

/// Largest `d_dist/d_raw` at which distillation still saves time.
pub fn time_threshold_ratio(tau_d: f64, tau_se: f64) -> Result<f64> {
    check_positive("tau_se", tau_se)?;
    check_non_negative("tau_d", tau_d)?;
    Ok(1.0 / (1.0 + tau_d / tau_se))
}

/// Circuit depth `τ_D` of a protocol.
pub fn distillation_time(protocol: &ProtocolSpec, tau_se: f64) -> f64 {
    protocol.circuit_time(OP_TIME_IN_ROUNDS * tau_se)
}

/// Exact cost ratio and its `(n_pairs/p_succ)·ρ²` approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum CostComparison {
    Ratio {
        exact: f64,
        approx: f64,
        relative_gap: f64,
    },
    /// No feasible raw distance: distillation wins by default.
    RawInfeasible,
    DistilledInfeasible,
}

pub fn cost_ratio(
    protocol: &ProtocolSpec,
    outcome: &ProtocolOutcome,
    d_raw: DistanceResult,
    d_dist: DistanceResult,
) -> Result<CostComparison> {
    let Some(d_raw) = d_raw.distance() else {
        return Ok(CostComparison::RawInfeasible);
    };
    let Some(d_dist) = d_dist.distance() else {
        return Ok(CostComparison::DistilledInfeasible);
    };
    let exact = distilled_cycle_cost(protocol, outcome, d_dist)? / raw_cycle_cost(d_raw)?;
    let rho = f64::from(d_dist) / f64::from(d_raw);
    let approx = raw_pairs_per_output(protocol, outcome)? * rho * rho;
    Ok(CostComparison::Ratio {
        exact,
        approx,
        relative_gap: (approx - exact).abs() / exact,
    })
}

/// Everything fixed across a fidelity sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StaticContext {
    pub params: FittedModelParams,
    pub p_local: f64,
    pub d_max: u32,
    pub scheme: RoundScheme,
    pub tau_se: f64,
}

impl Default for StaticContext {
    fn default() -> Self {
        Self {
            params: FittedModelParams::default(),
            p_local: 1e-3,
            d_max: DEFAULT_D_MAX,
            scheme: RoundScheme::default(),
            tau_se: 1e-3,
        }
    }
}

/// Per-strategy cost figures at one fidelity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub strategy: String,
    pub distance: DistanceResult,
    /// Bell-pair error fed to the code (after distillation if any).
    pub p_bell: f64,
    pub p_succ: f64,
    pub pairs_per_round: Option<u32>,
    /// Raw pairs per distilled pair; 1 for raw.
    pub overhead_factor: f64,
    /// Infinite when the distance is infeasible.
    pub pairs_per_cycle: f64,
    /// Seconds; infinite when infeasible.
    pub cycle_time: f64,
}

impl CostBreakdown {
    fn build(
        strategy: &str,
        distance: DistanceResult,
        p_bell: f64,
        p_succ: f64,
        overhead_factor: f64,
        tau_d: f64,
        ctx: &StaticContext,
    ) -> Result<Self> {
        let (per_round, per_cycle, time) = match distance.distance() {
            Some(d) => {
                let n = ctx.scheme.pairs_per_round(d)?;
                (
                    Some(n),
                    overhead_factor * f64::from(d) * f64::from(n),
                    cycle_time(d, ctx.tau_se, tau_d)?,
                )
            }
            None => (None, f64::INFINITY, f64::INFINITY),
        };
        Ok(Self {
            strategy: strategy.to_string(),
            distance,
            p_bell,
            p_succ,
            pairs_per_round: per_round,
            overhead_factor,
            pairs_per_cycle: per_cycle,
            cycle_time: time,
        })
    }
}

/// Raw and distilled costs at one fidelity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEvaluation {
    pub fidelity: f64,
    pub raw: CostBreakdown,
    pub distilled: Vec<CostBreakdown>,
}

/// Which figure of merit a comparison uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    BellPairs,
    Time,
}

impl Metric {
    fn of(self, c: &CostBreakdown) -> f64 {
        match self {
            Metric::BellPairs => c.pairs_per_cycle,
            Metric::Time => c.cycle_time,
        }
    }
}

impl PointEvaluation {
    /// Cheapest distillation protocol under `metric`; earlier entries win ties.
    pub fn best_distilled(&self, metric: Metric) -> Option<&CostBreakdown> {
        self.distilled
            .iter()
            .fold(None, |best: Option<&CostBreakdown>, c| match best {
                Some(b) if metric.of(b) <= metric.of(c) => Some(b),
                _ => Some(c),
            })
    }

    /// Raw wins when feasible and no dearer than the best protocol.
    pub fn raw_optimal(&self, metric: Metric) -> bool {
        let raw = metric.of(&self.raw);
        raw.is_finite()
            && self
                .best_distilled(metric)
                .is_none_or(|b| raw <= metric.of(b))
    }

    fn tied(&self, metric: Metric) -> bool {
        let raw = metric.of(&self.raw);
        raw.is_finite()
            && self
                .best_distilled(metric)
                .is_some_and(|b| raw == metric.of(b))
    }
}

/// Costs of raw consumption and every protocol at fidelity `f0`.
pub fn evaluate_point(
    f0: f64,
    p_l_target: f64,
    protocols: &[ProtocolSpec],
    ctx: &StaticContext,
) -> Result<PointEvaluation> {
    let raw_noise = NoisePoint::from_fidelity(f0, ctx.p_local)?;
    let d_raw = min_distance(raw_noise, p_l_target, &ctx.params, ctx.d_max)?;
    let raw = CostBreakdown::build(RAW, d_raw, raw_noise.p_bell, 1.0, 1.0, 0.0, ctx)?;

    let distilled = protocols
        .iter()
        .map(|p| {
            let outcome = evaluate_protocol(p, raw_noise.p_bell, ctx.p_local)?;
            let noise = NoisePoint::new(outcome.p_eff, ctx.p_local)?;
            let d = min_distance(noise, p_l_target, &ctx.params, ctx.d_max)?;
            let overhead = raw_pairs_per_output(p, &outcome)?;
            CostBreakdown::build(
                &p.name,
                d,
                outcome.p_eff,
                outcome.p_succ,
                overhead,
                distillation_time(p, ctx.tau_se),
                ctx,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(PointEvaluation {
        fidelity: f0,
        raw,
        distilled,
    })
}

/// Uniform fidelity grid, both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelityGrid {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl Default for FidelityGrid {
    fn default() -> Self {
        Self {
            start: 0.90,
            end: 0.99,
            step: 1e-4,
        }
    }
}

impl FidelityGrid {
    /// `n` evenly spaced points over `[start, end]`.
    pub fn with_points(start: f64, end: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(PlanError::InvalidInput(
                "a grid needs at least two points".into(),
            ));
        }
        Ok(Self {
            start,
            end,
            step: (end - start) / (n - 1) as f64,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start > 0.0 && self.end <= 1.0 && self.start <= self.end) {
            return Err(PlanError::InvalidInput(format!(
                "fidelity grid must satisfy 0 < start <= end <= 1, got [{}, {}]",
                self.start, self.end
            )));
        }
        check_positive("grid step", self.step)?;
        Ok(())
    }

    pub fn points(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let n = ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..n)
            .map(|i| {
                let f = self.start + i as f64 * self.step;
                // Snap to 1e-12 so grids print cleanly.
                (f * 1e12).round() / 1e12
            })
            .collect())
    }
}

/// Evaluates every grid point in parallel; output is in grid order.
pub fn sweep(
    grid: &[f64],
    p_l_target: f64,
    protocols: &[ProtocolSpec],
    ctx: &StaticContext,
) -> Result<Vec<PointEvaluation>> {
    grid.par_iter()
        .map(|&f| evaluate_point(f, p_l_target, protocols, ctx))
        .collect()
}

/// Outcome of a crossover search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum CrossoverReport {
    /// Raw is optimal at every fidelity at or above `fidelity`.
    Crossover {
        fidelity: f64,
        /// Best protocol just below the crossover.
        last_overtaken: String,
    },
    RawDominatesThroughout,
    DistillationDominatesThroughout,
    /// Raw and the best protocol cost exactly the same everywhere.
    Tied,
}

impl CrossoverReport {
    pub fn fidelity(&self) -> Option<f64> {
        match self {
            CrossoverReport::Crossover { fidelity, .. } => Some(*fidelity),
            _ => None,
        }
    }
}

/// Smallest fidelity above which raw consumption is optimal at every grid point,
/// refined by bisection to [`CROSSOVER_TOLERANCE`].
pub fn crossover_fidelity(
    p_l_target: f64,
    protocols: &[ProtocolSpec],
    grid: &FidelityGrid,
    ctx: &StaticContext,
) -> Result<CrossoverReport> {
    crossover_by(Metric::BellPairs, p_l_target, protocols, grid, ctx)
}

/// As [`crossover_fidelity`] but comparing operation time.
pub fn time_crossover_fidelity(
    p_l_target: f64,
    protocols: &[ProtocolSpec],
    grid: &FidelityGrid,
    ctx: &StaticContext,
) -> Result<CrossoverReport> {
    crossover_by(Metric::Time, p_l_target, protocols, grid, ctx)
}

pub fn crossover_by(
    metric: Metric,
    p_l_target: f64,
    protocols: &[ProtocolSpec],
    grid: &FidelityGrid,
    ctx: &StaticContext,
) -> Result<CrossoverReport> {
    if protocols.is_empty() {
        return Err(PlanError::InvalidInput(
            "crossover needs at least one protocol".into(),
        ));
    }
    let points = grid.points()?;
    let evals = sweep(&points, p_l_target, protocols, ctx)?;
    crossover_from_sweep(metric, &evals, p_l_target, protocols, ctx)
}

/// Crossover search over an existing sweep (sorted by fidelity).
pub fn crossover_from_sweep(
    metric: Metric,
    evals: &[PointEvaluation],
    p_l_target: f64,
    protocols: &[ProtocolSpec],
    ctx: &StaticContext,
) -> Result<CrossoverReport> {
    if evals.is_empty() {
        return Err(PlanError::InvalidInput("empty fidelity grid".into()));
    }
    if evals.iter().all(|e| e.tied(metric)) {
        return Ok(CrossoverReport::Tied);
    }
    let first_raw = evals
        .iter()
        .rposition(|e| !e.raw_optimal(metric))
        .map_or(0, |i| i + 1);
    if first_raw == 0 {
        return Ok(CrossoverReport::RawDominatesThroughout);
    }
    if first_raw == evals.len() {
        return Ok(CrossoverReport::DistillationDominatesThroughout);
    }

    let below = &evals[first_raw - 1];
    let mut lo = below.fidelity;
    let mut hi = evals[first_raw].fidelity;
    let mut last = below
        .best_distilled(metric)
        .map(|b| b.strategy.clone())
        .unwrap_or_default();
    while hi - lo > CROSSOVER_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        let e = evaluate_point(mid, p_l_target, protocols, ctx)?;
        if e.raw_optimal(metric) {
            hi = mid;
        } else {
            lo = mid;
            if let Some(b) = e.best_distilled(metric) {
                last = b.strategy.clone();
            }
        }
    }
    Ok(CrossoverReport::Crossover {
        fidelity: hi,
        last_overtaken: last,
    })
}

/// Largest raw saving at a point where raw and the best protocol share a distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawAdvantage {
    pub fidelity: f64,
    pub distance: u32,
    pub raw_cost: f64,
    pub distilled_cost: f64,
    pub protocol: String,
    /// `1 − raw/distilled`.
    pub reduction: f64,
}

pub fn max_raw_advantage(evals: &[PointEvaluation]) -> Option<RawAdvantage> {
    evals
        .iter()
        .filter_map(|e| {
            let best = e.best_distilled(Metric::BellPairs)?;
            let d = e.raw.distance.distance()?;
            if best.distance.distance() != Some(d) {
                return None;
            }
            Some(RawAdvantage {
                fidelity: e.fidelity,
                distance: d,
                raw_cost: e.raw.pairs_per_cycle,
                distilled_cost: best.pairs_per_cycle,
                protocol: best.strategy.clone(),
                reduction: 1.0 - e.raw.pairs_per_cycle / best.pairs_per_cycle,
            })
        })
        .max_by(|a, b| a.reduction.total_cmp(&b.reduction))
}

/// One row of the per-fidelity cost table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub fidelity: f64,
    pub protocol: String,
    pub distance: Option<u32>,
    pub pairs_per_round: Option<u32>,
    pub pairs_per_cycle: f64,
    pub cycle_time: f64,
    pub optimal_flag: bool,
}

/// Flattens a sweep into table rows; the cheapest strategy at each fidelity
/// (raw on ties) is flagged.
pub fn cost_rows(evals: &[PointEvaluation]) -> Vec<CostRow> {
    let mut rows = Vec::new();
    for e in evals {
        let raw_wins = e.raw_optimal(Metric::BellPairs);
        let best = e
            .best_distilled(Metric::BellPairs)
            .map(|b| b.strategy.as_str());
        for c in std::iter::once(&e.raw).chain(&e.distilled) {
            let optimal = if c.strategy == RAW {
                raw_wins
            } else {
                !raw_wins && best == Some(c.strategy.as_str()) && c.pairs_per_cycle.is_finite()
            };
            rows.push(CostRow {
                fidelity: e.fidelity,
                protocol: c.strategy.clone(),
                distance: c.distance.distance(),
                pairs_per_round: c.pairs_per_round,
                pairs_per_cycle: c.pairs_per_cycle,
                cycle_time: c.cycle_time,
                optimal_flag: optimal,
            });
        }
    }
    rows
}
