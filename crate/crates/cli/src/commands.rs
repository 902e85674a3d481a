use lsplan_core::budget::{best_strategy_for_capacity, CapacityStatus};
use lsplan_core::cost_model::{
    crossover_from_sweep, max_raw_advantage, sweep, CostBreakdown, CrossoverReport, Metric, RAW,
};
use lsplan_core::error_model::{min_distance, DistanceResult, Infeasibility, NoisePoint};
use lsplan_core::montecarlo::band_row;
use lsplan_core::temporal::{regime_row, RegimeKind, Strategy};
use lsplan_core::PlanError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;
use crate::Failure;

/// Rows to emit and whether nothing in them was feasible.
pub struct Table<T> {
    pub rows: Vec<T>,
    pub all_infeasible: bool,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn distance_status(d: &DistanceResult) -> &'static str {
    match d {
        DistanceResult::Feasible { .. } if d.extrapolated() => "extrapolated",
        DistanceResult::Feasible { .. } => "feasible",
        DistanceResult::Infeasible {
            reason: Infeasibility::AboveThreshold,
            ..
        } => "above-threshold",
        DistanceResult::Infeasible {
            reason: Infeasibility::ExceedsMaxDistance,
            ..
        } => "exceeds-max-distance",
    }
}

fn strategies(
    e: &lsplan_core::cost_model::PointEvaluation,
) -> impl Iterator<Item = &CostBreakdown> {
    std::iter::once(&e.raw).chain(&e.distilled)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub target: f64,
    pub fidelity: f64,
    pub strategy: String,
    pub p_bell: f64,
    pub distance: Option<u32>,
    pub status: String,
    /// Distance needed with perfect Bell pairs.
    pub floor_distance: Option<u32>,
}

pub fn distance(s: &Scenario) -> Result<Table<DistanceRow>, Failure> {
    let ctx = s.static_context();
    let protocols = s.protocols()?;
    let grid = s.fidelities.points()?;
    let mut rows = Vec::new();
    for &target in &s.targets {
        let floor = min_distance(
            NoisePoint::new(0.0, ctx.p_local)?,
            target,
            &ctx.params,
            ctx.d_max,
        )?;
        for e in sweep(&grid, target, &protocols, &ctx)? {
            for c in strategies(&e) {
                rows.push(DistanceRow {
                    target,
                    fidelity: e.fidelity,
                    strategy: c.strategy.clone(),
                    p_bell: c.p_bell,
                    distance: c.distance.distance(),
                    status: distance_status(&c.distance).into(),
                    floor_distance: floor.distance(),
                });
            }
        }
    }
    let all_infeasible = rows.iter().all(|r| r.distance.is_none());
    Ok(Table {
        rows,
        all_infeasible,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub target: f64,
    pub fidelity: f64,
    pub protocol: String,
    pub distance: Option<u32>,
    pub pairs_per_round: Option<u32>,
    pub pairs_per_cycle: Option<f64>,
    pub cycle_time: Option<f64>,
    pub optimal_flag: bool,
}

pub fn cost(s: &Scenario) -> Result<Table<CostRow>, Failure> {
    let ctx = s.static_context();
    let protocols = s.protocols()?;
    let grid = s.fidelities.points()?;
    let mut rows = Vec::new();
    for &target in &s.targets {
        let evals = sweep(&grid, target, &protocols, &ctx)?;
        rows.extend(
            lsplan_core::cost_model::cost_rows(&evals)
                .into_iter()
                .map(|r| CostRow {
                    target,
                    fidelity: r.fidelity,
                    protocol: r.protocol,
                    distance: r.distance,
                    pairs_per_round: r.pairs_per_round,
                    pairs_per_cycle: finite(r.pairs_per_cycle),
                    cycle_time: finite(r.cycle_time),
                    optimal_flag: r.optimal_flag,
                }),
        );
    }
    let all_infeasible = rows.iter().all(|r| r.distance.is_none());
    Ok(Table {
        rows,
        all_infeasible,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverRow {
    pub target: f64,
    pub metric: String,
    pub status: String,
    pub fidelity: Option<f64>,
    pub last_overtaken: Option<String>,
    /// Largest raw saving at a shared distance (Bell-pair metric only).
    pub advantage_fidelity: Option<f64>,
    pub advantage_distance: Option<u32>,
    pub advantage_reduction: Option<f64>,
}

pub fn crossover(s: &Scenario) -> Result<Table<CrossoverRow>, Failure> {
    let ctx = s.static_context();
    let protocols = s.protocols()?;
    if protocols.is_empty() {
        return Err(Failure::Usage(
            "crossover needs at least one protocol".into(),
        ));
    }
    let grid = s.fidelities.points()?;
    let mut rows = Vec::new();
    let mut any_feasible = false;
    for &target in &s.targets {
        let evals = sweep(&grid, target, &protocols, &ctx)?;
        any_feasible |= evals
            .iter()
            .any(|e| strategies(e).any(|c| c.distance.is_feasible()));
        for (metric, name) in [(Metric::BellPairs, "bell-pairs"), (Metric::Time, "time")] {
            let report = crossover_from_sweep(metric, &evals, target, &protocols, &ctx)?;
            let (status, last) = match &report {
                CrossoverReport::Crossover { last_overtaken, .. } => {
                    ("crossover", Some(last_overtaken.clone()))
                }
                CrossoverReport::RawDominatesThroughout => ("raw-dominates-throughout", None),
                CrossoverReport::DistillationDominatesThroughout => {
                    ("distillation-dominates-throughout", None)
                }
                CrossoverReport::Tied => ("tied", None),
            };
            let adv = match metric {
                Metric::BellPairs => max_raw_advantage(&evals),
                Metric::Time => None,
            };
            rows.push(CrossoverRow {
                target,
                metric: name.into(),
                status: status.into(),
                fidelity: report.fidelity(),
                last_overtaken: last,
                advantage_fidelity: adv.as_ref().map(|a| a.fidelity),
                advantage_distance: adv.as_ref().map(|a| a.distance),
                advantage_reduction: adv.as_ref().map(|a| a.reduction),
            });
        }
    }
    let all_infeasible = !any_feasible;
    Ok(Table {
        rows,
        all_infeasible,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeTableRow {
    pub target: f64,
    pub fidelity: f64,
    pub lambda: f64,
    pub eta_link: f64,
    pub strategy: Strategy,
    pub protocol: String,
    pub regime: RegimeKind,
    pub distance: Option<u32>,
    pub pairs_per_cycle_static: Option<f64>,
    pub pairs_per_cycle_converged: Option<f64>,
}

pub fn regime(s: &Scenario) -> Result<Table<RegimeTableRow>, Failure> {
    let protocols = s.protocols()?;
    let grid = s.fidelities.points()?;
    let choices: Vec<_> = std::iter::once(None)
        .chain(protocols.iter().map(Some))
        .collect();
    let mut rows = Vec::new();
    for &target in &s.targets {
        let cfg = s.solver_config(target);
        let batch: Vec<Vec<RegimeTableRow>> = grid
            .par_iter()
            .map(|&f0| {
                choices
                    .iter()
                    .map(|p| {
                        let r = regime_row(s.strategy, *p, &s.link, f0, &cfg)?;
                        Ok(RegimeTableRow {
                            target,
                            fidelity: f0,
                            lambda: r.lambda,
                            eta_link: s.link.eta_link(),
                            strategy: r.strategy,
                            protocol: r.protocol,
                            regime: r.regime,
                            distance: r.distance,
                            pairs_per_cycle_static: r.pairs_per_cycle_static.and_then(finite),
                            pairs_per_cycle_converged: r.pairs_per_cycle_converged.and_then(finite),
                        })
                    })
                    .collect::<Result<Vec<_>, PlanError>>()
            })
            .collect::<Result<_, PlanError>>()?;
        rows.extend(batch.into_iter().flatten());
    }
    let all_infeasible = rows.iter().all(|r| r.regime == RegimeKind::Infeasible);
    Ok(Table {
        rows,
        all_infeasible,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub target: f64,
    pub fidelity: f64,
    pub n_phy: u64,
    pub status: CapacityStatus,
    pub strategy: String,
    pub best: bool,
    pub distance: Option<u32>,
    pub n_comm: Option<u64>,
    pub n_mem: Option<u64>,
    pub n_logical: Option<u64>,
    pub grid_qubits: Option<u64>,
    pub total: Option<u64>,
}

pub fn budget(s: &Scenario) -> Result<Table<BudgetRow>, Failure> {
    let ctx = s.static_context();
    let protocols = s.protocols()?;
    let grid = s.fidelities.points()?;
    let order: Vec<String> = std::iter::once(RAW.to_string())
        .chain(protocols.iter().map(|p| p.name.clone()))
        .collect();
    let mut rows = Vec::new();
    let mut statuses = Vec::new();
    for &target in &s.targets {
        let reports = grid
            .par_iter()
            .map(|&f0| best_strategy_for_capacity(s.n_phy, f0, target, &protocols, &s.link, &ctx))
            .collect::<Result<Vec<_>, PlanError>>()?;
        for r in reports {
            statuses.push(r.status);
            let best = r.best.as_ref().map(|b| b.strategy.as_str());
            for name in &order {
                let c = r.candidate(name);
                rows.push(BudgetRow {
                    target,
                    fidelity: r.fidelity,
                    n_phy: s.n_phy,
                    status: r.status,
                    strategy: name.clone(),
                    best: r.status == CapacityStatus::Feasible && best == Some(name.as_str()),
                    distance: c.map(|c| c.distance),
                    n_comm: c.map(|c| c.n_comm),
                    n_mem: c.map(|c| c.n_mem),
                    n_logical: c.map(|c| c.n_logical),
                    grid_qubits: c.map(|c| c.grid_qubits),
                    total: c.map(|c| c.total),
                });
            }
        }
    }
    let all_infeasible = statuses.iter().all(|s| *s == CapacityStatus::Infeasible);
    Ok(Table {
        rows,
        all_infeasible,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRow {
    pub target: f64,
    pub fidelity: f64,
    pub strategy: Strategy,
    pub protocol: String,
    pub status: String,
    pub distance: Option<u32>,
    pub pairs_per_round: Option<u32>,
    /// Analytical serial cost.
    pub pairs_per_cycle: Option<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub runs: usize,
    pub seed: u64,
}

pub fn simulate(s: &Scenario) -> Result<Table<SimulateRow>, Failure> {
    let protocols = s.protocols()?;
    let grid = s.fidelities.points()?;
    if s.simulation.runs == 0 || s.simulation.rounds == 0 {
        return Err(Failure::Usage(
            "simulation needs at least one run and one round".into(),
        ));
    }
    let choices: Vec<_> = std::iter::once(None)
        .chain(protocols.iter().cloned().map(Some))
        .collect();
    let mut rows = Vec::new();
    for &target in &s.targets {
        for (i, &f0) in grid.iter().enumerate() {
            for p in &choices {
                let base = s.sim_config(p.clone(), target);
                let name = p.as_ref().map_or(RAW, |p| p.name.as_str()).to_string();
                let row = match band_row(&base, f0, i as u64) {
                    Ok(b) => SimulateRow {
                        target,
                        fidelity: f0,
                        strategy: s.strategy,
                        protocol: name,
                        status: if b.mean.is_finite() { "ok" } else { "stalled" }.into(),
                        distance: Some(b.distance),
                        pairs_per_round: Some(b.pairs_per_round),
                        pairs_per_cycle: finite(b.pairs_per_cycle),
                        mean: finite(b.mean),
                        std: finite(b.std),
                        runs: b.runs,
                        seed: b.seed,
                    },
                    Err(PlanError::StaticInfeasible(_)) | Err(PlanError::AlreadyExpired { .. }) => {
                        SimulateRow {
                            target,
                            fidelity: f0,
                            strategy: s.strategy,
                            protocol: name,
                            status: "infeasible".into(),
                            distance: None,
                            pairs_per_round: None,
                            pairs_per_cycle: None,
                            mean: None,
                            std: None,
                            runs: base.runs,
                            seed: base.seed,
                        }
                    }
                    Err(e) => return Err(e.into()),
                };
                rows.push(row);
            }
        }
    }
    let all_infeasible = rows.iter().all(|r| r.status == "infeasible");
    Ok(Table {
        rows,
        all_infeasible,
    })
}
