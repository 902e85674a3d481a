//! Event-driven simulation of heralded pair generation, buffering with decay
//! and cutoff discard, distillation attempts and round-by-round consumption.
//!
//! Generation is a Poisson process of rate `λ`. A syndrome round (or, for the
//! pre-buffered strategy, a block of `d` rounds) fires once its quota is in
//! the buffer and the previous round has finished. While the buffer is full
//! new heralds are blocked. Pairs older than the discard time are dropped.
//! Every run draws from its own ChaCha8 stream, so results do not depend on
//! thread scheduling.

mod sampler;

pub use sampler::{sample_protocol, SampledOutcome};

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost_model::{distillation_time, RoundScheme, RAW};
use crate::distillation::{evaluate_protocol, multiplexing_factor, ProtocolSpec};
use crate::error::{check_probability, PlanError, Result};
use crate::error_model::{min_distance, FittedModelParams, NoisePoint, DEFAULT_D_MAX};
use crate::temporal::{
    discard_time, self_consistent_distance, LinkParams, SolveOutcome, SolverConfig, Strategy,
    DEFAULT_F_DISCARD,
};

/// Points in the fidelity table used for distillation outcomes.
pub const OUTCOME_TABLE_POINTS: usize = 257;

/// Generator for run `run` of grid point `point` under master seed `seed`.
pub fn stream_rng(seed: u64, point: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((point << 32) | (run & 0xffff_ffff));
    rng
}

/// Collection times of `n` pairs, one per run.
pub fn simulate_collection(n: u32, lam: f64, runs: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 || runs == 0 {
        return Err(PlanError::InvalidInput(
            "n and runs must be positive".into(),
        ));
    }
    let exp = Exp::new(lam).map_err(|e| PlanError::InvalidInput(format!("rate {lam}: {e}")))?;
    Ok((0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, 0, r as u64);
            (0..n).map(|_| exp.sample(&mut rng)).sum()
        })
        .collect())
}

/// Scenario for [`simulate_operation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub link: LinkParams,
    pub strategy: Strategy,
    pub protocol: Option<ProtocolSpec>,
    pub f0: f64,
    pub p_phys: f64,
    pub p_l_target: f64,
    /// Syndrome rounds per run.
    pub rounds: u32,
    pub runs: usize,
    pub seed: u64,
    pub f_discard: f64,
    /// Fixed code distance; when absent the converged (or static) plan's is used.
    pub distance: Option<u32>,
    pub scheme: RoundScheme,
    pub params: FittedModelParams,
    pub d_max: u32,
}

impl SimConfig {
    pub fn new(link: LinkParams, protocol: Option<ProtocolSpec>, f0: f64) -> Self {
        Self {
            link,
            strategy: Strategy::RoundByRound,
            protocol,
            f0,
            p_phys: 1e-3,
            p_l_target: 1e-3,
            rounds: 100,
            runs: 1000,
            seed: 0,
            f_discard: DEFAULT_F_DISCARD,
            distance: None,
            scheme: RoundScheme::default(),
            params: FittedModelParams::default(),
            d_max: DEFAULT_D_MAX,
        }
    }

    fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            params: self.params,
            p_phys: self.p_phys,
            p_l_target: self.p_l_target,
            d_max: self.d_max,
            f_discard: self.f_discard,
            scheme: self.scheme,
        }
    }

    /// Distance the simulation runs at.
    pub fn resolve_distance(&self) -> Result<u32> {
        if let Some(d) = self.distance {
            self.scheme.pairs_per_round(d)?;
            return Ok(d);
        }
        let cfg = self.solver_config();
        let solved = match self_consistent_distance(
            self.strategy,
            self.protocol.as_ref(),
            &self.link,
            self.f0,
            &cfg,
        ) {
            Ok(out) => out,
            Err(PlanError::NonConvergence { .. }) => SolveOutcome::Infeasible {
                reason: crate::temporal::InfeasibleReason::ExceedsMaxDistance,
                trace: vec![],
            },
            Err(e) => return Err(e),
        };
        if let Some(plan) = solved.plan() {
            return Ok(plan.distance);
        }
        let p_bell = match &self.protocol {
            None => 1.0 - self.f0,
            Some(p) => evaluate_protocol(p, 1.0 - self.f0, self.p_phys)?.p_eff,
        };
        min_distance(
            NoisePoint::new(p_bell, self.p_phys)?,
            self.p_l_target,
            &self.params,
            self.d_max,
        )?
        .distance()
        .ok_or_else(|| {
            PlanError::StaticInfeasible(format!(
                "no distance up to {} meets {} at F0 = {}",
                self.d_max, self.p_l_target, self.f0
            ))
        })
    }

    fn validate(&self) -> Result<()> {
        self.link.validate()?;
        check_probability("f0", self.f0)?;
        if self.runs == 0 || self.rounds == 0 {
            return Err(PlanError::InvalidInput(
                "runs and rounds must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Mean, unbiased standard deviation and standard error over runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub sem: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                sem: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std,
            sem: std / (n as f64).sqrt(),
            n,
        }
    }

    /// Whether `x` lies within `k` standard errors of the mean.
    pub fn contains(&self, x: f64, k: f64) -> bool {
        (self.mean - x).abs() <= k * self.sem
    }
}

/// Empirical collection-time distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaitSummary {
    pub mean: f64,
    pub std: f64,
    pub p99: f64,
    pub samples: usize,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() as f64 * q).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub strategy: Strategy,
    pub protocol: String,
    pub distance: u32,
    /// Delivered pairs needed per round.
    pub quota: u32,
    pub runs: usize,
    pub rounds: u32,
    pub seed: u64,
    /// Raw pairs taken from the link per cycle of `d` rounds (used plus discarded).
    pub pairs_per_cycle: Summary,
    /// Waiting time from the end of one round to its successor's quota.
    pub collection_time: WaitSummary,
    /// Per-run mean of `F₀·e^(−W/τ_coh)` over rounds, `W` the wait since the previous round.
    pub earliest_fidelity: Summary,
    /// Lowest fidelity of any pair actually consumed.
    pub min_consumed_fidelity: f64,
    pub discards: u64,
    pub attempts: u64,
    pub successes: u64,
    pub realized_success_rate: f64,
    /// Per-run raw inputs per successful attempt (distillation only).
    pub raw_per_success: Option<Summary>,
    /// Runs that hit the event cap before finishing.
    pub stalled_runs: usize,
}

/// Distillation outcome interpolated over input fidelity.
#[derive(Debug, Clone)]
struct OutcomeTable {
    lo: f64,
    step: f64,
    p_succ: Vec<f64>,
    fidelity: Vec<f64>,
}

impl OutcomeTable {
    fn build(protocol: &ProtocolSpec, lo: f64, hi: f64, p_local: f64) -> Result<Self> {
        let n = if hi > lo { OUTCOME_TABLE_POINTS } else { 1 };
        let step = if n > 1 {
            (hi - lo) / (n - 1) as f64
        } else {
            0.0
        };
        let mut p_succ = Vec::with_capacity(n);
        let mut fidelity = Vec::with_capacity(n);
        for i in 0..n {
            let f = if i + 1 == n { hi } else { lo + i as f64 * step };
            let o = evaluate_protocol(protocol, 1.0 - f, p_local)?;
            p_succ.push(o.p_succ);
            fidelity.push(1.0 - o.p_eff);
        }
        Ok(Self {
            lo,
            step,
            p_succ,
            fidelity,
        })
    }

    fn lookup(&self, f: f64) -> (f64, f64) {
        if self.p_succ.len() == 1 {
            return (self.p_succ[0], self.fidelity[0]);
        }
        let x = ((f - self.lo) / self.step).clamp(0.0, (self.p_succ.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.p_succ.len() - 2);
        let t = x - i as f64;
        let lerp = |v: &[f64]| v[i] + t * (v[i + 1] - v[i]);
        (lerp(&self.p_succ), lerp(&self.fidelity))
    }
}

/// Fixed per-scenario quantities shared by all runs.
struct Plan<'a> {
    cfg: &'a SimConfig,
    d: u32,
    quota: u32,
    /// Pairs consumed per firing (a round, or `d` rounds when pre-buffered).
    batch: u32,
    /// Duration of one firing.
    busy: f64,
    /// Raw buffer capacity.
    capacity: usize,
    t_discard: f64,
    table: Option<OutcomeTable>,
    max_arrivals: u64,
}

#[derive(Debug, Default)]
struct RunStats {
    raw_taken: u64,
    consumed: u64,
    discards: u64,
    attempts: u64,
    successes: u64,
    inputs: u64,
    earliest: Vec<f64>,
    waits: Vec<f64>,
    min_consumed: f64,
    fired: u32,
    stalled: bool,
}

fn run_one(plan: &Plan, rng: &mut ChaCha8Rng) -> Result<RunStats> {
    let cfg = plan.cfg;
    let tau = cfg.link.tau_coh;
    let exp = Exp::new(cfg.link.lam).map_err(|e| PlanError::InvalidInput(e.to_string()))?;
    let firings = match cfg.strategy {
        Strategy::RoundByRound => cfg.rounds,
        Strategy::PreBuffered => cfg.rounds.div_ceil(plan.d),
    };
    let fidelity_at = |born: f64, now: f64| cfg.f0 * (-(now - born) / tau).exp();

    // Raw pairs by arrival time; distilled pairs as (birth, fidelity at birth).
    let mut raw: VecDeque<f64> = VecDeque::with_capacity(plan.capacity);
    let mut out: VecDeque<(f64, f64)> = VecDeque::with_capacity(plan.batch as usize);
    let mut stats = RunStats {
        min_consumed: f64::INFINITY,
        ..Default::default()
    };
    let mut now = 0.0f64;
    let mut prev_fire = 0.0f64;
    let mut ready_at = 0.0f64;
    let mut arrivals = 0u64;

    let n_in = cfg.protocol.as_ref().map_or(0, |p| p.n_pairs as usize);
    let batch = plan.batch as usize;
    let mut met_at: Option<f64> = None;

    while stats.fired < firings {
        while let Some(&born) = raw.front() {
            if now - born > plan.t_discard {
                raw.pop_front();
                stats.discards += 1;
            } else {
                break;
            }
        }

        if let Some(table) = &plan.table {
            while raw.len() >= n_in && out.len() < batch {
                let mut f_sum = 0.0;
                for born in raw.drain(..n_in) {
                    let f = fidelity_at(born, now);
                    stats.min_consumed = stats.min_consumed.min(f);
                    f_sum += f;
                }
                stats.attempts += 1;
                stats.inputs += n_in as u64;
                let (p_succ, f_out) = table.lookup(f_sum / n_in as f64);
                if rng.random::<f64>() < p_succ {
                    stats.successes += 1;
                    out.push_back((now, f_out));
                }
            }
        }

        let have = if plan.table.is_some() {
            out.len()
        } else {
            raw.len()
        };
        if have >= batch {
            met_at.get_or_insert(now);
            if now >= ready_at {
                if plan.table.is_none() {
                    for born in raw.drain(..batch) {
                        stats.min_consumed = stats.min_consumed.min(fidelity_at(born, now));
                    }
                } else {
                    out.drain(..batch);
                }
                stats.waits.push(met_at.take().unwrap_or(now) - prev_fire);
                stats
                    .earliest
                    .push(cfg.f0 * (-(now - prev_fire) / tau).exp());
                stats.consumed += plan.batch as u64;
                stats.fired += 1;
                prev_fire = now;
                ready_at = now + plan.busy;
                continue;
            }
        } else {
            met_at = None;
        }

        if have >= batch && raw.len() >= plan.capacity {
            // Buffer full: every herald until `ready_at` is blocked.
            now = ready_at;
            continue;
        }
        if arrivals >= plan.max_arrivals {
            stats.stalled = true;
            break;
        }
        let next = now + exp.sample(rng);
        if have >= batch && next > ready_at {
            // Heralds are memoryless, so the draw past `ready_at` can be dropped.
            now = ready_at;
            continue;
        }
        now = next;
        if raw.len() < plan.capacity {
            raw.push_back(now);
            stats.raw_taken += 1;
            arrivals += 1;
        }
    }

    if stats.min_consumed < cfg.f_discard - 1e-12 {
        return Err(PlanError::InvariantViolation(format!(
            "consumed a pair at fidelity {} below the discard fidelity {}",
            stats.min_consumed, cfg.f_discard
        )));
    }
    Ok(stats)
}

fn build_plan(cfg: &SimConfig) -> Result<Plan<'_>> {
    cfg.validate()?;
    let d = cfg.resolve_distance()?;
    let quota = cfg.scheme.pairs_per_round(d)?;
    let rounds_per_firing = match cfg.strategy {
        Strategy::RoundByRound => 1,
        Strategy::PreBuffered => d,
    };
    let batch = quota * rounds_per_firing;
    let tau_d = cfg
        .protocol
        .as_ref()
        .map_or(0.0, |p| distillation_time(p, cfg.link.tau_se));
    let busy = f64::from(rounds_per_firing) * (cfg.link.tau_se + tau_d);
    let t_discard = if cfg.f0 >= cfg.f_discard {
        discard_time(cfg.f0, cfg.f_discard, cfg.link.tau_coh)?
    } else {
        0.0
    };

    let (capacity, table, per_delivered) = match &cfg.protocol {
        None => (batch as usize, None, 1.0),
        Some(p) => {
            let outcome = evaluate_protocol(p, 1.0 - cfg.f0, cfg.p_phys)?;
            let k = multiplexing_factor(outcome.p_succ)?;
            let lo = (cfg.f_discard - 0.01).max(0.25).min(cfg.f0);
            let table = OutcomeTable::build(p, lo, cfg.f0, cfg.p_phys)?;
            let capacity = (batch as usize) * (k as usize) * (p.n_pairs as usize);
            (capacity, Some(table), f64::from(p.n_pairs) / outcome.p_succ)
        }
    };
    let expected = f64::from(cfg.rounds) * f64::from(quota) * per_delivered;
    Ok(Plan {
        cfg,
        d,
        quota,
        batch,
        busy,
        capacity: capacity.max(1),
        t_discard,
        table,
        max_arrivals: (100.0 * expected) as u64 + 10_000,
    })
}

/// Simulates `runs` independent operations of `rounds` syndrome rounds each.
pub fn simulate_operation(cfg: &SimConfig) -> Result<SimResult> {
    simulate_point(cfg, 0)
}

fn simulate_point(cfg: &SimConfig, point: u64) -> Result<SimResult> {
    let plan = build_plan(cfg)?;
    let runs: Vec<RunStats> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| run_one(&plan, &mut stream_rng(cfg.seed, point, r as u64)))
        .collect::<Result<_>>()?;

    let done: Vec<&RunStats> = runs.iter().filter(|r| !r.stalled).collect();
    let per_cycle: Vec<f64> = done
        .iter()
        .map(|r| {
            let per_cycle = u64::from(plan.quota) * u64::from(plan.d);
            let taken = match plan.table {
                None => r.consumed,
                Some(_) => r.inputs,
            };
            ((taken + r.discards) * per_cycle) as f64 / r.consumed as f64
        })
        .collect();
    let earliest: Vec<f64> = done
        .iter()
        .map(|r| r.earliest.iter().sum::<f64>() / r.earliest.len() as f64)
        .collect();
    let mut waits: Vec<f64> = done.iter().flat_map(|r| r.waits.iter().copied()).collect();
    waits.sort_by(f64::total_cmp);
    let wait_summary = Summary::of(&waits);

    let attempts: u64 = runs.iter().map(|r| r.attempts).sum();
    let successes: u64 = runs.iter().map(|r| r.successes).sum();
    let raw_per_success = plan.table.as_ref().map(|_| {
        let v: Vec<f64> = done
            .iter()
            .filter(|r| r.successes > 0)
            .map(|r| r.inputs as f64 / r.successes as f64)
            .collect();
        Summary::of(&v)
    });

    Ok(SimResult {
        strategy: cfg.strategy,
        protocol: cfg
            .protocol
            .as_ref()
            .map_or_else(|| RAW.to_string(), |p| p.name.clone()),
        distance: plan.d,
        quota: plan.quota,
        runs: cfg.runs,
        rounds: cfg.rounds,
        seed: cfg.seed,
        pairs_per_cycle: Summary::of(&per_cycle),
        collection_time: WaitSummary {
            mean: wait_summary.mean,
            std: wait_summary.std,
            p99: percentile(&waits, 0.99),
            samples: waits.len(),
        },
        earliest_fidelity: Summary::of(&earliest),
        min_consumed_fidelity: runs
            .iter()
            .map(|r| r.min_consumed)
            .fold(f64::INFINITY, f64::min),
        discards: runs.iter().map(|r| r.discards).sum(),
        attempts,
        successes,
        realized_success_rate: if attempts > 0 {
            successes as f64 / attempts as f64
        } else {
            f64::NAN
        },
        raw_per_success,
        stalled_runs: runs.len() - done.len(),
    })
}

/// One row of a Monte Carlo cost band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub fidelity: f64,
    pub protocol: String,
    pub distance: u32,
    pub pairs_per_round: u32,
    /// Analytical serial cost per cycle.
    pub pairs_per_cycle: f64,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
    pub seed: u64,
}

/// Per-fidelity bands; grid point `i` uses stream block `i` of the master seed.
pub fn cost_bands(base: &SimConfig, grid: &[f64]) -> Result<Vec<BandRow>> {
    if grid.is_empty() {
        return Err(PlanError::InvalidInput("band grid is empty".into()));
    }
    grid.iter()
        .enumerate()
        .map(|(i, &f0)| band_row(base, f0, i as u64))
        .collect()
}

/// Band at a single fidelity using stream block `point`.
pub fn band_row(base: &SimConfig, f0: f64, point: u64) -> Result<BandRow> {
    let cfg = SimConfig { f0, ..base.clone() };
    let res = simulate_point(&cfg, point)?;
    let overhead = match &cfg.protocol {
        None => 1.0,
        Some(p) => {
            let o = evaluate_protocol(p, 1.0 - f0, cfg.p_phys)?;
            crate::distillation::raw_pairs_per_output(p, &o)?
        }
    };
    Ok(BandRow {
        fidelity: f0,
        protocol: res.protocol,
        distance: res.distance,
        pairs_per_round: res.quota,
        pairs_per_cycle: overhead * f64::from(res.quota) * f64::from(res.distance),
        mean: res.pairs_per_cycle.mean,
        std: res.pairs_per_cycle.std,
        runs: cfg.runs,
        seed: cfg.seed,
    })
}
