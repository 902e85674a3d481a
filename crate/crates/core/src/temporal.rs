//! Finite-rate Bell-pair supply: collection statistics, memory decay, the
//! self-consistent distance solver and operating-regime classification.
//!
//! Two scheduling strategies are modelled. Round-by-round (S1) feeds each
//! syndrome round as soon as its quota of pairs has arrived; data qubits idle
//! while waiting. Pre-buffered (S2) collects the pairs of all `d` rounds before
//! starting, so nothing idles but the earliest pair waits `d` times longer.

use serde::{Deserialize, Serialize};

use crate::cost_model::{distillation_time, RoundScheme};
use crate::distillation::{evaluate_protocol, raw_pairs_per_output, ProtocolSpec};
use crate::error::{check_positive, check_probability, PlanError, Result};
use crate::error_model::{
    logical_error_rate, min_distance, DistanceResult, FittedModelParams, Infeasibility, NoisePoint,
    DEFAULT_D_MAX,
};

/// `Φ⁻¹(0.99)`, pinned.
pub const Z_99: f64 = 2.33;

/// Default discard fidelity (`p = 13.3 %`).
pub const DEFAULT_F_DISCARD: f64 = 0.867;

/// Iteration cap of the self-consistent solver.
pub const MAX_ITERATIONS: usize = 100;

/// Heralded-link and timing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    /// Heralded pair rate (1/s).
    pub lam: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interfaces: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_herald: Option<f64>,
    /// Pair memory coherence time (s).
    #[serde(default = "default_tau_coh")]
    pub tau_coh: f64,
    /// `τ_dep / τ_coh`, at least 1.
    #[serde(default = "default_mu")]
    pub mu: f64,
    /// Syndrome round duration (s).
    #[serde(default = "default_tau_se")]
    pub tau_se: f64,
    /// Communication-qubit reset time (s).
    #[serde(default)]
    pub tau_reset: f64,
}

fn default_tau_coh() -> f64 {
    10.0
}
fn default_mu() -> f64 {
    5.0
}
fn default_tau_se() -> f64 {
    1e-3
}

impl LinkParams {
    /// Link at rate `lam` with default timing (`τ_coh` = 10 s, `μ` = 5, `τ_SE` = 1 ms).
    pub fn new(lam: f64) -> Self {
        Self {
            lam,
            interfaces: None,
            attempt_rate: None,
            p_herald: None,
            tau_coh: default_tau_coh(),
            mu: default_mu(),
            tau_se: default_tau_se(),
            tau_reset: 0.0,
        }
    }

    /// Link with `λ = I · r_attempt · p_herald`.
    pub fn from_components(interfaces: u32, attempt_rate: f64, p_herald: f64) -> Result<Self> {
        let link = Self {
            interfaces: Some(interfaces),
            attempt_rate: Some(attempt_rate),
            p_herald: Some(p_herald),
            ..Self::new(f64::from(interfaces) * attempt_rate * p_herald)
        };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("lam", self.lam)?;
        check_positive("tau_coh", self.tau_coh)?;
        check_positive("tau_se", self.tau_se)?;
        if !(self.mu >= 1.0) {
            return Err(PlanError::InvalidInput(format!(
                "mu must be at least 1, got {}",
                self.mu
            )));
        }
        if !(self.tau_reset >= 0.0) {
            return Err(PlanError::InvalidInput(format!(
                "tau_reset must be non-negative, got {}",
                self.tau_reset
            )));
        }
        if let (Some(i), Some(r), Some(p)) = (self.interfaces, self.attempt_rate, self.p_herald) {
            check_probability("p_herald", p)?;
            let lam = f64::from(i) * r * p;
            if (lam - self.lam).abs() > 1e-9 * self.lam.abs().max(lam.abs()) {
                return Err(PlanError::InvalidInput(format!(
                    "lam = {} disagrees with I·r·p = {lam}",
                    self.lam
                )));
            }
        }
        Ok(())
    }

    /// `η_link = λ · τ_coh`.
    pub fn eta_link(&self) -> f64 {
        self.lam * self.tau_coh
    }

    /// Same link with `λ → xλ` and `τ_coh → τ_coh / x`.
    pub fn rescaled(&self, x: f64) -> Self {
        Self {
            lam: self.lam * x,
            interfaces: None,
            attempt_rate: None,
            p_herald: None,
            tau_coh: self.tau_coh / x,
            ..*self
        }
    }
}

/// Erlang collection-time statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectionStats {
    pub mean: f64,
    pub variance: f64,
    /// Gaussian 99th percentile.
    pub t99: f64,
}

pub fn collection_time_stats(n: u32, lam: f64) -> Result<CollectionStats> {
    if n == 0 {
        return Err(PlanError::InvalidInput("n must be positive".into()));
    }
    check_positive("lam", lam)?;
    let n = f64::from(n);
    let mean = n / lam;
    Ok(CollectionStats {
        mean,
        variance: n / (lam * lam),
        t99: mean * (1.0 + Z_99 / n.sqrt()),
    })
}

/// How stored fidelity decays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayModel {
    /// `F₀·e^(−t/τ)`, accurate while `F ≫ 1/4`.
    #[default]
    Exponential,
    /// `1/4 + (F₀ − 1/4)·e^(−t/τ)`.
    Depolarizing,
}

pub fn decayed_fidelity(f0: f64, t: f64, tau_coh: f64) -> f64 {
    f0 * (-t / tau_coh).exp()
}

pub fn decayed_fidelity_with(model: DecayModel, f0: f64, t: f64, tau_coh: f64) -> f64 {
    match model {
        DecayModel::Exponential => decayed_fidelity(f0, t, tau_coh),
        DecayModel::Depolarizing => 0.25 + (f0 - 0.25) * (-t / tau_coh).exp(),
    }
}

/// Longest storage before a pair falls to `f_discard`.
pub fn discard_time(f0: f64, f_discard: f64, tau_coh: f64) -> Result<f64> {
    check_probability("f0", f0)?;
    check_positive("f_discard", f_discard)?;
    check_positive("tau_coh", tau_coh)?;
    if f0 < f_discard {
        return Err(PlanError::AlreadyExpired { f0, f_discard });
    }
    Ok(tau_coh * (f0 / f_discard).ln())
}

/// Whether pairs arriving during one round cover its quota at 99 % confidence.
pub fn otf_condition(lam: f64, t_round: f64, c_round: f64) -> bool {
    let x = lam * t_round;
    x - Z_99 * x.sqrt() >= c_round
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtfBound {
    pub fidelity: f64,
    /// `F₀·(1 − ν)`.
    pub first_order: f64,
    /// `ν = T_round / τ_coh`.
    pub nu: f64,
}

pub fn otf_stored_fidelity_bound(f0: f64, t_round: f64, tau_coh: f64) -> OtfBound {
    let nu = t_round / tau_coh;
    OtfBound {
        fidelity: f0 * (-nu).exp(),
        first_order: f0 * (1.0 - nu),
        nu,
    }
}

/// Earliest pair of a round under round-by-round feeding.
pub fn strategy1_stored_fidelity(f0: f64, c_round: f64, eta_link: f64) -> f64 {
    f0 * (-c_round / eta_link).exp()
}

/// Earliest pair when all `d` rounds are buffered first.
pub fn strategy2_stored_fidelity(f0: f64, d: u32, c_round: f64, eta_link: f64) -> f64 {
    f0 * (-f64::from(d) * c_round / eta_link).exp()
}

/// Per-round idle error on data qubits while a round's pairs are collected.
pub fn idle_error(c_round: f64, mu: f64, eta_link: f64) -> f64 {
    1.0 - (-c_round / (mu * eta_link)).exp()
}

/// Pair scheduling strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// S1: each round starts once its own pairs have arrived.
    #[default]
    RoundByRound,
    /// S2: pairs for all rounds are collected before the operation starts.
    PreBuffered,
}

/// Fixed inputs of the solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub params: FittedModelParams,
    pub p_phys: f64,
    pub p_l_target: f64,
    pub d_max: u32,
    pub f_discard: f64,
    pub scheme: RoundScheme,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            params: FittedModelParams::default(),
            p_phys: 1e-3,
            p_l_target: 1e-3,
            d_max: DEFAULT_D_MAX,
            f_discard: DEFAULT_F_DISCARD,
            scheme: RoundScheme::default(),
        }
    }
}

/// Why a plan could not be built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfeasibleReason {
    /// No distance meets the target even without decay.
    Static,
    /// The stored pair falls below the discard fidelity.
    Expired,
    /// Idle error pushes the local rate past its threshold.
    LocalAboveThreshold,
    /// The decayed Bell error is at or above the effective threshold.
    AboveThreshold,
    ExceedsMaxDistance,
}

impl From<Infeasibility> for InfeasibleReason {
    fn from(r: Infeasibility) -> Self {
        match r {
            Infeasibility::AboveThreshold => InfeasibleReason::AboveThreshold,
            Infeasibility::ExceedsMaxDistance => InfeasibleReason::ExceedsMaxDistance,
        }
    }
}

/// Error rates implied by running at distance `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundState {
    pub c_round: f64,
    pub stored_fidelity: f64,
    pub idle_error: f64,
    pub effective_local: f64,
    /// Bell error seen by the code, after distillation if any.
    pub p_bell: f64,
}

/// Static description of raw or distilled supply.
#[derive(Debug, Clone)]
struct Supply<'a> {
    protocol: Option<&'a ProtocolSpec>,
    /// Raw pairs per delivered pair, fixed at the undecayed input fidelity.
    overhead: f64,
    /// Bell error before any decay.
    p_bell_static: f64,
}

impl<'a> Supply<'a> {
    fn new(protocol: Option<&'a ProtocolSpec>, f0: f64, cfg: &SolverConfig) -> Result<Self> {
        check_probability("f0", f0)?;
        match protocol {
            None => Ok(Self {
                protocol,
                overhead: 1.0,
                p_bell_static: 1.0 - f0,
            }),
            Some(p) => {
                let outcome = evaluate_protocol(p, 1.0 - f0, cfg.p_phys)?;
                Ok(Self {
                    protocol,
                    overhead: raw_pairs_per_output(p, &outcome)?,
                    p_bell_static: outcome.p_eff,
                })
            }
        }
    }

    fn name(&self) -> String {
        self.protocol
            .map_or_else(|| crate::cost_model::RAW.to_string(), |p| p.name.clone())
    }

    fn c_round(&self, d: u32, cfg: &SolverConfig) -> Result<f64> {
        Ok(self.overhead * f64::from(cfg.scheme.pairs_per_round(d)?))
    }

    fn t_round(&self, tau_se: f64) -> f64 {
        tau_se + self.protocol.map_or(0.0, |p| distillation_time(p, tau_se))
    }
}

/// Error rates at distance `d`, or the reason the round cannot run.
fn round_state(
    strategy: Strategy,
    supply: &Supply,
    f0: f64,
    d: u32,
    eta_link: f64,
    mu: f64,
    cfg: &SolverConfig,
) -> Result<std::result::Result<RoundState, InfeasibleReason>> {
    let c_round = supply.c_round(d, cfg)?;
    let (stored, idle) = match strategy {
        Strategy::RoundByRound => (
            strategy1_stored_fidelity(f0, c_round, eta_link),
            idle_error(c_round, mu, eta_link),
        ),
        Strategy::PreBuffered => (strategy2_stored_fidelity(f0, d, c_round, eta_link), 0.0),
    };
    if stored < cfg.f_discard {
        return Ok(Err(InfeasibleReason::Expired));
    }
    let effective_local = cfg.p_phys + idle;
    if effective_local >= cfg.params.p_th_local {
        return Ok(Err(InfeasibleReason::LocalAboveThreshold));
    }
    let p_raw = 1.0 - stored;
    let p_bell = match supply.protocol {
        None => p_raw,
        Some(p) => evaluate_protocol(p, p_raw, cfg.p_phys)?.p_eff,
    };
    Ok(Ok(RoundState {
        c_round,
        stored_fidelity: stored,
        idle_error: idle,
        effective_local,
        p_bell,
    }))
}

/// Logical error rate of a strategy held at distance `d`, or `None` when the
/// round is infeasible there.
pub fn fixed_distance_error(
    strategy: Strategy,
    protocol: Option<&ProtocolSpec>,
    f0: f64,
    d: u32,
    eta_link: f64,
    mu: f64,
    cfg: &SolverConfig,
) -> Result<Option<f64>> {
    let supply = Supply::new(protocol, f0, cfg)?;
    match round_state(strategy, &supply, f0, d, eta_link, mu, cfg)? {
        Ok(s) => Ok(Some(logical_error_rate(
            d,
            NoisePoint::new(s.p_bell, s.effective_local)?,
            &cfg.params,
        )?)),
        Err(_) => Ok(None),
    }
}

/// Operating regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeKind {
    /// Generation keeps pace with every round at 99 % confidence.
    OnTheFly,
    /// Generation lags consumption but buffered pairs stay usable.
    NoExpire,
    Infeasible,
}

impl std::fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RegimeKind::OnTheFly => "on-the-fly",
            RegimeKind::NoExpire => "no-expire",
            RegimeKind::Infeasible => "infeasible",
        })
    }
}

/// Regime plus the quantities that decided it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub kind: RegimeKind,
    pub eta_link: f64,
    /// Expected pairs generated per round, `λ·T_round`.
    pub n_gen: f64,
    /// Pairs consumed per round (converged when available, static otherwise).
    pub c_round: f64,
}

/// Fixed point of the distance iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergedPlan {
    pub strategy: Strategy,
    pub protocol: String,
    pub distance: u32,
    pub static_distance: u32,
    pub stored_fidelity: f64,
    pub p_bell: f64,
    pub idle_error: f64,
    pub effective_local: f64,
    pub achieved_p_l: f64,
    pub pairs_per_round: f64,
    pub pairs_per_cycle: f64,
    pub static_pairs_per_cycle: f64,
    pub t_round: f64,
    /// `T_round / τ_coh`.
    pub nu: f64,
    /// Number of distance updates after the static seed.
    pub iterations: usize,
    pub trace: Vec<u32>,
    pub regime: Regime,
}

/// Solver result: a plan, or the reason none exists with the iterates so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum SolveOutcome {
    Converged(ConvergedPlan),
    Infeasible {
        reason: InfeasibleReason,
        trace: Vec<u32>,
    },
}

impl SolveOutcome {
    pub fn plan(&self) -> Option<&ConvergedPlan> {
        match self {
            SolveOutcome::Converged(p) => Some(p),
            SolveOutcome::Infeasible { .. } => None,
        }
    }
}

/// One step of the iteration: the distance required at the rates implied by `d`.
pub fn next_distance(
    strategy: Strategy,
    protocol: Option<&ProtocolSpec>,
    f0: f64,
    d: u32,
    eta_link: f64,
    mu: f64,
    cfg: &SolverConfig,
) -> Result<std::result::Result<u32, InfeasibleReason>> {
    let supply = Supply::new(protocol, f0, cfg)?;
    step(strategy, &supply, f0, d, eta_link, mu, cfg).map(|r| r.map(|(d, _, _)| d))
}

fn step(
    strategy: Strategy,
    supply: &Supply,
    f0: f64,
    d: u32,
    eta_link: f64,
    mu: f64,
    cfg: &SolverConfig,
) -> Result<std::result::Result<(u32, RoundState, f64), InfeasibleReason>> {
    let state = match round_state(strategy, supply, f0, d, eta_link, mu, cfg)? {
        Ok(s) => s,
        Err(r) => return Ok(Err(r)),
    };
    let noise = NoisePoint::new(state.p_bell, state.effective_local)?;
    match min_distance(noise, cfg.p_l_target, &cfg.params, cfg.d_max)? {
        DistanceResult::Feasible {
            distance,
            achieved_p_l,
        } => Ok(Ok((distance, state, achieved_p_l))),
        DistanceResult::Infeasible { reason, .. } => Ok(Err(reason.into())),
    }
}

/// Iterates `d ← d*(rates(d))` from the static distance until it stops moving.
///
/// `eta_link` may be infinite (no decay).
pub fn solve_fixed_point(
    strategy: Strategy,
    protocol: Option<&ProtocolSpec>,
    f0: f64,
    eta_link: f64,
    mu: f64,
    tau_se: f64,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    check_positive("eta_link", eta_link)?;
    check_positive("tau_se", tau_se)?;
    if !(mu >= 1.0) {
        return Err(PlanError::InvalidInput(format!(
            "mu must be at least 1, got {mu}"
        )));
    }
    let supply = Supply::new(protocol, f0, cfg)?;
    if f0 <= cfg.f_discard {
        return Ok(SolveOutcome::Infeasible {
            reason: InfeasibleReason::Expired,
            trace: vec![],
        });
    }

    let static_noise = NoisePoint::new(supply.p_bell_static, cfg.p_phys)?;
    let d0 = match min_distance(static_noise, cfg.p_l_target, &cfg.params, cfg.d_max)? {
        DistanceResult::Feasible { distance, .. } => distance,
        DistanceResult::Infeasible { .. } => {
            return Ok(SolveOutcome::Infeasible {
                reason: InfeasibleReason::Static,
                trace: vec![],
            })
        }
    };

    let mut trace = vec![d0];
    let mut d = d0;
    loop {
        let (next, state, achieved) = match step(strategy, &supply, f0, d, eta_link, mu, cfg)? {
            Ok(v) => v,
            Err(reason) => return Ok(SolveOutcome::Infeasible { reason, trace }),
        };
        if next == d {
            let c_round = state.c_round;
            let t_round = supply.t_round(tau_se);
            let n_round = cfg.scheme.pairs_per_round(d0)?;
            return Ok(SolveOutcome::Converged(ConvergedPlan {
                strategy,
                protocol: supply.name(),
                distance: d,
                static_distance: d0,
                stored_fidelity: state.stored_fidelity,
                p_bell: state.p_bell,
                idle_error: state.idle_error,
                effective_local: state.effective_local,
                achieved_p_l: achieved,
                pairs_per_round: c_round,
                pairs_per_cycle: c_round * f64::from(d),
                static_pairs_per_cycle: supply.overhead * f64::from(n_round) * f64::from(d0),
                t_round,
                nu: 0.0,
                iterations: trace.len() - 1,
                trace,
                regime: Regime {
                    kind: RegimeKind::NoExpire,
                    eta_link,
                    n_gen: 0.0,
                    c_round,
                },
            }));
        }
        trace.push(next);
        if trace.len() > MAX_ITERATIONS {
            return Err(PlanError::NonConvergence {
                iterations: trace.len() - 1,
                trace,
            });
        }
        d = next;
    }
}

/// Self-consistent distance for a concrete link; fills in the regime.
pub fn self_consistent_distance(
    strategy: Strategy,
    protocol: Option<&ProtocolSpec>,
    link: &LinkParams,
    f0: f64,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    link.validate()?;
    let eta = link.eta_link();
    let mut out = solve_fixed_point(strategy, protocol, f0, eta, link.mu, link.tau_se, cfg)?;
    if let SolveOutcome::Converged(plan) = &mut out {
        plan.nu = plan.t_round / link.tau_coh;
        let n_gen = link.lam * plan.t_round;
        plan.regime = Regime {
            kind: if otf_condition(link.lam, plan.t_round, plan.pairs_per_round) {
                RegimeKind::OnTheFly
            } else {
                RegimeKind::NoExpire
            },
            eta_link: eta,
            n_gen,
            c_round: plan.pairs_per_round,
        };
    }
    Ok(out)
}

/// On-the-fly when the converged plan's round is covered at 99 %, no-expire
/// when the solver converges otherwise, infeasible when it does not.
pub fn classify_regime(
    strategy: Strategy,
    protocol: Option<&ProtocolSpec>,
    link: &LinkParams,
    f0: f64,
    cfg: &SolverConfig,
) -> Result<Regime> {
    let eta = link.eta_link();
    let out = match self_consistent_distance(strategy, protocol, link, f0, cfg) {
        Ok(o) => o,
        Err(PlanError::NonConvergence { trace, .. }) => SolveOutcome::Infeasible {
            reason: InfeasibleReason::ExceedsMaxDistance,
            trace,
        },
        Err(e) => return Err(e),
    };
    Ok(match out {
        SolveOutcome::Converged(plan) => plan.regime,
        SolveOutcome::Infeasible { .. } => {
            let supply = Supply::new(protocol, f0, cfg)?;
            Regime {
                kind: RegimeKind::Infeasible,
                eta_link: eta,
                n_gen: link.lam * supply.t_round(link.tau_se),
                c_round: f64::NAN,
            }
        }
    })
}

/// Smallest `η_link` at which the solver converges, with the production bound
/// at the resulting distance for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkEfficiency {
    pub eta_min: f64,
    pub distance: u32,
    pub c_round: f64,
    /// `C/ln(F₀/F_d) · (1 + 2.33/√C)` at the converged distance.
    pub production_bound: f64,
}

const ETA_CEILING: f64 = 1e15;

/// Bisection in `log η` for the feasibility edge of the self-consistent solver.
pub fn min_link_efficiency(
    strategy: Strategy,
    protocol: Option<&ProtocolSpec>,
    f0: f64,
    mu: f64,
    cfg: &SolverConfig,
) -> Result<LinkEfficiency> {
    let converges = |eta: f64| -> Result<bool> {
        match solve_fixed_point(strategy, protocol, f0, eta, mu, 1.0, cfg) {
            Ok(o) => Ok(o.plan().is_some()),
            Err(PlanError::NonConvergence { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    };

    match solve_fixed_point(strategy, protocol, f0, f64::INFINITY, mu, 1.0, cfg)? {
        SolveOutcome::Converged(_) => {}
        SolveOutcome::Infeasible { reason, .. } => {
            return Err(PlanError::StaticInfeasible(format!(
                "{strategy:?} with {} at F0 = {f0}: {reason:?}",
                protocol.map_or("raw", |p| p.name.as_str())
            )))
        }
    }
    if !converges(ETA_CEILING)? {
        return Ok(LinkEfficiency {
            eta_min: f64::INFINITY,
            distance: 0,
            c_round: f64::NAN,
            production_bound: f64::INFINITY,
        });
    }

    let mut hi = 1.0f64;
    while !converges(hi)? {
        hi *= 2.0;
    }
    let mut lo = hi / 2.0;
    while lo > 1e-12 && converges(lo)? {
        hi = lo;
        lo /= 2.0;
    }
    while hi / lo - 1.0 > 1e-10 {
        let mid = (lo * hi).sqrt();
        if converges(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let plan = solve_fixed_point(strategy, protocol, f0, hi, mu, 1.0, cfg)?;
    let plan = plan.plan().expect("hi converges");
    let c = plan.pairs_per_round;
    Ok(LinkEfficiency {
        eta_min: hi,
        distance: plan.distance,
        c_round: c,
        production_bound: c / (f0 / cfg.f_discard).ln() * (1.0 + Z_99 / c.sqrt()),
    })
}

/// Decay-only feasibility bound on `η_link` for raw pairs at distance `d`:
/// `n_round/ln(F₀/F_d)` for S1 and `d` times that for S2.
pub fn raw_feasibility_bound(
    strategy: Strategy,
    d: u32,
    f0: f64,
    cfg: &SolverConfig,
) -> Result<f64> {
    let n = f64::from(cfg.scheme.pairs_per_round(d)?);
    let window = (f0 / cfg.f_discard).ln();
    let s1 = n / window;
    Ok(match strategy {
        Strategy::RoundByRound => s1,
        Strategy::PreBuffered => f64::from(d) * s1,
    })
}

/// One row of a regime map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub fidelity: f64,
    pub lambda: f64,
    pub strategy: Strategy,
    pub protocol: String,
    pub regime: RegimeKind,
    pub distance: Option<u32>,
    pub pairs_per_cycle_static: Option<f64>,
    pub pairs_per_cycle_converged: Option<f64>,
}

pub fn regime_row(
    strategy: Strategy,
    protocol: Option<&ProtocolSpec>,
    link: &LinkParams,
    f0: f64,
    cfg: &SolverConfig,
) -> Result<RegimeRow> {
    let name = protocol.map_or_else(|| crate::cost_model::RAW.to_string(), |p| p.name.clone());
    let out = match self_consistent_distance(strategy, protocol, link, f0, cfg) {
        Ok(o) => Some(o),
        Err(PlanError::NonConvergence { .. }) => None,
        Err(e) => return Err(e),
    };
    let plan = out.as_ref().and_then(SolveOutcome::plan);
    let static_cost = match plan {
        Some(p) => Some(p.static_pairs_per_cycle),
        None => {
            let supply = Supply::new(protocol, f0, cfg)?;
            let noise = NoisePoint::new(supply.p_bell_static, cfg.p_phys)?;
            min_distance(noise, cfg.p_l_target, &cfg.params, cfg.d_max)?
                .distance()
                .map(|d| -> Result<f64> { Ok(supply.c_round(d, cfg)? * f64::from(d)) })
                .transpose()?
        }
    };
    Ok(RegimeRow {
        fidelity: f0,
        lambda: link.lam,
        strategy,
        protocol: name,
        regime: plan.map_or(RegimeKind::Infeasible, |p| p.regime.kind),
        distance: plan.map(|p| p.distance),
        pairs_per_cycle_static: static_cost,
        pairs_per_cycle_converged: plan.map(|p| p.pairs_per_cycle),
    })
}

#[cfg(test)]
mod tests {
    use super::Strategy;
    use super::*;
    use crate::distillation::ProtocolCatalog;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn collection_examples() {
        let s = collection_time_stats(9, 1000.0).unwrap();
        assert_relative_eq!(s.mean, 0.009, epsilon = 1e-15);
        assert_relative_eq!(s.variance, 9e-6, epsilon = 1e-18);
        assert_relative_eq!(s.t99, 0.01599, epsilon = 1e-5);
        assert_relative_eq!(collection_time_stats(1, 250.0).unwrap().mean, 0.004);
        assert!(collection_time_stats(0, 1.0).is_err());
        assert!(collection_time_stats(3, 0.0).is_err());
    }

    #[test]
    fn decay_examples() {
        assert_eq!(decayed_fidelity(0.93, 0.0, 10.0), 0.93);
        assert_relative_eq!(decayed_fidelity(0.95, 0.915, 10.0), 0.867, epsilon = 1e-3);
        assert_relative_eq!(decayed_fidelity(0.94, 10.0, 65.0), 0.81, epsilon = 5e-3);
        assert_relative_eq!(
            decayed_fidelity_with(DecayModel::Depolarizing, 0.9, 1e6, 1.0),
            0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn discard_examples() {
        assert_eq!(discard_time(0.867, 0.867, 10.0).unwrap(), 0.0);
        assert_relative_eq!(
            discard_time(0.95, 0.867, 10.0).unwrap(),
            0.915,
            epsilon = 1e-3
        );
        assert_relative_eq!(
            discard_time(0.99, 0.867, 10.0).unwrap(),
            1.3267,
            epsilon = 1e-3
        );
        assert!(matches!(
            discard_time(0.8, 0.867, 10.0),
            Err(PlanError::AlreadyExpired { .. })
        ));
    }

    #[test]
    fn otf_examples() {
        assert!(otf_condition(1e9, 1e-3, 9.0));
        assert!(!otf_condition(1.0, 1e-3, 9.0));
        let root = ((Z_99 + (Z_99 * Z_99 + 36.0).sqrt()) / 2.0).powi(2);
        assert_relative_eq!(root, 19.2, epsilon = 0.05);
        assert!(otf_condition(root * 1000.0 * (1.0 + 1e-9), 1e-3, 9.0));
        assert!(!otf_condition(root * 1000.0 * (1.0 - 1e-6), 1e-3, 9.0));
    }

    #[test]
    fn stored_fidelity_examples() {
        let b = otf_stored_fidelity_bound(0.97, 0.0, 10.0);
        assert_eq!(b.fidelity, 0.97);
        let b = otf_stored_fidelity_bound(0.97, 1e-3, 10.0);
        assert_relative_eq!(b.fidelity, 0.97 * (-1e-4f64).exp());
        assert_eq!(b.nu, 1e-3 / 10.0);
        assert_relative_eq!(b.first_order, 0.97 * (1.0 - 1e-4));

        assert_eq!(strategy1_stored_fidelity(0.95, 9.0, f64::INFINITY), 0.95);
        assert_relative_eq!(
            strategy1_stored_fidelity(0.95, 9.0, 1e4),
            0.94915,
            epsilon = 1e-5
        );
        assert_relative_eq!(
            strategy1_stored_fidelity(0.97, 9.0, 1.6e4),
            0.96945,
            epsilon = 1e-5
        );

        assert_eq!(
            strategy2_stored_fidelity(0.95, 1, 9.0, 1e4),
            strategy1_stored_fidelity(0.95, 9.0, 1e4)
        );
        let s2 = strategy2_stored_fidelity(0.95, 5, 9.0, 1e4);
        assert_relative_eq!(s2, 0.95 * (-4.5e-3f64).exp(), max_relative = 1e-15);
        let ratio = s2 / strategy1_stored_fidelity(0.95, 9.0, 1e4);
        assert_relative_eq!(ratio, (-3.6e-3f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn idle_examples() {
        assert_eq!(idle_error(9.0, 5.0, f64::INFINITY), 0.0);
        assert_relative_eq!(idle_error(9.0, 5.0, 1e4), 1.80e-4, epsilon = 1e-6);
        assert_relative_eq!(idle_error(9.0, 1.0, 1e4), 9.0e-4, epsilon = 1e-6);
    }

    #[test]
    fn link_validation() {
        let l = LinkParams::from_components(2, 1e6, 5e-4).unwrap();
        assert_relative_eq!(l.lam, 1000.0);
        let mut bad = l;
        bad.lam = 900.0;
        assert!(bad.validate().is_err());
        let mut bad = LinkParams::new(10.0);
        bad.mu = 0.5;
        assert!(bad.validate().is_err());
        assert_relative_eq!(LinkParams::new(250.0).rescaled(4.0).eta_link(), 2500.0);
    }

    #[test]
    fn no_decay_returns_static_seed() {
        let cfg = SolverConfig::default();
        let out = solve_fixed_point(
            Strategy::RoundByRound,
            None,
            0.95,
            f64::INFINITY,
            5.0,
            1e-3,
            &cfg,
        )
        .unwrap();
        let plan = out.plan().unwrap();
        assert_eq!(plan.iterations, 0);
        assert_eq!(plan.distance, plan.static_distance);
    }

    fn least_fixed_point(strategy: Strategy, f0: f64, eta: f64, cfg: &SolverConfig) -> Option<u32> {
        (3..=cfg.d_max)
            .step_by(2)
            .find(|&d| next_distance(strategy, None, f0, d, eta, 5.0, cfg).unwrap() == Ok(d))
    }

    #[test]
    fn converged_matches_exhaustive_scan() {
        let cfg = SolverConfig::default();
        let link = LinkParams::new(5000.0);
        for strategy in [Strategy::RoundByRound, Strategy::PreBuffered] {
            let out = self_consistent_distance(strategy, None, &link, 0.95, &cfg).unwrap();
            let plan = out.plan().unwrap();
            assert!(plan.distance >= plan.static_distance);
            assert_eq!(
                Some(plan.distance),
                least_fixed_point(strategy, 0.95, link.eta_link(), &cfg)
            );
        }
    }

    #[test]
    fn stringent_fails_first_at_low_rate() {
        let cfg = SolverConfig::default();
        let link = LinkParams::new(1000.0);
        let catalog = ProtocolCatalog::builtin();
        let stringent = catalog.get("stringent").unwrap();
        let grid: Vec<f64> = (0..=90).map(|i| 0.90 + i as f64 * 1e-3).collect();
        let feasible = |p: Option<&ProtocolSpec>| -> Vec<bool> {
            grid.iter()
                .map(|&f| {
                    classify_regime(Strategy::RoundByRound, p, &link, f, &cfg)
                        .unwrap()
                        .kind
                        != RegimeKind::Infeasible
                })
                .collect()
        };
        let raw = feasible(None);
        let st = feasible(Some(stringent));
        assert!(raw.iter().any(|&x| x));
        let first = |v: &[bool]| v.iter().position(|&x| x).unwrap_or(v.len());
        assert!(first(&st) > first(&raw) || st.iter().all(|&x| !x));
    }

    #[test]
    fn link_efficiency_is_finite_and_bounded() {
        let cfg = SolverConfig::default();
        let e = min_link_efficiency(Strategy::RoundByRound, None, 0.95, 5.0, &cfg).unwrap();
        assert!(e.eta_min.is_finite() && e.eta_min > 0.0);
        // Expiry alone is necessary, not sufficient: idle-error feedback binds first.
        let decay_only =
            raw_feasibility_bound(Strategy::RoundByRound, e.distance, 0.95, &cfg).unwrap();
        assert!(e.eta_min >= decay_only);
        assert!(e.production_bound > decay_only);
        let just_below = solve_fixed_point(
            Strategy::RoundByRound,
            None,
            0.95,
            e.eta_min * 0.999,
            5.0,
            1e-3,
            &cfg,
        )
        .unwrap();
        assert!(just_below.plan().is_none());
    }

    #[test]
    fn expired_input_is_infeasible() {
        let cfg = SolverConfig::default();
        let out =
            solve_fixed_point(Strategy::RoundByRound, None, 0.867, 1e6, 5.0, 1e-3, &cfg).unwrap();
        assert!(matches!(
            out,
            SolveOutcome::Infeasible {
                reason: InfeasibleReason::Expired,
                ..
            }
        ));
    }

    #[test]
    fn raw_bound_ratio_is_distance() {
        let cfg = SolverConfig::default();
        for d in [3u32, 5, 7, 21] {
            let s1 = raw_feasibility_bound(Strategy::RoundByRound, d, 0.95, &cfg).unwrap();
            let s2 = raw_feasibility_bound(Strategy::PreBuffered, d, 0.95, &cfg).unwrap();
            assert_relative_eq!(s2 / s1, f64::from(d), max_relative = 1e-15);
        }
    }

    #[test]
    fn fast_link_is_on_the_fly() {
        let cfg = SolverConfig::default();
        let r = classify_regime(
            Strategy::RoundByRound,
            None,
            &LinkParams::new(1e9),
            0.97,
            &cfg,
        )
        .unwrap();
        assert_eq!(r.kind, RegimeKind::OnTheFly);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn iterates_never_decrease(f0 in 0.90f64..0.995, log_eta in 3.0f64..6.0, s2 in any::<bool>()) {
            let strategy = if s2 { Strategy::PreBuffered } else { Strategy::RoundByRound };
            let cfg = SolverConfig::default();
            let out = solve_fixed_point(strategy, None, f0, 10f64.powf(log_eta), 5.0, 1e-3, &cfg).unwrap();
            let trace = match &out {
                SolveOutcome::Converged(p) => p.trace.clone(),
                SolveOutcome::Infeasible { trace, .. } => trace.clone(),
            };
            prop_assert!(trace.windows(2).all(|w| w[0] <= w[1]));
            if let Some(p) = out.plan() {
                let again = next_distance(strategy, None, f0, p.distance, 10f64.powf(log_eta), 5.0, &cfg).unwrap();
                prop_assert_eq!(again, Ok(p.distance));
            }
        }

        #[test]
        fn otf_is_upward_closed_in_rate(f0 in 0.90f64..0.995, log_lam in 2.0f64..6.0, factor in 1.0f64..100.0) {
            let cfg = SolverConfig::default();
            let lo = classify_regime(Strategy::RoundByRound, None, &LinkParams::new(10f64.powf(log_lam)), f0, &cfg).unwrap();
            let hi = classify_regime(Strategy::RoundByRound, None, &LinkParams::new(10f64.powf(log_lam) * factor), f0, &cfg).unwrap();
            if lo.kind == RegimeKind::OnTheFly {
                prop_assert_eq!(hi.kind, RegimeKind::OnTheFly);
            }
        }

        #[test]
        fn feasibility_depends_only_on_eta(f0 in 0.90f64..0.995, log_lam in 1.0f64..5.0, x in 0.1f64..10.0) {
            let cfg = SolverConfig::default();
            let a = LinkParams::new(10f64.powf(log_lam));
            let b = a.rescaled(x);
            let ra = classify_regime(Strategy::RoundByRound, None, &a, f0, &cfg).unwrap();
            let rb = classify_regime(Strategy::RoundByRound, None, &b, f0, &cfg).unwrap();
            prop_assert_eq!(ra.kind == RegimeKind::Infeasible, rb.kind == RegimeKind::Infeasible);
        }
    }
}
