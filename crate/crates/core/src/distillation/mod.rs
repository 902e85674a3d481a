//! Entanglement distillation over Bell-diagonal states.
//!
//! A protocol is a list of selection steps acting on numbered registers, each
//! register holding one Bell pair. A step couples a kept register to a
//! sacrificial register with bilateral CNOTs, measures the sacrificial pair and
//! keeps the outcome only if both halves agree. With a `check` register the
//! sacrificial pair is itself checked in the conjugate basis before it is
//! measured (double selection).
//!
//! States are tracked as probability vectors over the Pauli frame of each pair
//! relative to `|Φ+⟩`. A step builds the joint frame distribution of the
//! (at most three) registers it touches, pushes it through the noisy circuit
//! exactly, conditions on the heralded outcomes and marginalises back onto the
//! kept register. Because registers entering a step have disjoint histories,
//! the marginal is exact.

mod catalog;
mod frame;

pub use catalog::ProtocolCatalog;

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, PlanError, Result};
use crate::error_model::FittedModelParams;
use frame::JointFrame;

/// Werner embedding upper bound on `p_raw` (fidelity 1/4).
pub const MAX_RAW_ERROR: f64 = 0.75;

/// Below this success probability a protocol is treated as degenerate.
pub const MIN_SUCCESS_PROBABILITY: f64 = 1e-12;

/// Target success probability for a batch of parallel attempts.
pub const MULTIPLEX_TARGET: f64 = 0.99;

/// A two-qubit state diagonal in the Bell basis, stored as the weights of the
/// Pauli frame `(I, X, Y, Z)` relative to the target pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellDiagonalState {
    pub p_i: f64,
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
}

impl BellDiagonalState {
    pub fn new(p_i: f64, p_x: f64, p_y: f64, p_z: f64) -> Result<Self> {
        let weights = [p_i, p_x, p_y, p_z];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(PlanError::InvalidInput(format!(
                "Bell-diagonal weights must be non-negative, got {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(PlanError::InvalidInput(format!(
                "Bell-diagonal weights must sum to 1, got {total}"
            )));
        }
        Ok(Self { p_i, p_x, p_y, p_z })
    }

    pub fn fidelity(&self) -> f64 {
        self.p_i
    }

    pub fn error(&self) -> f64 {
        1.0 - self.p_i
    }

    /// Weights indexed by frame code `x | z << 1` (I, X, Z, Y).
    pub(crate) fn frame_weights(&self) -> [f64; 4] {
        [self.p_i, self.p_x, self.p_z, self.p_y]
    }

    pub(crate) fn from_frame_weights(w: [f64; 4]) -> Self {
        Self {
            p_i: w[0],
            p_x: w[1],
            p_y: w[3],
            p_z: w[2],
        }
    }

    /// Depolarising twirl to the Werner state of equal fidelity.
    pub fn werner_twirl(&self) -> Self {
        let e = (1.0 - self.p_i) / 3.0;
        Self {
            p_i: self.p_i,
            p_x: e,
            p_y: e,
            p_z: e,
        }
    }
}

/// Werner state `(F, (1-F)/3, (1-F)/3, (1-F)/3)`.
pub fn werner_state(fidelity: f64) -> Result<BellDiagonalState> {
    check_probability("fidelity", fidelity)?;
    let e = (1.0 - fidelity) / 3.0;
    Ok(BellDiagonalState {
        p_i: fidelity,
        p_x: e,
        p_y: e,
        p_z: e,
    })
}

/// Which parity a selection step compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParityBasis {
    /// Z-parity comparison: detects bit flips (X, Y) on the kept pair.
    Z,
    /// X-parity comparison: detects phase flips (Z, Y) on the kept pair.
    X,
}

impl ParityBasis {
    pub fn conjugate(self) -> Self {
        match self {
            ParityBasis::Z => ParityBasis::X,
            ParityBasis::X => ParityBasis::Z,
        }
    }
}

/// One selection round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub basis: ParityBasis,
    /// Register that survives the step.
    pub keep: usize,
    /// Register measured in `basis` and discarded.
    pub consume: usize,
    /// Optional register that checks `consume` in the conjugate basis
    /// before it is measured; also discarded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<usize>,
}

impl Step {
    /// Two-qubit-gate layers plus the final measurement layer.
    pub fn op_count(&self) -> u32 {
        if self.check.is_some() {
            3
        } else {
            2
        }
    }

    fn registers(&self) -> Vec<usize> {
        let mut regs = vec![self.keep, self.consume];
        regs.extend(self.check);
        regs
    }
}

/// How a failed attempt is recovered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RestartPolicy {
    /// Any failed selection discards every raw pair of the attempt.
    #[default]
    FullRestart,
    /// A failed selection only rebuilds the registers that fed the failed step;
    /// pairs purified in independent branches are kept.
    SelectiveRetry,
}

/// State reduction applied to the kept register after each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Twirl {
    /// Keep the full Bell-diagonal weights.
    #[default]
    BellDiagonal,
    /// Reduce to a Werner state of the same fidelity.
    Werner,
}

/// A distillation protocol: named step sequence over `n_pairs` registers.
/// Register 0 carries the output pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub name: String,
    pub n_pairs: u32,
    pub op_count: u32,
    pub steps: Vec<Step>,
    #[serde(default)]
    pub restart_policy: RestartPolicy,
    #[serde(default)]
    pub twirl: Twirl,
}

impl ProtocolSpec {
    /// Checks register bookkeeping and the declared pair and op counts.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_pairs as usize;
        if n < 2 {
            return Err(PlanError::Catalog(format!(
                "{}: a protocol needs at least two input pairs",
                self.name
            )));
        }
        if self.steps.is_empty() {
            return Err(PlanError::Catalog(format!("{}: no steps", self.name)));
        }
        let mut consumed = vec![false; n];
        for (i, step) in self.steps.iter().enumerate() {
            let regs = step.registers();
            for &r in &regs {
                if r >= n {
                    return Err(PlanError::Catalog(format!(
                        "{}: step {i} uses register {r} but n_pairs = {n}",
                        self.name
                    )));
                }
                if consumed[r] {
                    return Err(PlanError::Catalog(format!(
                        "{}: step {i} uses register {r} after it was measured",
                        self.name
                    )));
                }
            }
            for (a, ra) in regs.iter().enumerate() {
                if regs[a + 1..].contains(ra) {
                    return Err(PlanError::Catalog(format!(
                        "{}: step {i} uses register {ra} twice",
                        self.name
                    )));
                }
            }
            if step.consume == 0 || step.check == Some(0) {
                return Err(PlanError::Catalog(format!(
                    "{}: step {i} measures the output register",
                    self.name
                )));
            }
            consumed[step.consume] = true;
            if let Some(c) = step.check {
                consumed[c] = true;
            }
        }
        let unused: Vec<usize> = (1..n).filter(|&r| !consumed[r]).collect();
        if !unused.is_empty() {
            return Err(PlanError::Catalog(format!(
                "{}: n_pairs = {n} but registers {unused:?} are never consumed",
                self.name
            )));
        }
        let ops: u32 = self.steps.iter().map(Step::op_count).sum();
        if ops != self.op_count {
            return Err(PlanError::Catalog(format!(
                "{}: declared op_count {} but steps need {ops}",
                self.name, self.op_count
            )));
        }
        Ok(())
    }

    /// Distillation circuit depth for a given duration of one operation layer.
    pub fn circuit_time(&self, op_time: f64) -> f64 {
        f64::from(self.op_count) * op_time
    }
}

/// Result of evaluating a protocol at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    /// Output error rate `1 - F_out`.
    pub p_eff: f64,
    /// Probability that every heralded check passes.
    pub p_succ: f64,
    /// Conditional pass probability of each step, in order.
    pub step_success: Vec<f64>,
    /// Full output state.
    pub output: BellDiagonalState,
}

impl ProtocolOutcome {
    /// Whether the protocol improved on its input error.
    pub fn is_effective(&self, p_raw: f64) -> bool {
        self.p_eff < p_raw
    }
}

fn check_local_noise(p_local: f64) -> Result<()> {
    let limit = FittedModelParams::default().p_th_local;
    if !(0.0..limit).contains(&p_local) {
        return Err(PlanError::InvalidInput(format!(
            "p_local must lie in [0, {limit}), got {p_local}"
        )));
    }
    Ok(())
}

/// Exact `(p_eff, p_succ)` of `protocol` fed with Werner pairs of error `p_raw`
/// under local noise `p_local`.
pub fn evaluate_protocol(
    protocol: &ProtocolSpec,
    p_raw: f64,
    p_local: f64,
) -> Result<ProtocolOutcome> {
    if !(0.0..=MAX_RAW_ERROR).contains(&p_raw) {
        return Err(PlanError::InvalidInput(format!(
            "p_raw must lie in [0, {MAX_RAW_ERROR}], got {p_raw}"
        )));
    }
    let input = werner_state(1.0 - p_raw)?;
    evaluate_state(protocol, &input, p_local)
}

/// Exact evaluation for arbitrary Bell-diagonal inputs.
///
/// Every two-qubit gate is followed, at each of the two nodes, by two-qubit
/// depolarising noise (each of the 15 non-identity Paulis with probability
/// `p_local / 15`); every single-qubit measurement outcome is flipped with
/// probability `p_local`.
pub fn evaluate_state(
    protocol: &ProtocolSpec,
    input: &BellDiagonalState,
    p_local: f64,
) -> Result<ProtocolOutcome> {
    protocol.validate()?;
    check_local_noise(p_local)?;

    let raw = match protocol.twirl {
        Twirl::BellDiagonal => *input,
        Twirl::Werner => input.werner_twirl(),
    };
    let mut registers: Vec<BellDiagonalState> = vec![raw; protocol.n_pairs as usize];
    let mut step_success = Vec::with_capacity(protocol.steps.len());
    let mut p_succ = 1.0;

    for step in &protocol.steps {
        let (kept, pass) = apply_step(step, &registers, p_local);
        if pass < MIN_SUCCESS_PROBABILITY {
            return Err(PlanError::DegenerateProtocol(format!(
                "{}: step success probability {pass:e} underflows",
                protocol.name
            )));
        }
        registers[step.keep] = match protocol.twirl {
            Twirl::BellDiagonal => kept,
            Twirl::Werner => kept.werner_twirl(),
        };
        step_success.push(pass);
        p_succ *= pass;
    }
    if p_succ < MIN_SUCCESS_PROBABILITY {
        return Err(PlanError::DegenerateProtocol(format!(
            "{}: success probability {p_succ:e} underflows",
            protocol.name
        )));
    }

    let output = registers[0];
    Ok(ProtocolOutcome {
        p_eff: output.error().max(0.0),
        p_succ,
        step_success,
        output,
    })
}

fn apply_step(
    step: &Step,
    registers: &[BellDiagonalState],
    p_local: f64,
) -> (BellDiagonalState, f64) {
    let x_basis = step.basis == ParityBasis::X;
    let load = |r: usize| {
        let w = registers[r].frame_weights();
        if x_basis {
            frame::hadamard_weights(w)
        } else {
            w
        }
    };

    // Slot 0 = keep, slot 1 = consume, slot 2 = check.
    let mut slots = vec![load(step.keep), load(step.consume)];
    if let Some(c) = step.check {
        slots.push(load(c));
    }
    let mut joint = JointFrame::product(&slots);

    joint.cnot(0, 1);
    joint.depolarize_pair(0, 1, p_local);
    joint.depolarize_pair(0, 1, p_local);
    if step.check.is_some() {
        joint.cnot(2, 1);
        joint.depolarize_pair(2, 1, p_local);
        joint.depolarize_pair(2, 1, p_local);
    }
    // Both halves of the sacrificial pair are read out in Z; the check pair in X.
    joint.flip_outcome(1, frame::X_BIT, p_local);
    joint.flip_outcome(1, frame::X_BIT, p_local);
    if step.check.is_some() {
        joint.flip_outcome(2, frame::Z_BIT, p_local);
        joint.flip_outcome(2, frame::Z_BIT, p_local);
    }

    let check_slot = step.check.map(|_| 2);
    let (weights, pass) = joint.postselect_keep(1, check_slot);
    let weights = if x_basis {
        frame::hadamard_weights(weights)
    } else {
        weights
    };
    (BellDiagonalState::from_frame_weights(weights), pass)
}

/// Expected raw pairs consumed per output pair.
///
/// Full restart charges every input of the attempt, `n_pairs / p_succ`. Selective
/// retry rebuilds only the registers feeding a failed step: a register's cost
/// after step `k` is `(cost before + cost of its sacrificial inputs) / p_k`.
pub fn raw_pairs_per_output(protocol: &ProtocolSpec, outcome: &ProtocolOutcome) -> Result<f64> {
    if !(outcome.p_succ > 0.0) {
        return Err(PlanError::DegenerateProtocol(format!(
            "{}: zero success probability",
            protocol.name
        )));
    }
    match protocol.restart_policy {
        RestartPolicy::FullRestart => Ok(f64::from(protocol.n_pairs) / outcome.p_succ),
        RestartPolicy::SelectiveRetry => {
            if outcome.step_success.len() != protocol.steps.len() {
                return Err(PlanError::InvalidInput(format!(
                    "{}: outcome has {} step probabilities for {} steps",
                    protocol.name,
                    outcome.step_success.len(),
                    protocol.steps.len()
                )));
            }
            let mut cost = vec![1.0f64; protocol.n_pairs as usize];
            for (step, &pass) in protocol.steps.iter().zip(&outcome.step_success) {
                let inputs = cost[step.consume] + step.check.map_or(0.0, |c| cost[c]);
                cost[step.keep] = (cost[step.keep] + inputs) / pass;
            }
            Ok(cost[0])
        }
    }
}

/// Expected raw pairs per syndrome round when attempts run one after another.
pub fn serial_raw_cost(
    protocol: &ProtocolSpec,
    outcome: &ProtocolOutcome,
    n_round: u32,
) -> Result<f64> {
    if n_round == 0 {
        return Err(PlanError::InvalidInput("n_round must be positive".into()));
    }
    Ok(raw_pairs_per_output(protocol, outcome)? * f64::from(n_round))
}

/// Parallel attempts needed so at least one succeeds with probability 0.99.
pub fn multiplexing_factor(p_succ: f64) -> Result<u32> {
    if !(p_succ > 0.0 && p_succ <= 1.0) {
        return Err(PlanError::DegenerateProtocol(format!(
            "success probability must lie in (0, 1], got {p_succ}"
        )));
    }
    if p_succ >= MULTIPLEX_TARGET {
        return Ok(1);
    }
    let k = ((1.0 - MULTIPLEX_TARGET).ln() / (1.0 - p_succ).ln()).ceil();
    // Guard against ln rounding just above an integer.
    let mut k = k.max(1.0) as u32;
    while k > 1 && 1.0 - (1.0 - p_succ).powi(k as i32 - 1) >= MULTIPLEX_TARGET - 1e-12 {
        k -= 1;
    }
    Ok(k)
}

/// Raw pairs per syndrome round with `k`-fold parallel attempts.
pub fn parallel_raw_cost(
    protocol: &ProtocolSpec,
    outcome: &ProtocolOutcome,
    n_round: u32,
) -> Result<u64> {
    if n_round == 0 {
        return Err(PlanError::InvalidInput("n_round must be positive".into()));
    }
    let k = multiplexing_factor(outcome.p_succ)?;
    Ok(u64::from(n_round) * u64::from(protocol.n_pairs) * u64::from(k))
}
