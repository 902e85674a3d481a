//! Per-module physical-qubit accounting on a two-column patch grid.

use serde::{Deserialize, Serialize};

use crate::cost_model::{RoundScheme, StaticContext, RAW};
use crate::distillation::{evaluate_protocol, multiplexing_factor, ProtocolOutcome, ProtocolSpec};
use crate::error::{PlanError, Result};
use crate::error_model::{check_distance, min_distance, NoisePoint};
use crate::temporal::LinkParams;

/// Communication qubits with time-division multiplexing over the reset time.
pub fn comm_qubits(interfaces: u32, tau_reset: f64, attempt_rate: f64) -> Result<u64> {
    if interfaces == 0 {
        return Err(PlanError::InvalidInput(
            "at least one interface is required".into(),
        ));
    }
    let busy = tau_reset * attempt_rate;
    if !(busy >= 0.0 && busy.is_finite()) {
        return Err(PlanError::InvalidInput(format!(
            "tau_reset·attempt_rate must be finite and non-negative, got {busy}"
        )));
    }
    Ok(u64::from(interfaces) * (busy.ceil() as u64).max(1))
}

/// Memory qubits holding one round of seam pairs: `a·d − c` raw, times
/// `k · n_pairs` with distillation.
pub fn mem_qubits(
    d: u32,
    scheme: RoundScheme,
    distillation: Option<(&ProtocolSpec, &ProtocolOutcome)>,
) -> Result<u64> {
    let per_round = u64::from(scheme.pairs_per_round(d)?);
    match distillation {
        None => Ok(per_round),
        Some((p, outcome)) => {
            let k = multiplexing_factor(outcome.p_succ)?;
            Ok(per_round * u64::from(k) * u64::from(p.n_pairs))
        }
    }
}

/// Physical qubits of one surface-code patch.
pub fn patch_qubits(d: u32) -> u64 {
    2 * u64::from(d) * u64::from(d) - 1
}

/// Logical qubits that fit after overheads, `2·⌊(N − comm − mem + 2d)/(4d² + 3d − 2)⌋`.
pub fn logical_capacity(n_phy: u64, n_comm: u64, n_mem: u64, d: u32) -> Result<u64> {
    check_distance(d)?;
    let d = u64::from(d);
    let free = (n_phy + 2 * d).saturating_sub(n_comm + n_mem);
    let per_pair = 4 * d * d + 3 * d - 2;
    Ok(2 * (free / per_pair))
}

/// Grid qubits for `n_l` logical qubits: patches plus `3n_L/2 − 2` boundary strips.
pub fn grid_qubits(n_l: u64, d: u32) -> Result<u64> {
    check_distance(d)?;
    if !n_l.is_multiple_of(2) {
        return Err(PlanError::InvalidInput(format!(
            "logical qubit count must be even, got {n_l}"
        )));
    }
    if n_l == 0 {
        return Ok(0);
    }
    Ok(n_l * patch_qubits(d) + (3 * n_l / 2 - 2) * u64::from(d))
}

pub fn total_budget(n_l: u64, d: u32, n_comm: u64, n_mem: u64) -> Result<u64> {
    Ok(grid_qubits(n_l, d)? + n_comm + n_mem)
}

/// First-order capacity gain from shrinking the distance by `rho`.
pub fn first_order_gain(n_l_raw: u64, rho: f64) -> f64 {
    n_l_raw as f64 * (rho.powi(-2) - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub strategy: String,
    pub distance: u32,
    pub n_comm: u64,
    pub n_mem: u64,
    pub n_logical: u64,
    pub grid_qubits: u64,
    pub total: u64,
}

impl BudgetReport {
    pub fn build(strategy: &str, n_phy: u64, d: u32, n_comm: u64, n_mem: u64) -> Result<Self> {
        let n_logical = logical_capacity(n_phy, n_comm, n_mem, d)?;
        let grid = grid_qubits(n_logical, d)?;
        let report = Self {
            strategy: strategy.to_string(),
            distance: d,
            n_comm,
            n_mem,
            n_logical,
            grid_qubits: grid,
            total: grid + n_comm + n_mem,
        };
        if n_logical > 0 && report.total > n_phy {
            return Err(PlanError::InvariantViolation(format!(
                "{strategy}: budget {} exceeds {n_phy} physical qubits",
                report.total
            )));
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapacityStatus {
    /// At least two logical qubits fit.
    Feasible,
    /// Some strategy has a distance, but no strategy fits a two-patch grid.
    NoCapacity,
    /// No strategy meets the target at any allowed distance.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub fidelity: f64,
    pub status: CapacityStatus,
    /// Maximiser of `n_L` (raw wins ties).
    pub best: Option<BudgetReport>,
    /// Every strategy with a feasible distance, raw first.
    pub candidates: Vec<BudgetReport>,
    /// Strategies without a feasible distance.
    pub infeasible: Vec<String>,
}

impl CapacityReport {
    pub fn candidate(&self, strategy: &str) -> Option<&BudgetReport> {
        self.candidates.iter().find(|r| r.strategy == strategy)
    }
}

/// Compares raw consumption with each protocol by logical capacity.
pub fn best_strategy_for_capacity(
    n_phy: u64,
    f0: f64,
    p_l_target: f64,
    protocols: &[ProtocolSpec],
    link: &LinkParams,
    ctx: &StaticContext,
) -> Result<CapacityReport> {
    let interfaces = link.interfaces.unwrap_or(1);
    let n_comm = comm_qubits(interfaces, link.tau_reset, link.attempt_rate.unwrap_or(0.0))?;
    let raw_noise = NoisePoint::from_fidelity(f0, ctx.p_local)?;

    let mut candidates = Vec::new();
    let mut infeasible = Vec::new();

    match min_distance(raw_noise, p_l_target, &ctx.params, ctx.d_max)?.distance() {
        Some(d) => {
            let mem = mem_qubits(d, ctx.scheme, None)?;
            candidates.push(BudgetReport::build(RAW, n_phy, d, n_comm, mem)?);
        }
        None => infeasible.push(RAW.to_string()),
    }
    for p in protocols {
        let outcome = evaluate_protocol(p, raw_noise.p_bell, ctx.p_local)?;
        let noise = NoisePoint::new(outcome.p_eff, ctx.p_local)?;
        match min_distance(noise, p_l_target, &ctx.params, ctx.d_max)?.distance() {
            Some(d) => {
                let mem = mem_qubits(d, ctx.scheme, Some((p, &outcome)))?;
                candidates.push(BudgetReport::build(&p.name, n_phy, d, n_comm, mem)?);
            }
            None => infeasible.push(p.name.clone()),
        }
    }

    let best = candidates
        .iter()
        .fold(None, |best: Option<&BudgetReport>, c| match best {
            Some(b) if b.n_logical >= c.n_logical => Some(b),
            _ => Some(c),
        })
        .cloned();
    let status = match &best {
        None => CapacityStatus::Infeasible,
        Some(b) if b.n_logical < 2 => CapacityStatus::NoCapacity,
        Some(_) => CapacityStatus::Feasible,
    };
    Ok(CapacityReport {
        fidelity: f0,
        status,
        best,
        candidates,
        infeasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distillation::ProtocolCatalog;
    use proptest::prelude::*;

    #[test]
    fn comm_examples() {
        assert_eq!(comm_qubits(2, 1e-6, 1e6).unwrap(), 2);
        assert_eq!(comm_qubits(1, 3.2e-6, 1e6).unwrap(), 4);
        assert_eq!(comm_qubits(4, 0.0, 1e6).unwrap(), 4);
        assert!(comm_qubits(0, 0.0, 0.0).is_err());
    }

    #[test]
    fn mem_examples() {
        let s = RoundScheme::default();
        assert_eq!(mem_qubits(5, s, None).unwrap(), 9);
        assert_eq!(mem_qubits(3, s, None).unwrap(), 5);
        let c = ProtocolCatalog::builtin();
        let ds = c.get("double-select").unwrap();
        let mut out = evaluate_protocol(ds, 0.0, 0.0).unwrap();
        out.p_succ = 0.9;
        assert_eq!(mem_qubits(5, s, Some((ds, &out))).unwrap(), 54);
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(logical_capacity(3000, 2, 9, 5).unwrap(), 52);
        assert_eq!(logical_capacity(49, 0, 0, 5).unwrap(), 0);
        assert_eq!(patch_qubits(5), 49);
        assert_eq!(logical_capacity(10, 50, 50, 3).unwrap(), 0);
    }

    #[test]
    fn total_examples() {
        assert_eq!(total_budget(52, 5, 2, 9).unwrap(), 2939);
        assert_eq!(total_budget(2, 3, 0, 0).unwrap(), 2 * 17 + 3);
        assert_eq!(total_budget(0, 5, 2, 9).unwrap(), 11);
        assert!(total_budget(3, 5, 0, 0).is_err());
    }

    #[test]
    fn tiny_module_has_no_capacity() {
        let c = ProtocolCatalog::builtin();
        let r = best_strategy_for_capacity(
            40,
            0.97,
            1e-3,
            &c.select(&[]).unwrap(),
            &LinkParams::new(1000.0),
            &StaticContext::default(),
        )
        .unwrap();
        assert_eq!(r.status, CapacityStatus::NoCapacity);
        assert!(r.candidates.iter().all(|c| c.n_logical == 0));
    }

    #[test]
    fn raw_wins_capacity_ties_and_high_fidelity() {
        let c = ProtocolCatalog::builtin();
        let r = best_strategy_for_capacity(
            3000,
            0.99,
            1e-3,
            &c.select(&[]).unwrap(),
            &LinkParams::new(1000.0),
            &StaticContext::default(),
        )
        .unwrap();
        assert_eq!(r.best.unwrap().strategy, RAW);
    }

    #[test]
    fn gain_has_expected_order() {
        // Large module so the overheads are negligible.
        let n_phy = 10_000_000;
        let raw = logical_capacity(n_phy, 2, 0, 15).unwrap();
        let dist = logical_capacity(n_phy, 2, 0, 9).unwrap();
        let predicted = first_order_gain(raw, 9.0 / 15.0);
        let actual = (dist - raw) as f64;
        assert!(
            (actual - predicted).abs() / predicted < 0.1,
            "{actual} vs {predicted}"
        );
    }

    proptest! {
        #[test]
        fn reconstruction_fits(n_phy in 0u64..200_000, k in 1u32..40, comm in 0u64..50, mem in 0u64..5000) {
            let d = 2 * k + 1;
            let n_l = logical_capacity(n_phy, comm, mem, d).unwrap();
            prop_assert_eq!(n_l % 2, 0);
            if n_l > 0 {
                prop_assert!(total_budget(n_l, d, comm, mem).unwrap() <= n_phy);
                // One more pair of patches would not fit.
                prop_assert!(total_budget(n_l + 2, d, comm, mem).unwrap() > n_phy);
            }
        }

        #[test]
        fn capacity_monotone(n_phy in 0u64..200_000, k in 1u32..40, extra in 0u64..10_000) {
            let d = 2 * k + 1;
            let here = logical_capacity(n_phy, 2, 9, d).unwrap();
            prop_assert!(logical_capacity(n_phy + extra, 2, 9, d).unwrap() >= here);
            prop_assert!(logical_capacity(n_phy, 2, 9, d + 2).unwrap() <= here);
        }
    }
}
