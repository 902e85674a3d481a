//! Fitted logical-error-rate model for remote lattice surgery and the
//! minimum-distance search built on top of it.
//!
//! The model gives the logical error rate per syndrome-extraction round of a
//! distance-`d` rotated surface code whose seam stabilizers consume Bell pairs
//! with error `p_bell` while every other operation fails with `p_local`:
//!
//! ```text
//! p_L = κ (d+1)^η [ A^((d+1)/2) + B^((d+1)/2) + Σ_{γ=1..d} (A M²)^(γ/2) B^((d+1-γ)/2) ]
//! A = p_bell / p_th_bell,  B = p_local / p_th_local,
//! M = 1 + α_c p_local p_th_bell / (1 - √B)
//! ```
//!
//! Every power is evaluated in log space so that distances of several hundred
//! do not underflow intermediate terms.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, PlanError, Result};

/// Largest distance at which the fitted constants are trusted without an
/// extrapolation warning.
pub const CALIBRATED_MAX_DISTANCE: u32 = 401;

/// Default upper bound for the distance search.
pub const DEFAULT_D_MAX: u32 = 1001;

/// The five fitted constants of the logical-error model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FittedModelParams {
    pub kappa: f64,
    pub eta: f64,
    pub alpha_c: f64,
    pub p_th_bell: f64,
    pub p_th_local: f64,
}

impl Default for FittedModelParams {
    fn default() -> Self {
        Self {
            kappa: 5.44e-2,
            eta: 5.34e-1,
            alpha_c: 3.15e2,
            p_th_bell: 0.153,
            p_th_local: 0.0102,
        }
    }
}

impl FittedModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa", self.kappa),
            ("eta", self.eta),
            ("alpha_c", self.alpha_c),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PlanError::InvalidInput(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("p_th_bell", self.p_th_bell),
            ("p_th_local", self.p_th_local),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(PlanError::InvalidInput(format!(
                    "{name} must lie in (0, 1), got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Crosstalk factor `M`; errors when `p_local` is at or above the local threshold.
    pub fn crosstalk(&self, p_local: f64) -> Result<f64> {
        let b = p_local / self.p_th_local;
        if b >= 1.0 {
            return Err(PlanError::ModelDomain(format!(
                "p_local = {p_local} is not below the local threshold {}",
                self.p_th_local
            )));
        }
        Ok(1.0 + self.alpha_c * p_local * self.p_th_bell / (1.0 - b.sqrt()))
    }
}

/// A Bell-pair / local error operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    pub p_bell: f64,
    pub p_local: f64,
}

impl NoisePoint {
    pub fn new(p_bell: f64, p_local: f64) -> Result<Self> {
        for (name, v) in [("p_bell", p_bell), ("p_local", p_local)] {
            if !(0.0..1.0).contains(&v) {
                return Err(PlanError::InvalidInput(format!(
                    "{name} must lie in [0, 1), got {v}"
                )));
            }
        }
        Ok(Self { p_bell, p_local })
    }

    /// Noise point for a raw Bell pair of fidelity `f0`.
    pub fn from_fidelity(f0: f64, p_local: f64) -> Result<Self> {
        check_probability("fidelity", f0)?;
        Self::new(1.0 - f0, p_local)
    }
}

/// Why a distance search gave up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Infeasibility {
    /// `p_bell` is at or above the effective threshold: `p_L` no longer falls with `d`.
    AboveThreshold,
    /// The target is not met by any odd distance up to `d_max`.
    ExceedsMaxDistance,
}

/// Outcome of [`min_distance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum DistanceResult {
    Feasible { distance: u32, achieved_p_l: f64 },
    Infeasible { reason: Infeasibility, d_max: u32 },
}

impl DistanceResult {
    pub fn distance(&self) -> Option<u32> {
        match *self {
            DistanceResult::Feasible { distance, .. } => Some(distance),
            DistanceResult::Infeasible { .. } => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, DistanceResult::Feasible { .. })
    }

    /// True when the distance lies beyond the range the fit was calibrated on.
    pub fn extrapolated(&self) -> bool {
        self.distance().is_some_and(|d| d > CALIBRATED_MAX_DISTANCE)
    }
}

pub(crate) fn check_distance(d: u32) -> Result<()> {
    if d < 3 || d.is_multiple_of(2) {
        return Err(PlanError::InvalidInput(format!(
            "code distance must be odd and at least 3, got {d}"
        )));
    }
    Ok(())
}

/// `x^e` for `x >= 0`, `e > 0`, computed as `exp(e ln x)`.
#[inline]
fn pow_log(ln_x: f64, exponent: f64) -> f64 {
    if ln_x == f64::NEG_INFINITY {
        0.0
    } else {
        (exponent * ln_x).exp()
    }
}

/// Logical error rate per syndrome-extraction round, clamped to `[0, 1]`.
pub fn logical_error_rate(d: u32, noise: NoisePoint, params: &FittedModelParams) -> Result<f64> {
    check_distance(d)?;
    let NoisePoint { p_bell, p_local } = noise;
    if !(0.0..1.0).contains(&p_bell) || !(0.0..1.0).contains(&p_local) {
        return Err(PlanError::InvalidInput(format!(
            "noise point ({p_bell}, {p_local}) outside [0, 1)"
        )));
    }
    let m = params.crosstalk(p_local)?;
    let a = p_bell / params.p_th_bell;
    let b = p_local / params.p_th_local;

    let ln_a = a.ln();
    let ln_b = b.ln();
    let ln_am2 = (a * m * m).ln();

    let half = f64::from(d + 1) / 2.0;
    let mut bracket = pow_log(ln_a, half) + pow_log(ln_b, half);
    // Exact term-by-term sum over the seam/bulk split.
    for gamma in 1..=d {
        let g = f64::from(gamma);
        let cross = if ln_am2 == f64::NEG_INFINITY || ln_b == f64::NEG_INFINITY {
            0.0
        } else {
            (0.5 * g * ln_am2 + 0.5 * (f64::from(d + 1) - g) * ln_b).exp()
        };
        bracket += cross;
    }
    let p_l = params.kappa * f64::from(d + 1).powf(params.eta) * bracket;
    Ok(p_l.clamp(0.0, 1.0))
}

/// Largest Bell-pair error for which the dominant cross term still decays with
/// distance, `p_th_bell / M²`.
pub fn effective_bell_threshold(p_local: f64, params: &FittedModelParams) -> Result<f64> {
    if !(p_local >= 0.0) {
        return Err(PlanError::InvalidInput(format!(
            "p_local must be non-negative, got {p_local}"
        )));
    }
    let m = params.crosstalk(p_local)?;
    Ok(params.p_th_bell / (m * m))
}

/// Smallest odd distance in `[3, d_max]` with `p_L <= target`.
///
/// The upper bracket is found by doubling from `d = 3`, then odd distances are
/// bisected. The returned distance always satisfies `p_L(d) <= target` and
/// either `d == 3` or `p_L(d - 2) > target`.
pub fn min_distance(
    noise: NoisePoint,
    p_l_target: f64,
    params: &FittedModelParams,
    d_max: u32,
) -> Result<DistanceResult> {
    if !(p_l_target > 0.0 && p_l_target < 1.0) {
        return Err(PlanError::InvalidInput(format!(
            "target logical error rate must lie in (0, 1), got {p_l_target}"
        )));
    }
    check_distance(d_max)?;

    let threshold = effective_bell_threshold(noise.p_local, params)?;
    if noise.p_bell >= threshold {
        return Ok(DistanceResult::Infeasible {
            reason: Infeasibility::AboveThreshold,
            d_max,
        });
    }

    let rate = |d: u32| logical_error_rate(d, noise, params);

    let p3 = rate(3)?;
    if p3 <= p_l_target {
        return Ok(DistanceResult::Feasible {
            distance: 3,
            achieved_p_l: p3,
        });
    }

    // lo fails the target, hi meets it.
    let mut lo = 3u32;
    let mut hi;
    loop {
        let candidate = (2 * lo + 1).min(d_max);
        if rate(candidate)? <= p_l_target {
            hi = candidate;
            break;
        }
        if candidate == d_max {
            return Ok(DistanceResult::Infeasible {
                reason: Infeasibility::ExceedsMaxDistance,
                d_max,
            });
        }
        lo = candidate;
    }

    while hi - lo > 2 {
        let mid = lo + 2 * ((hi - lo) / 4).max(1);
        if rate(mid)? <= p_l_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    Ok(DistanceResult::Feasible {
        distance: hi,
        achieved_p_l: rate(hi)?,
    })
}

/// Distance ratio `d_dist / d_raw`.
pub fn distance_ratio(d_dist: u32, d_raw: u32) -> Result<f64> {
    check_distance(d_dist)?;
    check_distance(d_raw)?;
    if d_dist > d_raw {
        return Err(PlanError::InvariantViolation(format!(
            "distilled distance {d_dist} exceeds raw distance {d_raw}"
        )));
    }
    Ok(f64::from(d_dist) / f64::from(d_raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> FittedModelParams {
        FittedModelParams::default()
    }

    /// Plain `powf` evaluation of the bracketed sum, kept separate from the
    /// log-space implementation.
    fn direct_oracle(d: u32, p_bell: f64, p_local: f64) -> f64 {
        let p = params();
        let a = p_bell / p.p_th_bell;
        let b = p_local / p.p_th_local;
        let m = 1.0 + p.alpha_c * p_local * p.p_th_bell / (1.0 - b.sqrt());
        let df = f64::from(d);
        let mut s = a.powf((df + 1.0) / 2.0) + b.powf((df + 1.0) / 2.0);
        for g in 1..=d {
            let g = f64::from(g);
            s += (a * m * m).powf(g / 2.0) * b.powf((df + 1.0 - g) / 2.0);
        }
        p.kappa * (df + 1.0).powf(p.eta) * s
    }

    #[test]
    fn zero_noise_gives_zero_rate() {
        for d in (3..=101).step_by(2) {
            let rate =
                logical_error_rate(d, NoisePoint::new(0.0, 0.0).unwrap(), &params()).unwrap();
            assert_eq!(rate, 0.0);
        }
    }

    #[test]
    fn matches_direct_evaluation() {
        let noise = NoisePoint::new(0.05, 0.001).unwrap();
        let got = logical_error_rate(7, noise, &params()).unwrap();
        // Frozen from a 30-digit evaluation of the same sum.
        assert_relative_eq!(got, 5.264_449_115_735_136e-3, max_relative = 1e-12);
        assert_relative_eq!(got, direct_oracle(7, 0.05, 0.001), max_relative = 1e-12);
    }

    #[test]
    fn anchor_distance_five_meets_1e3() {
        let noise = NoisePoint::new(0.0136, 0.001).unwrap();
        let p5 = logical_error_rate(5, noise, &params()).unwrap();
        assert!(p5 <= 1e-3);
        assert_relative_eq!(p5, 9.392_012_559_394_997e-4, max_relative = 1e-12);
        let got = min_distance(noise, 1e-3, &params(), DEFAULT_D_MAX).unwrap();
        assert_eq!(got.distance(), Some(5));
    }

    #[test]
    fn effective_threshold_values() {
        let p = params();
        assert_relative_eq!(
            effective_bell_threshold(0.001, &p).unwrap(),
            0.133_595_096_841_951,
            max_relative = 1e-12
        );
        assert_eq!(effective_bell_threshold(0.0, &p).unwrap(), 0.153);
        assert_relative_eq!(
            effective_bell_threshold(0.005, &p).unwrap(),
            0.047_032_587_453_575_14,
            max_relative = 1e-12
        );
        assert!(matches!(
            effective_bell_threshold(0.0102, &p),
            Err(PlanError::ModelDomain(_))
        ));
    }

    #[test]
    fn rejects_bad_distances_and_domain() {
        let noise = NoisePoint::new(0.01, 0.001).unwrap();
        assert!(matches!(
            logical_error_rate(4, noise, &params()),
            Err(PlanError::InvalidInput(_))
        ));
        assert!(matches!(
            logical_error_rate(1, noise, &params()),
            Err(PlanError::InvalidInput(_))
        ));
        let hot = NoisePoint::new(0.01, 0.011).unwrap();
        assert!(matches!(
            logical_error_rate(5, hot, &params()),
            Err(PlanError::ModelDomain(_))
        ));
    }

    #[test]
    fn above_threshold_is_infeasible() {
        let noise = NoisePoint::new(0.20, 0.001).unwrap();
        for target in [1e-3, 1e-6, 0.5] {
            let r = min_distance(noise, target, &params(), DEFAULT_D_MAX).unwrap();
            assert_eq!(
                r,
                DistanceResult::Infeasible {
                    reason: Infeasibility::AboveThreshold,
                    d_max: DEFAULT_D_MAX
                }
            );
        }
    }

    #[test]
    fn divergence_near_threshold_at_87_percent() {
        let noise = NoisePoint::new(0.13, 0.001).unwrap();
        let r = min_distance(noise, 1e-3, &params(), 401).unwrap();
        match r {
            DistanceResult::Feasible { distance, .. } => assert!(distance > 400),
            DistanceResult::Infeasible { reason, .. } => {
                assert_eq!(reason, Infeasibility::ExceedsMaxDistance)
            }
        }
    }

    #[test]
    fn distance_ratio_cases() {
        assert_eq!(distance_ratio(5, 5).unwrap(), 1.0);
        assert_relative_eq!(distance_ratio(5, 15).unwrap(), 1.0 / 3.0);
        assert!(matches!(
            distance_ratio(7, 5),
            Err(PlanError::InvariantViolation(_))
        ));
        let p = params();
        let raw = min_distance(
            NoisePoint::new(0.07, 0.001).unwrap(),
            1e-6,
            &p,
            DEFAULT_D_MAX,
        )
        .unwrap()
        .distance()
        .unwrap();
        let dist = min_distance(
            NoisePoint::new(0.01, 0.001).unwrap(),
            1e-6,
            &p,
            DEFAULT_D_MAX,
        )
        .unwrap()
        .distance()
        .unwrap();
        let rho = distance_ratio(dist, raw).unwrap();
        assert!(rho > 0.0 && rho < 1.0);
    }

    #[test]
    fn floor_distance_at_perfect_fidelity() {
        // d = 3 misses 1e-3 even without Bell noise.
        let r = min_distance(
            NoisePoint::new(0.0, 0.001).unwrap(),
            1e-3,
            &params(),
            DEFAULT_D_MAX,
        )
        .unwrap();
        assert_eq!(r.distance(), Some(5));
    }

    #[test]
    fn divergence_is_monotone_approaching_threshold() {
        let p = params();
        let threshold = effective_bell_threshold(0.001, &p).unwrap();
        let mut previous = 0;
        for frac in [0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 0.98, 0.99] {
            let noise = NoisePoint::new(frac * threshold, 0.001).unwrap();
            let d = min_distance(noise, 1e-6, &p, 100_001)
                .unwrap()
                .distance()
                .unwrap();
            assert!(
                d >= previous,
                "distance fell from {previous} to {d} at {frac}"
            );
            previous = d;
        }
        assert!(previous > 1000);
    }

    proptest! {
        #[test]
        fn rate_is_monotone_in_noise(
            d in (1u32..60).prop_map(|k| 2 * k + 1),
            p_bell in 0.0f64..0.2,
            dp_bell in 0.0f64..0.05,
            p_local in 0.0f64..0.009,
            dp_local in 0.0f64..0.001,
        ) {
            let p = params();
            let base = logical_error_rate(d, NoisePoint { p_bell, p_local }, &p).unwrap();
            let more_bell = logical_error_rate(d, NoisePoint { p_bell: p_bell + dp_bell, p_local }, &p).unwrap();
            let more_local = logical_error_rate(d, NoisePoint { p_bell, p_local: p_local + dp_local }, &p).unwrap();
            prop_assert!(more_bell >= base);
            prop_assert!(more_local >= base);
        }

        #[test]
        fn rate_decreases_with_distance_below_threshold(
            frac in 0.0f64..0.7,
            p_local in 0.0001f64..0.004,
            k in 1u32..150,
        ) {
            let p = params();
            let threshold = effective_bell_threshold(p_local, &p).unwrap();
            let noise = NoisePoint { p_bell: frac * threshold, p_local };
            let d = 2 * k + 1;
            let here = logical_error_rate(d, noise, &p).unwrap();
            let next = logical_error_rate(d + 2, noise, &p).unwrap();
            prop_assert!(next < here || here == 0.0);
        }

        #[test]
        fn min_distance_two_sided_witness(
            p_bell in 0.0f64..0.13,
            p_local in 0.0f64..0.004,
            log_target in -14.0f64..-2.0,
        ) {
            let p = params();
            let target = 10f64.powf(log_target);
            let noise = NoisePoint { p_bell, p_local };
            if let DistanceResult::Feasible { distance, achieved_p_l } =
                min_distance(noise, target, &p, DEFAULT_D_MAX).unwrap()
            {
                prop_assert!(distance % 2 == 1 && distance >= 3);
                prop_assert!(achieved_p_l <= target);
                if distance > 3 {
                    prop_assert!(logical_error_rate(distance - 2, noise, &p).unwrap() > target);
                }
            }
        }
    }
}
