//! Pauli-error sampling of distillation circuits, independent of the exact
//! frame evaluator.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stream_rng;
use crate::distillation::{ParityBasis, ProtocolSpec, Twirl, MAX_RAW_ERROR};
use crate::error::{PlanError, Result};

/// Per-pair error as two bits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Pauli {
    bit_flip: bool,
    phase_flip: bool,
}

impl Pauli {
    const I: Pauli = Pauli {
        bit_flip: false,
        phase_flip: false,
    };

    fn from_index(i: u8) -> Self {
        // 0 = I, 1 = X, 2 = Y, 3 = Z
        match i {
            0 => Pauli::I,
            1 => Pauli {
                bit_flip: true,
                phase_flip: false,
            },
            2 => Pauli {
                bit_flip: true,
                phase_flip: true,
            },
            _ => Pauli {
                bit_flip: false,
                phase_flip: true,
            },
        }
    }

    fn compose(self, other: Pauli) -> Pauli {
        Pauli {
            bit_flip: self.bit_flip ^ other.bit_flip,
            phase_flip: self.phase_flip ^ other.phase_flip,
        }
    }

    fn hadamard(self) -> Pauli {
        Pauli {
            bit_flip: self.phase_flip,
            phase_flip: self.bit_flip,
        }
    }

    /// Cyclic relabelling X → Y → Z → X, applied `k` times.
    fn cycle(self, k: u8) -> Pauli {
        let idx = match (self.bit_flip, self.phase_flip) {
            (false, false) => return self,
            (true, false) => 1u8,
            (true, true) => 2,
            (false, true) => 3,
        };
        Pauli::from_index((idx - 1 + k) % 3 + 1)
    }
}

fn sample_werner(rng: &mut ChaCha8Rng, p_raw: f64) -> Pauli {
    let u: f64 = rng.random();
    if u >= p_raw {
        Pauli::I
    } else {
        Pauli::from_index(rng.random_range(1..=3))
    }
}

/// One node's two-qubit depolarising event on registers `a` and `b`.
fn depolarize(rng: &mut ChaCha8Rng, regs: &mut [Pauli], a: usize, b: usize, p: f64) {
    if p > 0.0 && rng.random::<f64>() < p {
        let k: u8 = rng.random_range(1..16);
        regs[a] = regs[a].compose(Pauli::from_index(k % 4));
        regs[b] = regs[b].compose(Pauli::from_index(k / 4));
    }
}

fn readout_flip(rng: &mut ChaCha8Rng, p: f64) -> bool {
    p > 0.0 && rng.random::<f64>() < p
}

/// Runs one attempt; `Some(error on the output)` on success.
fn run_once(
    protocol: &ProtocolSpec,
    p_raw: f64,
    p_local: f64,
    rng: &mut ChaCha8Rng,
) -> Option<Pauli> {
    let mut regs: Vec<Pauli> = (0..protocol.n_pairs)
        .map(|_| sample_werner(rng, p_raw))
        .collect();
    for step in &protocol.steps {
        let x_basis = step.basis == ParityBasis::X;
        let involved: Vec<usize> = [Some(step.keep), Some(step.consume), step.check]
            .into_iter()
            .flatten()
            .collect();
        if x_basis {
            for &r in &involved {
                regs[r] = regs[r].hadamard();
            }
        }

        // CNOT keep -> consume.
        regs[step.consume].bit_flip ^= regs[step.keep].bit_flip;
        regs[step.keep].phase_flip ^= regs[step.consume].phase_flip;
        depolarize(rng, &mut regs, step.keep, step.consume, p_local);
        depolarize(rng, &mut regs, step.keep, step.consume, p_local);

        let mut pass = true;
        if let Some(check) = step.check {
            // CNOT check -> consume.
            regs[step.consume].bit_flip ^= regs[check].bit_flip;
            regs[check].phase_flip ^= regs[step.consume].phase_flip;
            depolarize(rng, &mut regs, check, step.consume, p_local);
            depolarize(rng, &mut regs, check, step.consume, p_local);
        }

        let mut z_parity = regs[step.consume].bit_flip;
        z_parity ^= readout_flip(rng, p_local);
        z_parity ^= readout_flip(rng, p_local);
        pass &= !z_parity;
        if let Some(check) = step.check {
            let mut x_parity = regs[check].phase_flip;
            x_parity ^= readout_flip(rng, p_local);
            x_parity ^= readout_flip(rng, p_local);
            pass &= !x_parity;
        }
        if !pass {
            return None;
        }

        if x_basis {
            for &r in &involved {
                regs[r] = regs[r].hadamard();
            }
        }
        if protocol.twirl == Twirl::Werner {
            let k: u8 = rng.random_range(0..3);
            regs[step.keep] = regs[step.keep].cycle(k);
        }
    }
    Some(regs[0])
}

/// Sampled estimate of a protocol's success probability and output fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledOutcome {
    pub samples: u64,
    pub successes: u64,
    pub p_succ: f64,
    pub p_succ_se: f64,
    /// Output fidelity conditioned on success.
    pub fidelity: f64,
    pub fidelity_se: f64,
}

const CHUNK: u64 = 1 << 14;

/// Samples `samples` independent attempts with Werner inputs of error `p_raw`.
pub fn sample_protocol(
    protocol: &ProtocolSpec,
    p_raw: f64,
    p_local: f64,
    samples: u64,
    seed: u64,
) -> Result<SampledOutcome> {
    protocol.validate()?;
    if !(0.0..=MAX_RAW_ERROR).contains(&p_raw) || !(0.0..1.0).contains(&p_local) {
        return Err(PlanError::InvalidInput(format!(
            "sampler needs p_raw in [0, {MAX_RAW_ERROR}] and p_local in [0, 1), got {p_raw}, {p_local}"
        )));
    }
    if samples == 0 {
        return Err(PlanError::InvalidInput("samples must be positive".into()));
    }
    let chunks = samples.div_ceil(CHUNK);
    let (successes, clean) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, 0, c);
            let n = CHUNK.min(samples - c * CHUNK);
            let mut ok = 0u64;
            let mut clean = 0u64;
            for _ in 0..n {
                if let Some(err) = run_once(protocol, p_raw, p_local, &mut rng) {
                    ok += 1;
                    clean += u64::from(err == Pauli::I);
                }
            }
            (ok, clean)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    let p = successes as f64 / samples as f64;
    let f = if successes > 0 {
        clean as f64 / successes as f64
    } else {
        f64::NAN
    };
    Ok(SampledOutcome {
        samples,
        successes,
        p_succ: p,
        p_succ_se: (p * (1.0 - p) / samples as f64).sqrt(),
        fidelity: f,
        fidelity_se: (f * (1.0 - f) / successes.max(1) as f64).sqrt(),
    })
}
