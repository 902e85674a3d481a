//! Joint Pauli-frame distributions over up to three Bell pairs.
//!
//! A pair's frame code is `x | z << 1` (I = 0, X = 1, Z = 2, Y = 3). A joint
//! configuration packs slot `i` into bits `2i..2i+2`.

pub(crate) const X_BIT: usize = 1;
pub(crate) const Z_BIT: usize = 2;

/// Swaps the X and Z weights (conjugation by bilateral Hadamard).
pub(crate) fn hadamard_weights(w: [f64; 4]) -> [f64; 4] {
    [w[0], w[2], w[1], w[3]]
}

#[derive(Debug, Clone)]
pub(crate) struct JointFrame {
    slots: usize,
    probs: Vec<f64>,
}

impl JointFrame {
    pub(crate) fn product(marginals: &[[f64; 4]]) -> Self {
        let slots = marginals.len();
        let size = 1usize << (2 * slots);
        let probs = (0..size)
            .map(|cfg| {
                marginals
                    .iter()
                    .enumerate()
                    .map(|(i, m)| m[(cfg >> (2 * i)) & 3])
                    .product()
            })
            .collect();
        Self { slots, probs }
    }

    fn code(cfg: usize, slot: usize) -> usize {
        (cfg >> (2 * slot)) & 3
    }

    fn permute(&mut self, f: impl Fn(usize) -> usize) {
        let mut next = vec![0.0; self.probs.len()];
        for (cfg, &p) in self.probs.iter().enumerate() {
            next[f(cfg)] += p;
        }
        self.probs = next;
    }

    /// Bilateral CNOT: X on the control spreads to the target, Z on the
    /// target spreads back to the control.
    pub(crate) fn cnot(&mut self, control: usize, target: usize) {
        self.permute(|cfg| {
            let c = Self::code(cfg, control);
            let t = Self::code(cfg, target);
            let t_new = t ^ (c & X_BIT);
            let c_new = c ^ (t & Z_BIT);
            let cleared = cfg & !(3 << (2 * control)) & !(3 << (2 * target));
            cleared | (c_new << (2 * control)) | (t_new << (2 * target))
        });
    }

    /// Two-qubit depolarising channel on one node's halves of pairs `a` and `b`.
    pub(crate) fn depolarize_pair(&mut self, a: usize, b: usize, p: f64) {
        if p == 0.0 {
            return;
        }
        let each = p / 15.0;
        let mut next: Vec<f64> = self.probs.iter().map(|q| q * (1.0 - p)).collect();
        for (cfg, &q) in self.probs.iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            for pa in 0..4usize {
                for pb in 0..4usize {
                    if pa == 0 && pb == 0 {
                        continue;
                    }
                    let moved = cfg ^ (pa << (2 * a)) ^ (pb << (2 * b));
                    next[moved] += q * each;
                }
            }
        }
        self.probs = next;
    }

    /// Flips the given frame bit of `slot` with probability `p`.
    pub(crate) fn flip_outcome(&mut self, slot: usize, bit: usize, p: f64) {
        if p == 0.0 {
            return;
        }
        let mut next: Vec<f64> = self.probs.iter().map(|q| q * (1.0 - p)).collect();
        for (cfg, &q) in self.probs.iter().enumerate() {
            next[cfg ^ (bit << (2 * slot))] += q * p;
        }
        self.probs = next;
    }

    /// Conditions on `consume` showing even Z-parity and `check` (if any)
    /// showing even X-parity; returns the normalised slot-0 marginal and the
    /// pass probability.
    pub(crate) fn postselect_keep(&self, consume: usize, check: Option<usize>) -> ([f64; 4], f64) {
        debug_assert!(consume < self.slots && check.is_none_or(|c| c < self.slots));
        let mut kept = [0.0; 4];
        for (cfg, &q) in self.probs.iter().enumerate() {
            if Self::code(cfg, consume) & X_BIT != 0 {
                continue;
            }
            if let Some(c) = check {
                if Self::code(cfg, c) & Z_BIT != 0 {
                    continue;
                }
            }
            kept[Self::code(cfg, 0)] += q;
        }
        let pass: f64 = kept.iter().sum();
        if pass > 0.0 {
            for w in &mut kept {
                *w /= pass;
            }
        }
        (kept, pass)
    }
}
