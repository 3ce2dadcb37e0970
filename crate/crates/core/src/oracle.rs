//! Exact ground truth and the equivalence-class oracle `(a mod p_a) ∘ (b mod p_b)`.
//!
//! Results are `u128`: the widening product of two `u64` operands cannot
//! overflow, so every function here is exact over its whole input domain.

use serde::{Deserialize, Serialize};

use crate::corpus::{pow10, OpKind};

pub fn ground_truth(op: OpKind, a: u64, b: u64) -> u128 {
    match op {
        OpKind::Add => a as u128 + b as u128,
        OpKind::Mul => a as u128 * b as u128,
    }
}

/// The class `[(a, b)]_p` identified by its representative in `[0, p)²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EquivClass {
    pub rep_a: u64,
    pub rep_b: u64,
    pub modulus: u64,
}

impl EquivClass {
    pub fn contains(&self, x: u64, y: u64) -> bool {
        x % self.modulus == self.rep_a && y % self.modulus == self.rep_b
    }
}

pub fn canonical_rep(a: u64, b: u64, p: u64) -> EquivClass {
    assert!(p >= 1, "modulus must be positive");
    EquivClass {
        rep_a: a % p,
        rep_b: b % p,
        modulus: p,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub op: OpKind,
    pub p_a: u64,
    pub p_b: u64,
}

impl OracleSpec {
    /// Symmetric modulus `10^n` on both operands.
    pub fn symmetric(op: OpKind, n: u32) -> Self {
        let p = pow10(n);
        OracleSpec { op, p_a: p, p_b: p }
    }

    pub fn swapped(&self) -> Self {
        OracleSpec {
            op: self.op,
            p_a: self.p_b,
            p_b: self.p_a,
        }
    }
}

pub fn oracle_eval(spec: &OracleSpec, a: u64, b: u64) -> u128 {
    assert!(spec.p_a >= 1 && spec.p_b >= 1, "moduli must be positive");
    ground_truth(spec.op, a % spec.p_a, b % spec.p_b)
}

pub fn oracle_match(model_output: u128, spec: &OracleSpec, a: u64, b: u64) -> bool {
    model_output == oracle_eval(spec, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_truth_examples() {
        assert_eq!(ground_truth(OpKind::Add, 349, 705), 1054);
        assert_eq!(ground_truth(OpKind::Mul, 128, 256), 32768);
        assert_eq!(ground_truth(OpKind::Mul, 0, 99_999), 0);
        assert_eq!(
            ground_truth(OpKind::Mul, u64::MAX, u64::MAX),
            (u64::MAX as u128) * (u64::MAX as u128)
        );
    }

    #[test]
    fn canonical_rep_examples() {
        let c = canonical_rep(1349, 2705, 1000);
        assert_eq!((c.rep_a, c.rep_b), (349, 705));
        assert_eq!(canonical_rep(349, 705, 1000), c);
        let z = canonical_rep(1000, 1000, 1000);
        assert_eq!((z.rep_a, z.rep_b), (0, 0));
        assert!(c.contains(5349, 705));
        assert!(!c.contains(5348, 705));
    }

    #[test]
    fn oracle_examples() {
        let add = OracleSpec::symmetric(OpKind::Add, 3);
        let mul = OracleSpec::symmetric(OpKind::Mul, 3);
        assert_eq!(oracle_eval(&add, 1349, 2705), 1054);
        assert_eq!(oracle_eval(&mul, 1349, 2705), 246045);
        assert_eq!(oracle_eval(&mul, 3128, 4256), 32768);
        assert!(oracle_match(1054, &add, 1349, 2705));
        assert!(!oracle_match(4054, &add, 1349, 2705));
    }

    #[test]
    fn mixed_moduli() {
        let spec = OracleSpec {
            op: OpKind::Add,
            p_a: 1000,
            p_b: 10_000,
        };
        assert_eq!(oracle_eval(&spec, 1349, 2705), 349 + 2705);
        assert_eq!(oracle_eval(&spec.swapped(), 2705, 1349), 349 + 2705);
    }
}
