//! Instantaneous MDP rewards. All logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::belief::{BeliefVector, JointBelief, BELIEF_EPS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Entropy,
    Llr,
}

impl RewardKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardKind::Entropy => "entropy",
            RewardKind::Llr => "llr",
        }
    }
}

impl std::str::FromStr for RewardKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "entropy" => Ok(RewardKind::Entropy),
            "llr" => Ok(RewardKind::Llr),
            other => Err(format!("unknown reward kind `{other}` (expected entropy or llr)")),
        }
    }
}

/// Sensing-cost weighting for the decentralized reward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Regularizer η.
    pub eta: f64,
    /// Cost λ per observation.
    pub lambda: f64,
}

impl CostParams {
    pub fn new(eta: f64, lambda: f64) -> Result<Self, String> {
        if !(eta > 0.0) {
            return Err(format!("eta must be positive, got {eta}"));
        }
        if !(lambda > 0.0) {
            return Err(format!("lambda must be positive, got {lambda}"));
        }
        Ok(Self { eta, lambda })
    }

    pub fn per_observation(&self) -> f64 {
        self.eta * self.lambda
    }
}

fn clamp(x: f64) -> f64 {
    x.clamp(BELIEF_EPS, 1.0 - BELIEF_EPS)
}

/// `H(x) = −x ln x − (1−x) ln(1−x)`.
pub fn binary_entropy(x: f64) -> f64 {
    let x = clamp(x);
    -x * x.ln() - (1.0 - x) * (1.0 - x).ln()
}

/// `L(x) = x ln(x/(1−x)) + (1−x) ln((1−x)/x) = (2x − 1) ln(x/(1−x))`.
pub fn llr_stat(x: f64) -> f64 {
    let x = clamp(x);
    (2.0 * x - 1.0) * (x / (1.0 - x)).ln()
}

/// Uncertainty reduction between two belief vectors.
pub fn central_reward(kind: RewardKind, prev: &BeliefVector, next: &BeliefVector) -> f64 {
    debug_assert_eq!(prev.len(), next.len());
    let pairs = prev.as_slice().iter().zip(next.as_slice());
    match kind {
        RewardKind::Entropy => pairs.map(|(&a, &b)| binary_entropy(a) - binary_entropy(b)).sum(),
        RewardKind::Llr => pairs.map(|(&a, &b)| llr_stat(b) - llr_stat(a)).sum(),
    }
}

/// Central reward minus `η·λ·|A|`.
pub fn decentral_reward(
    kind: RewardKind,
    prev: &BeliefVector,
    next: &BeliefVector,
    num_selected: usize,
    cost: &CostParams,
) -> f64 {
    central_reward(kind, prev, next) - cost.per_observation() * num_selected as f64
}

/// Entropy reduction of the joint posterior.
pub fn joint_entropy_reward(prev: &JointBelief, next: &JointBelief) -> f64 {
    prev.entropy() - next.entropy()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(v: Vec<f64>) -> BeliefVector {
        BeliefVector::new(v).unwrap()
    }

    #[test]
    fn entropy_values() {
        assert!(binary_entropy(0.0).abs() < 1e-10);
        assert!(binary_entropy(1.0).abs() < 1e-10);
        assert!((binary_entropy(0.5) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((binary_entropy(0.8) - 0.500_402_423_538_188_4).abs() < 1e-12);
    }

    #[test]
    fn llr_values() {
        assert_eq!(llr_stat(0.5), 0.0);
        assert!((llr_stat(0.9) - 0.8 * 9f64.ln()).abs() < 1e-12);
        assert!((llr_stat(0.9) - 1.757_779_661_868_975_8).abs() < 1e-12);
    }

    #[test]
    fn llr_matches_two_term_definition() {
        for x in [0.01f64, 0.2, 0.37, 0.8, 0.999] {
            let direct = x * (x / (1.0 - x)).ln() + (1.0 - x) * ((1.0 - x) / x).ln();
            assert!((llr_stat(x) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn central_reward_examples() {
        let a = sig(vec![0.8, 0.3, 0.6]);
        assert_eq!(central_reward(RewardKind::Entropy, &a, &a), 0.0);
        assert_eq!(central_reward(RewardKind::Llr, &a, &a), 0.0);

        let prev = sig(vec![0.8, 0.8]);
        let next = sig(vec![0.64 / 0.68, 0.8]);
        let r = central_reward(RewardKind::Entropy, &prev, &next);
        // H(0.8) − H(16/17) evaluated independently: 0.500402 − 0.223718.
        assert!((r - 0.276_684_347_472_354_1).abs() < 1e-12, "{r}");
    }

    #[test]
    fn decentral_reward_examples() {
        let cost = CostParams::new(1.0, 5.0).unwrap();
        let a = sig(vec![0.7; 3]);
        assert_eq!(decentral_reward(RewardKind::Entropy, &a, &a, 0, &cost), 0.0);
        // Central part 0.3 from an entropy drop on one entry.
        let prev = sig(vec![0.5]);
        let target = std::f64::consts::LN_2 - 0.3;
        let x = bisect(|x| binary_entropy(x) - target, 0.5, 1.0);
        let next = sig(vec![x]);
        let r = decentral_reward(RewardKind::Entropy, &prev, &next, 2, &cost);
        assert!((r + 9.7).abs() < 1e-9);

        let small = CostParams::new(0.1, 5.0).unwrap();
        let prev = sig(vec![0.8]);
        let target = binary_entropy(0.8) - 0.2787;
        let next = sig(vec![bisect(|x| binary_entropy(x) - target, 0.8, 1.0)]);
        let r = decentral_reward(RewardKind::Entropy, &prev, &next, 1, &small);
        assert!((r + 0.2213).abs() < 1e-9);
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo).signum() == f(mid).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn cost_params_must_be_positive() {
        assert!(CostParams::new(0.0, 1.0).is_err());
        assert!(CostParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn grid_shape() {
        let h_half = binary_entropy(0.5);
        for k in 0..=1000 {
            let x = k as f64 / 1000.0;
            assert!(binary_entropy(x) >= 0.0 && binary_entropy(x) <= h_half + 1e-15);
            assert!(llr_stat(x) >= 0.0);
        }
    }

    proptest! {
        #[test]
        fn symmetric_about_half(x in 0.0f64..=1.0) {
            prop_assert!((binary_entropy(x) - binary_entropy(1.0 - x)).abs() < 1e-12);
            prop_assert!((llr_stat(x) - llr_stat(1.0 - x)).abs() < 1e-9 * (1.0 + llr_stat(x)));
        }

        #[test]
        fn entropy_reward_antisymmetric(a in proptest::collection::vec(0.0f64..=1.0, 4),
                                        b in proptest::collection::vec(0.0f64..=1.0, 4)) {
            let (a, b) = (sig(a), sig(b));
            let fwd = central_reward(RewardKind::Entropy, &a, &b);
            let back = central_reward(RewardKind::Entropy, &b, &a);
            prop_assert!((fwd + back).abs() < 1e-12);
        }
    }
}
