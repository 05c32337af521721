//! Posterior tracking.
//!
//! [`BeliefVector`] holds the per-process marginal posteriors `σ_i = P[s_i = 0 | y]`
//! and is advanced with the scalable recursion, which treats the observations at
//! each step as conditionally independent of the past given `s_i`:
//!
//! ```text
//! σ_i(k) = σ_i(k−1) Π_a L(y_a | s_i = 0)
//!          / [ σ_i(k−1) Π_a L(y_a | s_i = 0) + (1 − σ_i(k−1)) Π_a L(y_a | s_i = 1) ]
//! L(y_a | s_i = s) = Σ_{s'} p^{|s'−y_a|} (1−p)^{|1−s'−y_a|} P[s_a = s' | s_i = s]
//! ```
//!
//! The recursion is exact when every observed process is either independent of
//! `s_i` or a deterministic function of it. [`JointBelief`] keeps the exact
//! posterior over all `2^N` states; it is both the oracle for the recursion
//! and the state of the joint-pmf baseline.

use crate::world::{DependenceStructure, Observation, ProcessStates};
use crate::{Error, Result};

/// Floor and ceiling applied to every marginal belief entry.
pub const BELIEF_EPS: f64 = 1e-12;

/// Largest process count for which a joint posterior is materialised.
pub const MAX_JOINT_PROCESSES: usize = 20;

/// Marginal posterior probabilities of each process being normal.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefVector(Vec<f64>);

impl BeliefVector {
    /// Entries are clamped to `[ε, 1−ε]`.
    pub fn new(sigma: Vec<f64>) -> Result<Self> {
        if let Some(&x) = sigma.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidModel(format!("belief entry {x} is not a probability")));
        }
        Ok(Self(sigma.into_iter().map(clamp).collect()))
    }

    /// `σ(0) = q·1`.
    pub fn prior(n: usize, q: f64) -> Self {
        Self(vec![clamp(q); n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    /// Heap bytes held by the belief state.
    pub fn state_bytes(&self) -> usize {
        self.0.len() * std::mem::size_of::<f64>()
    }
}

fn clamp(x: f64) -> f64 {
    x.clamp(BELIEF_EPS, 1.0 - BELIEF_EPS)
}

/// Table of `P[s_a = s' | s_i = s]` for every ordered process pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseModel {
    n: usize,
    table: Vec<f64>,
}

impl PairwiseModel {
    pub fn from_dependence(dep: &DependenceStructure) -> Self {
        let n = dep.n();
        let (q, rho) = (dep.q(), dep.rho());
        let mut table = vec![0.0; n * n * 4];
        for a in 0..n {
            for i in 0..n {
                // Rows indexed by s, columns by s'.
                let rows: [[f64; 2]; 2] = if a == i {
                    [[1.0, 0.0], [0.0, 1.0]]
                } else if dep.partner(i) == Some(a) {
                    [
                        [q + rho * (1.0 - q), (1.0 - rho) * (1.0 - q)],
                        [(1.0 - rho) * q, (1.0 - q) + rho * q],
                    ]
                } else {
                    [[q, 1.0 - q], [q, 1.0 - q]]
                };
                for s in 0..2 {
                    for s2 in 0..2 {
                        table[Self::slot(n, a, i, s, s2)] = rows[s][s2];
                    }
                }
            }
        }
        Self { n, table }
    }

    /// Model in which every process is informative only about itself.
    pub fn self_only(n: usize, q: f64) -> Self {
        // An independent structure always builds; q is validated by callers.
        let dep = DependenceStructure::independent(n, q.clamp(0.0, 1.0))
            .expect("independent structure is always valid");
        Self::from_dependence(&dep)
    }

    fn slot(n: usize, a: usize, i: usize, s: usize, s2: usize) -> usize {
        ((a * n + i) * 2 + s) * 2 + s2
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `P[s_a = s' | s_i = s]`.
    pub fn conditional(&self, a: usize, s_prime: u8, i: usize, s: u8) -> f64 {
        self.table[Self::slot(self.n, a, i, s as usize, s_prime as usize)]
    }

    /// Heap bytes held by the table.
    pub fn state_bytes(&self) -> usize {
        self.table.len() * std::mem::size_of::<f64>()
    }
}

/// Channel probability `P[y | s]` for flip probability `p`.
fn channel(y: u8, s: u8, p: f64) -> f64 {
    if y == s {
        1.0 - p
    } else {
        p
    }
}

/// `P[y_a | s_i = s]`, marginalising `s_a` through the pairwise model.
pub fn likelihood(y_a: u8, a: usize, i: usize, s: u8, model: &PairwiseModel, p: f64) -> f64 {
    (0..2u8)
        .map(|s2| channel(y_a, s2, p) * model.conditional(a, s2, i, s))
        .sum()
}

/// One step of the marginal recursion. An empty observation leaves `sigma`
/// untouched, as does any observation carrying no information about `s_i`.
pub fn update_marginal(
    sigma: &BeliefVector,
    obs: &Observation,
    model: &PairwiseModel,
    p: f64,
) -> Result<BeliefVector> {
    let n = sigma.len();
    if model.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: model.n() });
    }
    if let Some(a) = obs.selected().find(|&a| a >= n) {
        return Err(Error::DimensionMismatch { expected: n, got: a + 1 });
    }
    let mut out = sigma.0.clone();
    if obs.is_empty() {
        return Ok(BeliefVector(out));
    }
    for (i, entry) in out.iter_mut().enumerate() {
        let mut l0 = 1.0;
        let mut l1 = 1.0;
        for &(a, y) in obs.entries() {
            l0 *= likelihood(y, a, i, 0, model, p);
            l1 *= likelihood(y, a, i, 1, model, p);
        }
        if l0 == l1 {
            if l0 == 0.0 {
                return Err(Error::Contradiction { process: i });
            }
            continue;
        }
        let prior = *entry;
        let num = prior * l0;
        let den = num + (1.0 - prior) * l1;
        *entry = clamp(num / den);
    }
    Ok(BeliefVector(out))
}

/// Exact posterior over all `2^N` state assignments; index bit `i` is `s_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointBelief {
    n: usize,
    pi: Vec<f64>,
}

impl JointBelief {
    pub fn prior(dep: &DependenceStructure) -> Result<Self> {
        let n = dep.n();
        check_joint_size(n)?;
        let pi = (0..1usize << n)
            .map(|r| dep.state_probability(&ProcessStates::from_index(n, r)))
            .collect();
        Ok(Self { n, pi })
    }

    pub fn from_probs(n: usize, pi: Vec<f64>) -> Result<Self> {
        check_joint_size(n)?;
        if pi.len() != 1 << n {
            return Err(Error::DimensionMismatch { expected: 1 << n, got: pi.len() });
        }
        if pi.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidModel("joint probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = pi.iter().sum();
        if total <= 0.0 {
            return Err(Error::JointContradiction);
        }
        Ok(Self { n, pi: pi.into_iter().map(|x| x / total).collect() })
    }

    /// Point mass on one state.
    pub fn point_mass(s: &ProcessStates) -> Result<Self> {
        let n = s.len();
        check_joint_size(n)?;
        let mut pi = vec![0.0; 1 << n];
        pi[s.to_index()] = 1.0;
        Ok(Self { n, pi })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.pi
    }

    /// Heap bytes held by the belief state.
    pub fn state_bytes(&self) -> usize {
        self.pi.len() * std::mem::size_of::<f64>()
    }

    /// Most probable joint state (lowest index wins ties).
    pub fn argmax_state(&self) -> ProcessStates {
        let mut best = 0;
        for (r, &x) in self.pi.iter().enumerate() {
            if x > self.pi[best] {
                best = r;
            }
        }
        ProcessStates::from_index(self.n, best)
    }

    pub fn max_prob(&self) -> f64 {
        self.pi.iter().copied().fold(0.0, f64::max)
    }

    /// Shannon entropy of the joint pmf in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .pi
            .iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| x * x.ln())
            .sum::<f64>()
    }
}

fn check_joint_size(n: usize) -> Result<()> {
    if n > MAX_JOINT_PROCESSES {
        Err(Error::JointTooLarge(n))
    } else {
        Ok(())
    }
}

/// Exact Bayes update of the joint posterior.
pub fn update_joint(pi: &JointBelief, obs: &Observation, p: f64) -> Result<JointBelief> {
    let n = pi.n;
    if let Some(a) = obs.selected().find(|&a| a >= n) {
        return Err(Error::DimensionMismatch { expected: n, got: a + 1 });
    }
    if obs.is_empty() {
        return Ok(pi.clone());
    }
    let mut next: Vec<f64> = pi
        .pi
        .iter()
        .enumerate()
        .map(|(r, &w)| {
            obs.entries()
                .iter()
                .fold(w, |acc, &(a, y)| acc * channel(y, ((r >> a) & 1) as u8, p))
        })
        .collect();
    let total: f64 = next.iter().sum();
    if !(total > 0.0) {
        return Err(Error::JointContradiction);
    }
    next.iter_mut().for_each(|x| *x /= total);
    Ok(JointBelief { n, pi: next })
}

/// `σ_i = Σ_{r : s_i(r) = 0} π_r`, without clamping.
pub fn marginalize(pi: &JointBelief) -> BeliefVector {
    let mut sigma = vec![0.0; pi.n];
    for (r, &w) in pi.pi.iter().enumerate() {
        for (i, s) in sigma.iter_mut().enumerate() {
            if (r >> i) & 1 == 0 {
                *s += w;
            }
        }
    }
    BeliefVector(sigma)
}

/// `ŝ_i = 0` iff `σ_i ≥ 1 − σ_i`.
pub fn estimate_states(sigma: &BeliefVector) -> ProcessStates {
    ProcessStates::new(
        sigma
            .0
            .iter()
            .map(|&x| u8::from(x < 1.0 - x))
            .collect(),
    )
    .expect("estimates are bits")
}

pub fn confidence(sigma_i: f64) -> f64 {
    sigma_i.max(1.0 - sigma_i)
}

/// `min_i max{σ_i, 1−σ_i} > Υ`.
pub fn stopping_met(sigma: &BeliefVector, upsilon: f64) -> bool {
    sigma
        .0
        .iter()
        .map(|&x| confidence(x))
        .fold(f64::INFINITY, f64::min)
        > upsilon
}

/// `max_r π_r > Υ`.
pub fn joint_stopping_met(pi: &JointBelief, upsilon: f64) -> bool {
    pi.max_prob() > upsilon
}
