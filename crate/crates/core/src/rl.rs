//! Actor-critic update rules.
//!
//! The centralized actor ascends `δ·∇ ln μ_a(σ)`. The decentralized actor
//! ascends `δ·∇ φ(A)` where `φ(A) = Π_{a∈A} ν_a Π_{a∉A} (1 − ν_a)` is the
//! probability of the joint selection; `δ·∇ ln φ(A)` is available as an
//! option. The critic takes a semi-gradient step on `δ²`, holding the
//! bootstrapped target `r + γ·V(σ')` fixed.

use crate::nn::{adam_step, AdamState, MlpNet};
use crate::{Error, Result};

/// Floor applied to probabilities before taking logarithms or dividing.
pub const PROB_FLOOR: f64 = 1e-12;

/// Inputs to one temporal-difference error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TdContext {
    pub reward: f64,
    pub gamma: f64,
    pub v_next: f64,
    pub v_prev: f64,
    /// When set, the bootstrap term `γ·v_next` is dropped.
    pub terminal: bool,
}

/// `δ = r + γ·V(σ') − V(σ)`.
pub fn td_error(ctx: &TdContext) -> f64 {
    let bootstrap = if ctx.terminal { 0.0 } else { ctx.gamma * ctx.v_next };
    ctx.reward + bootstrap - ctx.v_prev
}

/// An actor or critic network with its optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct Learner {
    pub net: MlpNet,
    pub opt: AdamState,
}

impl Learner {
    pub fn new(net: MlpNet, lr: f64) -> Self {
        let opt = AdamState::new(&net, lr);
        Self { net, opt }
    }
}

/// `∇_θ ln μ_action(x)`, with `μ_action` floored at [`PROB_FLOOR`].
pub fn log_policy_gradient(actor: &MlpNet, x: &[f64], action: usize) -> Result<Vec<f64>> {
    let (mu, cache) = actor.forward(x)?;
    if action >= mu.len() {
        return Err(Error::DimensionMismatch { expected: mu.len(), got: action + 1 });
    }
    let mut head_grad = vec![0.0; mu.len()];
    head_grad[action] = 1.0 / mu[action].max(PROB_FLOOR);
    actor.backward(&cache, &head_grad)
}

/// Ascends `δ·∇ ln μ_action(x)`. A zero `δ` leaves the actor untouched.
pub fn centralized_actor_step(actor: &mut Learner, x: &[f64], action: usize, delta: f64) -> Result<()> {
    if delta == 0.0 {
        return Ok(());
    }
    let mut g = log_policy_gradient(&actor.net, x, action)?;
    g.iter_mut().for_each(|v| *v *= delta);
    adam_step(&mut actor.net, &g, &mut actor.opt, true)
}

/// `φ(A) = Π_{a∈A} ν_a · Π_{a∉A} (1 − ν_a)`.
pub fn joint_action_prob(nu: &[f64], selected: &[bool]) -> f64 {
    nu.iter()
        .zip(selected)
        .map(|(&v, &s)| if s { v } else { 1.0 - v })
        .product()
}

/// Partial derivatives of `φ(A)` (or `ln φ(A)`) with respect to each `ν_a`.
pub fn joint_action_prob_partials(nu: &[f64], selected: &[bool], log: bool) -> Vec<f64> {
    let factors: Vec<f64> = nu
        .iter()
        .zip(selected)
        .map(|(&v, &s)| if s { v } else { 1.0 - v })
        .collect();
    (0..nu.len())
        .map(|a| {
            let sign = if selected[a] { 1.0 } else { -1.0 };
            if log {
                sign / factors[a].max(PROB_FLOOR)
            } else {
                let others: f64 = factors
                    .iter()
                    .enumerate()
                    .filter(|&(b, _)| b != a)
                    .map(|(_, f)| f)
                    .product();
                sign * others
            }
        })
        .collect()
}

/// `∇_θ φ(A)` (or `∇_θ ln φ(A)` when `log` is set) for a sigmoid-head actor.
pub fn selection_gradient(actor: &MlpNet, x: &[f64], selected: &[bool], log: bool) -> Result<Vec<f64>> {
    let (nu, cache) = actor.forward(x)?;
    if selected.len() != nu.len() {
        return Err(Error::DimensionMismatch { expected: nu.len(), got: selected.len() });
    }
    let head_grad = joint_action_prob_partials(&nu, selected, log);
    actor.backward(&cache, &head_grad)
}

/// Ascends `δ·∇ φ(A)` (default) or `δ·∇ ln φ(A)`.
pub fn decentralized_actor_step(
    actor: &mut Learner,
    x: &[f64],
    selected: &[bool],
    delta: f64,
    log: bool,
) -> Result<()> {
    if delta == 0.0 {
        return Ok(());
    }
    let mut g = selection_gradient(&actor.net, x, selected, log)?;
    g.iter_mut().for_each(|v| *v *= delta);
    adam_step(&mut actor.net, &g, &mut actor.opt, true)
}

/// Semi-gradient of `δ²` with respect to critic parameters: `−2δ·∇V(x_prev)`.
/// `ctx.v_prev` is ignored and recomputed from the critic.
pub fn critic_semi_gradient(critic: &MlpNet, x_prev: &[f64], ctx: &TdContext) -> Result<Vec<f64>> {
    let (v, cache) = critic.forward(x_prev)?;
    if v.len() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: v.len() });
    }
    let delta = td_error(&TdContext { v_prev: v[0], ..*ctx });
    critic.backward(&cache, &[-2.0 * delta])
}

/// Descends the semi-gradient of `δ²`.
pub fn critic_step(critic: &mut Learner, x_prev: &[f64], ctx: &TdContext) -> Result<()> {
    let g = critic_semi_gradient(&critic.net, x_prev, ctx)?;
    if g.iter().all(|&v| v == 0.0) {
        return Ok(());
    }
    adam_step(&mut critic.net, &g, &mut critic.opt, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Head;
    use crate::world::{Domain, Lane, SeedTree};
    use rand::Rng;

    fn rng(ep: u64) -> rand_chacha::ChaCha8Rng {
        SeedTree::new(17).rng(Domain::Init, ep, Lane::Action)
    }

    fn numeric(net: &MlpNet, f: impl Fn(&MlpNet) -> f64, h: f64) -> Vec<f64> {
        let mut probe = net.clone();
        (0..net.params().len())
            .map(|k| {
                let orig = probe.params()[k];
                probe.params_mut()[k] = orig + h;
                let up = f(&probe);
                probe.params_mut()[k] = orig - h;
                let down = f(&probe);
                probe.params_mut()[k] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let scale = a.iter().chain(b).map(|x| x.abs()).fold(1e-12, f64::max);
        diff / scale
    }

    #[test]
    fn td_examples() {
        let ctx = TdContext { reward: 0.5, gamma: 0.9, v_next: 1.0, v_prev: 1.2, terminal: false };
        assert!((td_error(&ctx) - 0.2).abs() < 1e-15);
        let term = TdContext { reward: 0.5, gamma: 0.9, v_next: 7.0, v_prev: 0.5, terminal: true };
        assert_eq!(td_error(&term), 0.0);
        let (g, v) = (0.1, 3.0);
        let flat = TdContext { reward: 0.0, gamma: 1.0 - g, v_next: v, v_prev: v, terminal: false };
        assert!((td_error(&flat) + g * v).abs() < 1e-12);
    }

    #[test]
    fn phi_examples() {
        assert!((joint_action_prob(&[0.5; 3], &[true, false, true]) - 0.125).abs() < 1e-15);
        let nu = [0.1, 0.7, 0.4];
        assert!((joint_action_prob(&nu, &[false; 3]) - 0.9 * 0.3 * 0.6).abs() < 1e-15);
    }

    #[test]
    fn phi_sums_to_one_over_subsets() {
        let mut r = rng(0);
        for n in 1..=10 {
            let nu: Vec<f64> = (0..n).map(|_| r.random_range(0.01..0.99)).collect();
            let total: f64 = (0..1usize << n)
                .map(|m| {
                    let sel: Vec<bool> = (0..n).map(|i| (m >> i) & 1 == 1).collect();
                    joint_action_prob(&nu, &sel)
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "n={n}: {total}");
        }
    }

    #[test]
    fn log_policy_gradient_matches_finite_differences() {
        for trial in 0..20 {
            let mut r = rng(trial);
            let actor = MlpNet::new(&[5, 64, 5], Head::Softmax, &mut r).unwrap();
            let x: Vec<f64> = (0..5).map(|_| r.random::<f64>()).collect();
            let a = r.random_range(0..5);
            let analytic = log_policy_gradient(&actor, &x, a).unwrap();
            let num = numeric(&actor, |n| n.output(&x).unwrap()[a].ln(), 1e-5);
            assert!(rel_err(&analytic, &num) < 1e-4);
        }
    }

    #[test]
    fn phi_gradient_matches_finite_differences() {
        for trial in 0..20 {
            let mut r = rng(100 + trial);
            let actor = MlpNet::new(&[5, 64, 64, 5], Head::Sigmoid, &mut r).unwrap();
            let x: Vec<f64> = (0..5).map(|_| r.random::<f64>()).collect();
            let sel: Vec<bool> = (0..5).map(|_| r.random_bool(0.5)).collect();
            for log in [false, true] {
                let analytic = selection_gradient(&actor, &x, &sel, log).unwrap();
                let num = numeric(
                    &actor,
                    |n| {
                        let phi = joint_action_prob(&n.output(&x).unwrap(), &sel);
                        if log { phi.ln() } else { phi }
                    },
                    1e-5,
                );
                assert!(rel_err(&analytic, &num) < 1e-4, "log={log}");
            }
        }
    }

    #[test]
    fn positive_delta_raises_chosen_probability() {
        let mut r = rng(7);
        let mut actor = Learner::new(MlpNet::new(&[5, 64, 5], Head::Softmax, &mut r).unwrap(), 1e-3);
        let x = [0.8, 0.3, 0.95, 0.5, 0.1];
        let before = actor.net.output(&x).unwrap()[2];
        centralized_actor_step(&mut actor, &x, 2, 0.7).unwrap();
        assert!(actor.net.output(&x).unwrap()[2] > before);
    }

    #[test]
    fn zero_delta_leaves_actors_alone() {
        let mut r = rng(8);
        let mut actor = Learner::new(MlpNet::new(&[5, 64, 5], Head::Softmax, &mut r).unwrap(), 1e-3);
        let snapshot = actor.clone();
        centralized_actor_step(&mut actor, &[0.5; 5], 1, 0.0).unwrap();
        assert_eq!(actor, snapshot);

        let mut dec = Learner::new(MlpNet::new(&[5, 64, 64, 5], Head::Sigmoid, &mut r).unwrap(), 1e-3);
        let snapshot = dec.clone();
        decentralized_actor_step(&mut dec, &[0.5; 5], &[true, false, true, false, false], 0.0, false).unwrap();
        assert_eq!(dec, snapshot);
    }

    #[test]
    fn positive_delta_raises_selection_probability() {
        let mut r = rng(9);
        let mut actor = Learner::new(MlpNet::new(&[5, 64, 64, 5], Head::Sigmoid, &mut r).unwrap(), 1e-4);
        let x = [0.8, 0.8, 0.6, 0.9, 0.2];
        let sel = [true, false, false, true, false];
        let before = joint_action_prob(&actor.net.output(&x).unwrap(), &sel);
        decentralized_actor_step(&mut actor, &x, &sel, 1.5, false).unwrap();
        assert!(joint_action_prob(&actor.net.output(&x).unwrap(), &sel) > before);
    }

    #[test]
    fn critic_gradient_matches_frozen_target_differences() {
        for trial in 0..20 {
            let mut r = rng(200 + trial);
            let critic = MlpNet::new(&[5, 64, 1], Head::Identity, &mut r).unwrap();
            let x: Vec<f64> = (0..5).map(|_| r.random::<f64>()).collect();
            let ctx = TdContext { reward: r.random_range(-1.0..1.0), gamma: 0.9, v_next: r.random(), v_prev: 0.0, terminal: false };
            let analytic: Vec<f64> = critic_semi_gradient(&critic, &x, &ctx).unwrap().iter().map(|g| g / 2.0).collect();
            let target = ctx.reward + ctx.gamma * ctx.v_next;
            let num = numeric(&critic, |n| 0.5 * (target - n.output(&x).unwrap()[0]).powi(2), 1e-5);
            assert!(rel_err(&analytic, &num) < 1e-4);
        }
    }

    #[test]
    fn critic_converges_to_constant_target() {
        let mut r = rng(300);
        let mut critic = Learner::new(MlpNet::new(&[5, 64, 1], Head::Identity, &mut r).unwrap(), 5e-3);
        let x = [0.2, 0.4, 0.6, 0.8, 1.0];
        let c = 1.7;
        for _ in 0..5000 {
            let ctx = TdContext { reward: c, gamma: 0.9, v_next: 0.0, v_prev: 0.0, terminal: true };
            critic_step(&mut critic, &x, &ctx).unwrap();
        }
        assert!((critic.net.output(&x).unwrap()[0] - c).abs() < 1e-3);
    }

    #[test]
    fn critic_does_not_differentiate_through_bootstrap() {
        // Same network scores both states; a full gradient would include
        // +2δγ∇V(x_next), the semi-gradient must not.
        let mut r = rng(400);
        let critic = MlpNet::new(&[3, 16, 1], Head::Identity, &mut r).unwrap();
        let (x_prev, x_next) = ([0.1, 0.5, 0.9], [0.9, 0.2, 0.4]);
        let v_next = critic.output(&x_next).unwrap()[0];
        let ctx = TdContext { reward: 0.3, gamma: 0.9, v_next, v_prev: 0.0, terminal: false };
        let semi = critic_semi_gradient(&critic, &x_prev, &ctx).unwrap();
        let full = numeric(
            &critic,
            |n| {
                let d = 0.3 + 0.9 * n.output(&x_next).unwrap()[0] - n.output(&x_prev).unwrap()[0];
                d * d
            },
            1e-5,
        );
        let frozen = numeric(
            &critic,
            |n| {
                let d = 0.3 + 0.9 * v_next - n.output(&x_prev).unwrap()[0];
                d * d
            },
            1e-5,
        );
        assert!(rel_err(&semi, &frozen) < 1e-4);
        assert!(rel_err(&semi, &full) > 1e-2);
    }
}
