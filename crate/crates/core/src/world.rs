//! Episode generation: correlated hidden process states and flip-noise
//! observations.
//!
//! Processes are partitioned into independent groups of size one or two.
//! A singleton is normal with probability `q`; a pair is drawn from the 2×2
//! joint law parameterised by the correlation coefficient `rho`:
//!
//! ```text
//! P[00] = q² + ρq(1−q)
//! P[11] = (1−q)² + ρq(1−q)
//! P[01] = P[10] = (1−ρ)q(1−q)
//! ```
//!
//! so that both marginals equal `q` and `P[s_a = s' | s_b = s]` matches the
//! pairwise table used by the belief recursion.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Hidden binary truth, one entry per process (0 normal, 1 anomalous).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ProcessStates(Vec<u8>);

impl ProcessStates {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidModel(format!("state entry {b} is not a bit")));
        }
        Ok(Self(bits))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    /// State whose entry `i` is bit `i` of `index`.
    pub fn from_index(n: usize, index: usize) -> Self {
        Self((0..n).map(|i| ((index >> i) & 1) as u8).collect())
    }

    /// Inverse of [`ProcessStates::from_index`].
    pub fn to_index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | ((b as usize) << i))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u8 {
        self.0[i]
    }
}

/// Partition of the processes into independent groups plus the shared
/// correlation coefficient and the prior probability of being normal.
#[derive(Clone, Debug, PartialEq)]
pub struct DependenceStructure {
    n: usize,
    groups: Vec<Vec<usize>>,
    partner: Vec<Option<usize>>,
    rho: f64,
    q: f64,
}

impl DependenceStructure {
    pub fn new(n: usize, groups: Vec<Vec<usize>>, rho: f64, q: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidModel("at least one process is required".into()));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidModel(format!("rho = {rho} is outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidModel(format!("q = {q} is outside [0, 1]")));
        }
        let mut partner = vec![None; n];
        let mut seen = vec![false; n];
        for g in &groups {
            if g.is_empty() || g.len() > 2 {
                return Err(Error::InvalidModel(format!(
                    "group {g:?} must contain one or two processes"
                )));
            }
            for &i in g {
                if i >= n {
                    return Err(Error::InvalidModel(format!("process {i} out of range 0..{n}")));
                }
                if seen[i] {
                    return Err(Error::InvalidModel(format!("process {i} appears twice")));
                }
                seen[i] = true;
            }
            if let [a, b] = g[..] {
                partner[a] = Some(b);
                partner[b] = Some(a);
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidModel(format!("process {i} belongs to no group")));
        }
        Ok(Self { n, groups, partner, rho, q })
    }

    /// Five processes grouped as {0,1}, {2,3}, {4} with q = 0.8.
    pub fn paired_five(rho: f64) -> Result<Self> {
        Self::new(5, vec![vec![0, 1], vec![2, 3], vec![4]], rho, 0.8)
    }

    /// `n` processes paired consecutively; an odd trailing process is a singleton.
    pub fn consecutive_pairs(n: usize, rho: f64, q: f64) -> Result<Self> {
        let groups = (0..n).step_by(2).map(|i| (i..(i + 2).min(n)).collect()).collect();
        Self::new(n, groups, rho, q)
    }

    pub fn independent(n: usize, q: f64) -> Result<Self> {
        Self::new(n, (0..n).map(|i| vec![i]).collect(), 0.0, q)
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::new(self.n, self.groups.clone(), rho, self.q)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// The other member of `i`'s group, if `i` is paired.
    pub fn partner(&self, i: usize) -> Option<usize> {
        self.partner[i]
    }

    /// Joint law of a dependent pair as `[P00, P01, P10, P11]`.
    pub fn pair_joint(&self) -> [f64; 4] {
        let (q, rho) = (self.q, self.rho);
        let shared = rho * q * (1.0 - q);
        let unequal = (1.0 - rho) * q * (1.0 - q);
        [q * q + shared, unequal, unequal, (1.0 - q) * (1.0 - q) + shared]
    }

    /// Prior probability of a complete state assignment.
    pub fn state_probability(&self, s: &ProcessStates) -> f64 {
        let joint = self.pair_joint();
        self.groups
            .iter()
            .map(|g| match g[..] {
                [i] => {
                    if s.get(i) == 0 {
                        self.q
                    } else {
                        1.0 - self.q
                    }
                }
                [a, b] => joint[2 * s.get(a) as usize + s.get(b) as usize],
                _ => unreachable!("groups validated at construction"),
            })
            .product()
    }

    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> ProcessStates {
        let mut bits = vec![0u8; self.n];
        let joint = self.pair_joint();
        for g in &self.groups {
            match g[..] {
                [i] => bits[i] = u8::from(rng.random::<f64>() >= self.q),
                [a, b] => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut outcome = 3;
                    for (k, &p) in joint.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            outcome = k;
                            break;
                        }
                    }
                    // Zero-probability outcomes are unreachable even when
                    // rounding leaves `acc` slightly below one.
                    if joint[outcome] == 0.0 {
                        outcome = if joint[3] > 0.0 { 3 } else { 0 };
                    }
                    bits[a] = (outcome >> 1) as u8;
                    bits[b] = (outcome & 1) as u8;
                }
                _ => unreachable!("groups validated at construction"),
            }
        }
        ProcessStates(bits)
    }
}

/// Noisy readings for the processes probed at one time step.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Observation {
    entries: Vec<(usize, u8)>,
}

impl Observation {
    pub fn new(entries: Vec<(usize, u8)>) -> Self {
        Self { entries }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(usize, u8)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(i, _)| i)
    }

    /// Keeps only entries whose process index satisfies `keep`.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool) -> Self {
        Self {
            entries: self.entries.iter().copied().filter(|&(i, _)| keep(i)).collect(),
        }
    }
}

/// Reads each selected process through a binary symmetric channel with flip
/// probability `p`. One uniform draw is consumed per selected index, in order.
pub fn observe<R: Rng + ?Sized>(
    s: &ProcessStates,
    selected: &[usize],
    p: f64,
    rng: &mut R,
) -> Observation {
    let entries = selected
        .iter()
        .map(|&i| {
            let flip = rng.random::<f64>() < p;
            (i, s.get(i) ^ u8::from(flip))
        })
        .collect();
    Observation { entries }
}

/// Purpose of a random substream within one episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lane {
    State,
    Observation,
    Action,
    /// Per-sensor selection draws in decentralized execution.
    Sensor(u32),
}

impl Lane {
    fn id(self) -> u64 {
        match self {
            Lane::State => 0,
            Lane::Observation => 1,
            Lane::Action => 2,
            Lane::Sensor(i) => 16 + u64::from(i),
        }
    }
}

/// Phase that owns a family of substreams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Init,
    Train,
    Eval,
}

/// Counter-based splitting of one master seed into independent ChaCha
/// substreams keyed by (domain, episode, lane).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn rng(&self, domain: Domain, episode: u64, lane: Lane) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master.to_le_bytes());
        key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
        key[16..24].copy_from_slice(&lane.id().to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(episode);
        rng
    }
}
