//! Binary checkpoint container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic     8 bytes  "CSENSCKP"
//! version   u32
//! config    32 bytes SHA-256 fingerprint of the training config
//! variant   u8
//! n         u32
//! episodes  u64
//! 2 x net   head u8, layer count u32, dims u32..., params f64...,
//!           adam step u64, lr, beta1, beta2, eps f64, m f64..., v f64...
//! checksum  32 bytes SHA-256 of everything above
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{AlgorithmVariant, TrainedAgent};
use crate::nn::{param_count, AdamState, Head, MlpNet};
use crate::rl::Learner;

pub const MAGIC: &[u8; 8] = b"CSENSCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("not a checkpoint file (bad magic)")]
    BadMagic,

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),

    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Header fields of a checkpoint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub version: u32,
    pub fingerprint: [u8; 32],
    pub variant: AlgorithmVariant,
    pub n: usize,
    pub episodes_trained: u64,
}

impl CheckpointMeta {
    pub fn fingerprint_hex(&self) -> String {
        hex(&self.fingerprint)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub actor: Learner,
    pub critic: Learner,
}

impl Checkpoint {
    /// Fails unless the stored networks fit `variant` over `n` processes.
    pub fn check_compatible(&self, variant: AlgorithmVariant, n: usize) -> Result<(), CheckpointError> {
        if self.meta.variant != variant {
            return Err(CheckpointError::ShapeMismatch(format!(
                "checkpoint holds a {} agent, config asks for {variant}",
                self.meta.variant
            )));
        }
        if self.meta.n != n {
            return Err(CheckpointError::ShapeMismatch(format!(
                "checkpoint was trained on {} processes, config has {n}",
                self.meta.n
            )));
        }
        Ok(())
    }

    pub fn into_agent(self) -> TrainedAgent {
        TrainedAgent {
            variant: self.meta.variant,
            n: self.meta.n,
            actor: self.actor,
            critic: self.critic,
            episodes_trained: self.meta.episodes_trained,
            episode_rewards: Vec::new(),
        }
    }
}

/// SHA-256 of arbitrary bytes; used to fingerprint canonical configs.
pub fn fingerprint(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn encode(agent: &TrainedAgent, config_fingerprint: [u8; 32]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&config_fingerprint);
    out.push(agent.variant.code());
    out.extend_from_slice(&(agent.n as u32).to_le_bytes());
    out.extend_from_slice(&agent.episodes_trained.to_le_bytes());
    for l in [&agent.actor, &agent.critic] {
        write_learner(&mut out, l);
    }
    let sum = fingerprint(&out);
    out.extend_from_slice(&sum);
    out
}

fn write_learner(out: &mut Vec<u8>, l: &Learner) {
    out.push(l.net.head().code());
    out.extend_from_slice(&(l.net.dims().len() as u32).to_le_bytes());
    for &d in l.net.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    write_f64s(out, l.net.params());
    out.extend_from_slice(&l.opt.step.to_le_bytes());
    write_f64s(out, &[l.opt.lr, l.opt.beta1, l.opt.beta2, l.opt.eps]);
    write_f64s(out, &l.opt.m);
    write_f64s(out, &l.opt.v);
}

fn write_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Verifies the checksum before parsing anything, so a damaged file never
/// yields a partially loaded agent.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < MAGIC.len() + 4 + 32 {
        return Err(CheckpointError::Corrupt("file too short".into()));
    }
    let (body, sum) = bytes.split_at(bytes.len() - 32);
    if fingerprint(body).as_slice() != sum {
        return Err(CheckpointError::Corrupt("checksum mismatch (truncated or modified)".into()));
    }
    let mut r = Reader { bytes: body, pos: MAGIC.len() };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let fp: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let code = r.u8()?;
    let variant = AlgorithmVariant::from_code(code)
        .ok_or_else(|| CheckpointError::Corrupt(format!("unknown variant code {code}")))?;
    let n = r.u32()? as usize;
    let episodes_trained = r.u64()?;
    let actor = read_learner(&mut r)?;
    let critic = read_learner(&mut r)?;
    if r.pos != body.len() {
        return Err(CheckpointError::Corrupt(format!("{} trailing bytes", body.len() - r.pos)));
    }
    let expected_in = variant.input_dim(n);
    for (name, net) in [("actor", &actor.net), ("critic", &critic.net)] {
        if net.input_dim() != expected_in {
            return Err(CheckpointError::ShapeMismatch(format!(
                "{name} input width {} does not match {variant} over {n} processes",
                net.input_dim()
            )));
        }
    }
    Ok(Checkpoint {
        meta: CheckpointMeta { version, fingerprint: fp, variant, n, episodes_trained },
        actor,
        critic,
    })
}

fn read_learner(r: &mut Reader<'_>) -> Result<Learner, CheckpointError> {
    let code = r.u8()?;
    let head = Head::from_code(code).ok_or_else(|| CheckpointError::Corrupt(format!("unknown head code {code}")))?;
    let layers = r.u32()? as usize;
    if !(2..=64).contains(&layers) {
        return Err(CheckpointError::Corrupt(format!("implausible layer count {layers}")));
    }
    let dims = (0..layers).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
    if dims.contains(&0) {
        return Err(CheckpointError::Corrupt(format!("zero-width layer in {dims:?}")));
    }
    let count = param_count(&dims);
    let params = r.f64s(count)?;
    let net = MlpNet::from_params(&dims, head, params).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let step = r.u64()?;
    let hyper = r.f64s(4)?;
    let m = r.f64s(count)?;
    let v = r.f64s(count)?;
    let opt = AdamState { m, v, step, lr: hyper[0], beta1: hyper[1], beta2: hyper[2], eps: hyper[3] };
    Ok(Learner { net, opt })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CheckpointError::Corrupt("unexpected end of data".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>, CheckpointError> {
        let raw = self.take(count.checked_mul(8).ok_or_else(|| CheckpointError::Corrupt("size overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

/// Writes through a sibling temporary file so readers never see a partial checkpoint.
pub fn save(path: &Path, agent: &TrainedAgent, config_fingerprint: [u8; 32]) -> Result<(), CheckpointError> {
    let bytes = encode(agent, config_fingerprint);
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::TrainConfig;
    use crate::rewards::RewardKind;

    fn agent(variant: AlgorithmVariant, n: usize) -> TrainedAgent {
        let cfg = if variant.is_centralized() {
            TrainConfig::centralized(RewardKind::Entropy)
        } else {
            TrainConfig::decentralized(RewardKind::Entropy, 5.0)
        };
        let mut a = TrainedAgent::init(&cfg, variant, n).unwrap();
        a.actor.opt.step = 17;
        a.actor.opt.m[3] = -0.25;
        a.critic.opt.v[0] = 1e-300;
        a.episodes_trained = 1234;
        a
    }

    #[test]
    fn round_trip_is_exact() {
        for variant in [AlgorithmVariant::CentralMarginal, AlgorithmVariant::CentralJoint, AlgorithmVariant::Decentralized]
        {
            let a = agent(variant, 4);
            let ck = decode(&encode(&a, [7; 32])).unwrap();
            assert_eq!(ck.meta.fingerprint, [7; 32]);
            assert_eq!(ck.meta.episodes_trained, 1234);
            assert_eq!(ck.actor, a.actor);
            assert_eq!(ck.critic, a.critic);
        }
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = encode(&agent(AlgorithmVariant::CentralNaive, 3), [0; 32]);
        for len in (0..bytes.len()).step_by(97) {
            assert!(decode(&bytes[..len]).is_err(), "length {len}");
        }
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(CheckpointError::Corrupt(_))));
    }

    #[test]
    fn bit_flip_is_rejected() {
        let mut bytes = encode(&agent(AlgorithmVariant::CentralMarginal, 3), [0; 32]);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(matches!(decode(&bytes), Err(CheckpointError::Corrupt(_))));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = encode(&agent(AlgorithmVariant::CentralMarginal, 3), [0; 32]);
        bytes[8..12].copy_from_slice(&99u32.to_le_bytes());
        let n = bytes.len();
        let sum = fingerprint(&bytes[..n - 32]);
        bytes[n - 32..].copy_from_slice(&sum);
        assert!(matches!(decode(&bytes), Err(CheckpointError::VersionMismatch { found: 99, expected: 1 })));
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(decode(b"NOTACKPTxxxxxxxxxxxx"), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn compatibility_check() {
        let ck = decode(&encode(&agent(AlgorithmVariant::CentralMarginal, 5), [0; 32])).unwrap();
        assert!(ck.check_compatible(AlgorithmVariant::CentralMarginal, 5).is_ok());
        assert!(matches!(
            ck.check_compatible(AlgorithmVariant::CentralMarginal, 6),
            Err(CheckpointError::ShapeMismatch(_))
        ));
        assert!(matches!(
            ck.check_compatible(AlgorithmVariant::Decentralized, 5),
            Err(CheckpointError::ShapeMismatch(_))
        ));
    }
}
