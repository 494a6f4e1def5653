//! Single-file binary checkpoints.
//!
//! Layout (all integers little-endian; see `docs/checkpoint-format.md`):
//!
//! ```text
//! magic "CTRKDCKP" | version u32 | section count u32
//! { name_len u16 | name | payload_len u64 | payload }*
//! sha256 of every preceding byte (32 bytes)
//! ```
//!
//! Saving the same state twice yields identical bytes.

mod codec;

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::{FeatureLayout, FeatureVocabulary};
use crate::distill::{HintProjector, TeacherGate};
use crate::error::{Error, Result};
use crate::model::{Model, ModelSpec};
use crate::tensor::{ParamKind, ParamStore, Tensor};
use crate::train::{Adam, AdamConfig};
use codec::{Reader, Writer};

pub const MAGIC: &[u8; 8] = b"CTRKDCKP";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

/// Everything needed to rebuild a trained model and resume or audit it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub layout: FeatureLayout,
    pub params: ParamStore,
    pub seed: u64,
    pub epoch: u64,
    /// Fingerprint of the vocabulary the layout was built from, if any.
    pub vocab_fingerprint: Option<u64>,
    pub adam: Option<Adam>,
    pub gate: Option<TeacherGate>,
    pub projectors: Vec<HintProjector>,
}

impl Checkpoint {
    pub fn from_model(
        model: &Model,
        seed: u64,
        epoch: u64,
        vocab_fingerprint: Option<u64>,
    ) -> Self {
        Checkpoint {
            spec: model.spec().clone(),
            layout: model.layout().clone(),
            params: model.params().clone(),
            seed,
            epoch,
            vocab_fingerprint,
            adam: None,
            gate: None,
            projectors: Vec::new(),
        }
    }

    /// Rebuilds the model; parameter names, kinds and shapes must match what
    /// the stored model spec and layout produce.
    pub fn to_model(&self) -> Result<Model> {
        let mut model = Model::new(self.spec.clone(), self.layout.clone(), self.seed)?;
        let expected = model.params();
        if expected.len() != self.params.len()
            || expected.iter().zip(self.params.iter()).any(|(a, b)| {
                a.name != b.name || a.kind != b.kind || a.tensor.shape() != b.tensor.shape()
            })
        {
            return Err(Error::CorruptCheckpoint(
                "stored parameters do not fit the stored spec".into(),
            ));
        }
        model.load_params(&self.params)?;
        Ok(model)
    }

    /// Refuses a checkpoint built from a different vocabulary.
    pub fn check_vocabulary(&self, vocab: &FeatureVocabulary) -> Result<()> {
        let actual = vocab.fingerprint();
        match self.vocab_fingerprint {
            Some(fp) if fp != actual => Err(Error::FingerprintMismatch {
                checkpoint: fp,
                vocabulary: actual,
            }),
            None => Err(Error::invalid(
                "checkpoint carries no vocabulary fingerprint",
            )),
            _ => Ok(()),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut sections: Vec<(&str, Vec<u8>)> = Vec::new();
        let mut w = Writer::default();
        w.bytes(self.spec.to_string().as_bytes());
        sections.push(("spec", w.finish()));

        let mut w = Writer::default();
        w.u32(self.layout.vocab_sizes.len() as u32);
        for &s in &self.layout.vocab_sizes {
            w.u64(s as u64);
        }
        w.u64(self.layout.num_numeric as u64);
        sections.push(("layout", w.finish()));

        let mut w = Writer::default();
        w.u64(self.seed);
        w.u64(self.epoch);
        w.u8(u8::from(self.vocab_fingerprint.is_some()));
        w.u64(self.vocab_fingerprint.unwrap_or(0));
        sections.push(("meta", w.finish()));

        sections.push(("params", encode_store(&self.params)));
        if let Some(adam) = &self.adam {
            sections.push(("adam", encode_adam(adam)));
        }
        if let Some(gate) = &self.gate {
            sections.push(("gate", encode_store(gate.params())));
        }
        if !self.projectors.is_empty() {
            let mut w = Writer::default();
            w.u32(self.projectors.len() as u32);
            for p in &self.projectors {
                w.bytes(&encode_store(p.params()));
            }
            sections.push(("projectors", w.finish()));
        }

        let mut out = Writer::default();
        out.raw(MAGIC);
        out.u32(FORMAT_VERSION);
        out.u32(sections.len() as u32);
        for (name, payload) in sections {
            out.u16(name.len() as u16);
            out.raw(name.as_bytes());
            out.u64(payload.len() as u64);
            out.raw(&payload);
        }
        let mut bytes = out.finish();
        let digest = Sha256::digest(&bytes);
        bytes.extend_from_slice(&digest);
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::CorruptCheckpoint("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < 16 + CHECKSUM_LEN {
            return Err(Error::CorruptCheckpoint("file truncated".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::CorruptCheckpoint("checksum mismatch".into()));
        }
        let mut r = Reader::new(&body[12..]);
        let count = r.u32()?;
        let mut spec = None;
        let mut layout = None;
        let mut meta = None;
        let mut params = None;
        let mut adam = None;
        let mut gate = None;
        let mut projectors = Vec::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::CorruptCheckpoint("section name is not UTF-8".into()))?
                .to_string();
            let len = r.len_u64()?;
            let mut s = Reader::new(r.take(len)?);
            match name.as_str() {
                "spec" => {
                    let text = std::str::from_utf8(s.bytes()?)
                        .map_err(|_| Error::CorruptCheckpoint("spec is not UTF-8".into()))?;
                    spec = Some(
                        text.parse::<ModelSpec>()
                            .map_err(|e| Error::CorruptCheckpoint(format!("bad spec: {e}")))?,
                    );
                }
                "layout" => {
                    let n = s.u32()? as usize;
                    let sizes = (0..n).map(|_| s.len_u64()).collect::<Result<Vec<_>>>()?;
                    layout = Some(FeatureLayout::new(sizes, s.len_u64()?));
                }
                "meta" => {
                    let seed = s.u64()?;
                    let epoch = s.u64()?;
                    let has = s.u8()? == 1;
                    let fp = s.u64()?;
                    meta = Some((seed, epoch, has.then_some(fp)));
                }
                "params" => params = Some(decode_store(&mut s)?),
                "adam" => adam = Some(decode_adam(&mut s)?),
                "gate" => {
                    let store = decode_store(&mut s)?;
                    let (w, b) = (store.find("gate.weight"), store.find("gate.bias"));
                    let (Some(w), Some(b)) = (w, b) else {
                        return Err(Error::CorruptCheckpoint(
                            "gate section lacks tensors".into(),
                        ));
                    };
                    gate = Some(TeacherGate::from_params(
                        store.get(w).values().to_vec(),
                        store.get(b).values().to_vec(),
                    )?);
                }
                "projectors" => {
                    let n = s.u32()?;
                    for _ in 0..n {
                        let mut p = Reader::new(s.bytes()?);
                        let store = decode_store(&mut p)?;
                        let id = store.find("hint.weight").ok_or_else(|| {
                            Error::CorruptCheckpoint("projector lacks its weight".into())
                        })?;
                        projectors.push(HintProjector::from_weight(store.get(id).clone())?);
                    }
                }
                other => {
                    return Err(Error::CorruptCheckpoint(format!(
                        "unknown section `{other}`"
                    )))
                }
            }
            s.expect_end()?;
        }
        r.expect_end()?;
        let missing = |what: &str| Error::CorruptCheckpoint(format!("missing `{what}` section"));
        let (seed, epoch, vocab_fingerprint) = meta.ok_or_else(|| missing("meta"))?;
        Ok(Checkpoint {
            spec: spec.ok_or_else(|| missing("spec"))?,
            layout: layout.ok_or_else(|| missing("layout"))?,
            params: params.ok_or_else(|| missing("params"))?,
            seed,
            epoch,
            vocab_fingerprint,
            adam,
            gate,
            projectors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_bytes(&bytes)
    }
}

/// Saves `model` alone.
pub fn save(model: &Model, path: &Path) -> Result<()> {
    Checkpoint::from_model(model, 0, 0, None).save(path)
}

/// Loads a checkpoint and rebuilds its model.
pub fn load(path: &Path) -> Result<Model> {
    Checkpoint::load(path)?.to_model()
}

fn encode_store(store: &ParamStore) -> Vec<u8> {
    let mut w = Writer::default();
    w.u32(store.len() as u32);
    for p in store.iter() {
        w.bytes(p.name.as_bytes());
        w.u8(match p.kind {
            ParamKind::Dense => 0,
            ParamKind::Embedding => 1,
        });
        let shape = p.tensor.shape();
        w.u8(shape.len() as u8);
        for &d in shape {
            w.u64(d as u64);
        }
        for &v in p.tensor.values() {
            w.f64(v);
        }
    }
    w.finish()
}

fn decode_store(r: &mut Reader<'_>) -> Result<ParamStore> {
    let n = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..n {
        let name = std::str::from_utf8(r.bytes()?)
            .map_err(|_| Error::CorruptCheckpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let kind = match r.u8()? {
            0 => ParamKind::Dense,
            1 => ParamKind::Embedding,
            k => return Err(Error::CorruptCheckpoint(format!("unknown tensor kind {k}"))),
        };
        let rank = r.u8()? as usize;
        let shape = (0..rank).map(|_| r.len_u64()).collect::<Result<Vec<_>>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::CorruptCheckpoint("tensor shape overflows".into()))?;
        let values = r.f64s(numel)?;
        store.add(name, kind, Tensor::new(&shape, values)?);
    }
    Ok(store)
}

fn encode_adam(adam: &Adam) -> Vec<u8> {
    let mut w = Writer::default();
    let c = adam.config();
    for v in [c.lr, c.beta1, c.beta2, c.eps] {
        w.f64(v);
    }
    w.u64(adam.steps());
    w.u32(adam.first_moments().len() as u32);
    for (m, v) in adam.first_moments().iter().zip(adam.second_moments()) {
        w.u64(m.len() as u64);
        m.iter().for_each(|&x| w.f64(x));
        v.iter().for_each(|&x| w.f64(x));
    }
    w.finish()
}

fn decode_adam(r: &mut Reader<'_>) -> Result<Adam> {
    let config = AdamConfig {
        lr: r.f64()?,
        beta1: r.f64()?,
        beta2: r.f64()?,
        eps: r.f64()?,
    };
    let steps = r.u64()?;
    let n = r.u32()?;
    let mut m = Vec::new();
    let mut v = Vec::new();
    for _ in 0..n {
        let len = r.len_u64()?;
        m.push(r.f64s(len)?);
        v.push(r.f64s(len)?);
    }
    Adam::from_state(config, steps, m, v)
}
