//! Versioned binary checkpoints.
//!
//! All integers and reals are little-endian. Layout:
//!
//! ```text
//! magic            4 bytes  "DMF1"
//! format_version   u32
//! kind             u8       0 = mlp_actor, 1 = fusion_actor, 2 = critic
//! env_name         u32 length + UTF-8 bytes
//! episodes         u64
//! seed             u64
//! obs_scale        u32 count + count × f64
//! goal_scale       u32 count + count × f64
//! network          descriptor + parameter block (see below)
//! has_critic       u8       followed by an MLP descriptor + parameter block when 1
//! ```
//!
//! An MLP descriptor is `u32 n_dims`, `n_dims × u32` widths and
//! `(n_dims − 1) × u8` activation codes. A fusion descriptor is `u32 n`,
//! `u32 d`, `u32 input_dim`, `u8 frozen`, `u8 post_activation`, `n` source
//! ids (u32 length + UTF-8) and the head's MLP descriptor. A parameter block
//! is `u64 count` followed by `count × f64`; fusion parameters are ordered
//! primitives (weight, bias)…, fusion weight, fusion bias, head.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::ddpg::{InputEncoding, Policy};
use crate::error::{Error, Result};
use crate::fusion::{FusionPolicy, PrimitiveLayer};
use crate::numkit::{Activation, Matrix, Mlp, Parametric};

pub const MAGIC: [u8; 4] = *b"DMF1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    MlpActor,
    FusionActor,
    Critic,
}

impl CheckpointKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckpointKind::MlpActor => "mlp_actor",
            CheckpointKind::FusionActor => "fusion_actor",
            CheckpointKind::Critic => "critic",
        }
    }

    fn code(self) -> u8 {
        match self {
            CheckpointKind::MlpActor => 0,
            CheckpointKind::FusionActor => 1,
            CheckpointKind::Critic => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(CheckpointKind::MlpActor),
            1 => Ok(CheckpointKind::FusionActor),
            2 => Ok(CheckpointKind::Critic),
            other => Err(Error::Malformed(format!("unknown checkpoint kind code {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CheckpointMeta {
    pub env_name: String,
    pub episodes: u64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum Network {
    Actor(Policy),
    Critic(Mlp),
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub network: Network,
    /// Companion critic stored alongside an actor.
    pub critic: Option<Mlp>,
    pub encoding: InputEncoding,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn actor(policy: Policy, critic: Option<Mlp>, encoding: InputEncoding, meta: CheckpointMeta) -> Self {
        Self {
            network: Network::Actor(policy),
            critic,
            encoding,
            meta,
        }
    }

    pub fn kind(&self) -> CheckpointKind {
        match &self.network {
            Network::Actor(Policy::Mlp(_)) => CheckpointKind::MlpActor,
            Network::Actor(Policy::Fusion(_)) => CheckpointKind::FusionActor,
            Network::Critic(_) => CheckpointKind::Critic,
        }
    }

    pub fn policy(&self) -> Result<&Policy> {
        match &self.network {
            Network::Actor(p) => Ok(p),
            Network::Critic(_) => Err(Error::Kind {
                expected: "actor",
                found: CheckpointKind::Critic.name(),
            }),
        }
    }

    pub fn mlp_actor(&self) -> Result<&Mlp> {
        match &self.network {
            Network::Actor(Policy::Mlp(m)) => Ok(m),
            _ => Err(Error::Kind {
                expected: CheckpointKind::MlpActor.name(),
                found: self.kind().name(),
            }),
        }
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(&MAGIC);
        w.u32(FORMAT_VERSION);
        w.u8(self.kind().code());
        w.string(&self.meta.env_name);
        w.u64(self.meta.episodes);
        w.u64(self.meta.seed);
        for scales in [&self.encoding.obs_scale, &self.encoding.goal_scale] {
            w.u32(scales.len() as u32);
            scales.iter().for_each(|&k| w.f64(k));
        }
        match &self.network {
            Network::Actor(Policy::Mlp(m)) | Network::Critic(m) => w.mlp(m),
            Network::Actor(Policy::Fusion(f)) => {
                w.u32(f.num_primitives() as u32);
                w.u32(f.feature_dim() as u32);
                w.u32(f.input_dim() as u32);
                w.u8(f.freeze_primitives() as u8);
                w.u8(f.post_activation() as u8);
                for p in f.primitives() {
                    w.string(&p.source_id);
                }
                w.mlp_descriptor(f.head());
                w.u64(f.all_param_count() as u64);
                f.visit_all_params(&mut |p| p.iter().for_each(|&v| w.f64(v)));
            }
        }
        match &self.critic {
            Some(c) => {
                w.u8(1);
                w.mlp(c);
            }
            None => w.u8(0),
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("four bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic { found: magic });
        }
        let version = r.u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let kind = CheckpointKind::from_code(r.u8("kind")?)?;
        let meta = CheckpointMeta {
            env_name: r.string("env name")?,
            episodes: r.u64("episode count")?,
            seed: r.u64("seed")?,
        };
        let obs_len = r.width("observation scale count")?;
        let obs_scale = r.reals(obs_len, "observation scales")?;
        let goal_len = r.width("goal scale count")?;
        let goal_scale = r.reals(goal_len, "goal scales")?;
        let network = match kind {
            CheckpointKind::MlpActor => Network::Actor(Policy::Mlp(r.mlp()?)),
            CheckpointKind::Critic => Network::Critic(r.mlp()?),
            CheckpointKind::FusionActor => Network::Actor(Policy::Fusion(r.fusion()?)),
        };
        let critic = match r.u8("critic flag")? {
            0 => None,
            1 => Some(r.mlp()?),
            other => return Err(Error::Malformed(format!("critic flag {other}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Malformed(format!(
                "{} trailing bytes after checkpoint body",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            network,
            critic,
            encoding: InputEncoding { obs_scale, goal_scale },
            meta,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, checkpoint.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    fn string(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }
    fn mlp_descriptor(&mut self, m: &Mlp) {
        self.u32(m.layer_dims().len() as u32);
        for &d in m.layer_dims() {
            self.u32(d as u32);
        }
        for a in m.activations() {
            self.u8(a.code());
        }
    }
    fn mlp(&mut self, m: &Mlp) {
        self.mlp_descriptor(m);
        self.u64(m.param_count() as u64);
        m.visit_params(&mut |p| p.iter().for_each(|&v| self.f64(v)));
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

/// Upper bound on any single dimension, to reject garbage before allocating.
const MAX_WIDTH: usize = 1 << 20;

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated { what });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn width(&mut self, what: &'static str) -> Result<usize> {
        let v = self.u32(what)? as usize;
        if v == 0 || v > MAX_WIDTH {
            return Err(Error::Malformed(format!("{what} {v} out of range")));
        }
        Ok(v)
    }
    fn string(&mut self, what: &'static str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Malformed(format!("{what} is not UTF-8")))
    }
    fn reals(&mut self, n: usize, what: &'static str) -> Result<Vec<f64>> {
        let raw = self.take(n * 8, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
    fn param_block(&mut self, expected: usize) -> Result<Vec<f64>> {
        let declared = self.u64("parameter count")? as usize;
        if declared != expected {
            return Err(Error::CountMismatch {
                expected,
                actual: declared,
            });
        }
        self.reals(expected, "parameters")
    }
    fn mlp_descriptor(&mut self) -> Result<(Vec<usize>, Vec<Activation>)> {
        let n = self.u32("layer count")? as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::Malformed(format!("MLP with {n} layer widths")));
        }
        let dims = (0..n).map(|_| self.width("layer width")).collect::<Result<Vec<_>>>()?;
        let acts = (0..n - 1)
            .map(|_| {
                let c = self.u8("activation")?;
                Activation::from_code(c).ok_or_else(|| Error::Malformed(format!("activation code {c}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((dims, acts))
    }
    fn mlp(&mut self) -> Result<Mlp> {
        let (dims, acts) = self.mlp_descriptor()?;
        let params = self.param_block(mlp_param_count(&dims))?;
        mlp_from_flat(&dims, acts, &params)
    }
    fn fusion(&mut self) -> Result<FusionPolicy> {
        let n = self.width("primitive count")?;
        let d = self.width("feature width")?;
        let in_dim = self.width("input width")?;
        let frozen = self.u8("freeze flag")? != 0;
        let post = self.u8("activation flag")? != 0;
        let ids = (0..n).map(|_| self.string("source id")).collect::<Result<Vec<_>>>()?;
        let (head_dims, head_acts) = self.mlp_descriptor()?;
        let head_count = mlp_param_count(&head_dims);
        let expected = n * (in_dim * d + d) + n * d * d + d + head_count;
        let params = self.param_block(expected)?;
        let mut rest = params.as_slice();
        let mut next = |len: usize| {
            let (a, b) = rest.split_at(len);
            rest = b;
            a.to_vec()
        };
        let mut primitives = Vec::with_capacity(n);
        for id in ids {
            let w = Matrix::from_vec(in_dim, d, next(in_dim * d))?;
            primitives.push(PrimitiveLayer::new(w, next(d), id)?);
        }
        let fc_weight = Matrix::from_vec(n * d, d, next(n * d * d))?;
        let fc_bias = next(d);
        let head = mlp_from_flat(&head_dims, head_acts, &next(head_count))?;
        FusionPolicy::from_parts(primitives, fc_weight, fc_bias, head, frozen, post)
    }
}

fn mlp_param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn mlp_from_flat(dims: &[usize], acts: Vec<Activation>, params: &[f64]) -> Result<Mlp> {
    let mut weights = Vec::with_capacity(dims.len() - 1);
    let mut biases = Vec::with_capacity(dims.len() - 1);
    let mut offset = 0;
    for w in dims.windows(2) {
        let (i, o) = (w[0], w[1]);
        weights.push(Matrix::from_vec(i, o, params[offset..offset + i * o].to_vec())?);
        offset += i * o;
        biases.push(params[offset..offset + o].to_vec());
        offset += o;
    }
    Mlp::from_parts(weights, biases, acts)
}
