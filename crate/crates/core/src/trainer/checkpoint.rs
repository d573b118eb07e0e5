//! `GLCK1` checkpoint files.
//!
//! Layout (little-endian): magic `GLCK` and version byte `1`; u32-length
//! config JSON; u16-length config hash; u64 step; RNG state (32-byte seed,
//! u64 stream, u128 word position); sampler (u64 cursor, u32 count, u32
//! indices); vocabulary (u32 count, u16-length words); u64 Adam step; u32
//! parameter count and per parameter a u16-length name, u32 rows, u32 cols,
//! then values, first moments and second moments as f64.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::AdamState;
use super::{config_hash, Sampler, TrainConfig};
use crate::binio::{checked_u32, ByteReader, ByteWriter};
use crate::encoders::{EncoderParams, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::text::Vocabulary;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GLCK";
pub const CHECKPOINT_VERSION: u8 = b'1';

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub config_hash: String,
    pub step: u64,
    pub rng: RngState,
    pub sampler: Sampler,
    pub vocab: Vocabulary,
    pub params: EncoderParams,
    pub adam: AdamState,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::default();
        w.bytes(CHECKPOINT_MAGIC);
        w.u8(CHECKPOINT_VERSION);
        w.long_string(&serde_json::to_string(&self.config)?)?;
        w.short_string(&self.config_hash)?;
        w.u64(self.step);
        w.bytes(&self.rng.seed);
        w.u64(self.rng.stream);
        w.u128(self.rng.word_pos);
        w.u64(self.sampler.cursor as u64);
        w.u32(checked_u32(self.sampler.order.len(), "sampler order")?);
        for &i in &self.sampler.order {
            w.u32(checked_u32(i, "sampler index")?);
        }
        w.u32(checked_u32(self.vocab.len(), "vocabulary size")?);
        for word in self.vocab.words() {
            w.short_string(word)?;
        }
        w.u64(self.adam.t);
        let tensors = self.params.tensors();
        w.u32(checked_u32(tensors.len(), "parameter count")?);
        let have_moments = !self.adam.m.is_empty();
        for (k, (name, t)) in PARAM_NAMES.iter().zip(tensors).enumerate() {
            w.short_string(name)?;
            let (r, c) = t.dims();
            w.u32(checked_u32(r, "rows")?);
            w.u32(checked_u32(c, "cols")?);
            for &v in t.data() {
                w.f64(v);
            }
            for buf in [&self.adam.m, &self.adam.v] {
                if have_moments {
                    buf[k].data().iter().for_each(|&v| w.f64(v));
                } else {
                    (0..t.numel()).for_each(|_| w.f64(0.0));
                }
            }
        }
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "not a checkpoint file (bad magic)".into(),
            });
        }
        let version = r.u8("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: format!("GLCK{}", version as char),
                expected: "GLCK1".into(),
            });
        }
        let config_at = r.offset();
        let config: TrainConfig = serde_json::from_str(&r.long_string("config")?).map_err(|e| Error::Format {
            offset: config_at,
            message: format!("invalid config JSON: {e}"),
        })?;
        let stored_hash = r.short_string("config hash")?;
        if stored_hash != config_hash(&config)? {
            return Err(Error::Consistency("checkpoint config hash does not match its config".into()));
        }
        let step = r.u64("step")?;
        let seed: [u8; 32] = r.take(32, "rng seed")?.try_into().expect("length checked");
        let rng = RngState {
            seed,
            stream: r.u64("rng stream")?,
            word_pos: r.u128("rng word position")?,
        };
        let cursor = r.u64("sampler cursor")? as usize;
        let n = r.u32("sampler order length")? as usize;
        let mut order = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            order.push(r.u32("sampler index")? as usize);
        }
        if cursor > order.len() {
            return r.fail(format!("sampler cursor {cursor} beyond order of length {}", order.len()));
        }
        let sampler = Sampler::restore(order, cursor, config.batch_size);
        let vn = r.u32("vocabulary size")? as usize;
        let mut words = Vec::with_capacity(vn.min(1 << 20));
        for _ in 0..vn {
            words.push(r.short_string("vocabulary word")?);
        }
        let vocab = Vocabulary::from(words);
        let t = r.u64("optimizer step")?;
        let count = r.u32("parameter count")? as usize;
        if count != PARAM_NAMES.len() {
            return r.fail(format!("expected {} parameters, found {count}", PARAM_NAMES.len()));
        }
        let mut values = Vec::with_capacity(count);
        let mut m = Vec::with_capacity(count);
        let mut v = Vec::with_capacity(count);
        for expected in PARAM_NAMES {
            let name = r.short_string("parameter name")?;
            if name != expected {
                return r.fail(format!("expected parameter {expected}, found {name}"));
            }
            let rows = r.u32("rows")? as usize;
            let cols = r.u32("cols")? as usize;
            if rows == 0 || cols == 0 {
                return r.fail(format!("parameter {name} has an empty shape"));
            }
            for out in [&mut values, &mut m, &mut v] {
                let mut data = Vec::with_capacity((rows * cols).min(1 << 24));
                for _ in 0..rows * cols {
                    data.push(r.f64("parameter data")?);
                }
                out.push(Tensor::matrix(rows, cols, data)?);
            }
        }
        if !r.is_at_end() {
            return r.fail("trailing bytes after checkpoint");
        }
        let params = EncoderParams::from_tensors(config.encoder.clone(), values)?;
        let adam = if t == 0 { AdamState::default() } else { AdamState { t, m, v } };
        Ok(Self {
            config,
            config_hash: stored_hash,
            step,
            rng,
            sampler,
            vocab,
            params,
            adam,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    ckpt.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}
