//! Toy image and text encoders producing local (per-region / per-word) and
//! global features.
//!
//! Image: each region is average-pooled to a patch vector, projected to `D`
//! dims and L2-normalized; the global feature is the normalized projection
//! of the mean of the un-normalized region vectors. Text: each word is an
//! embedding-table row plus an optional sinusoidal position term; the
//! global feature is the normalized projection of the mean word vector.
//!
//! The batched graph builders are used for training and, with constant
//! parameters, for inference, so both paths share one implementation.

mod glre;
mod image;
mod params;

pub use glre::{load_external_embeddings, read_glre, write_glre, GLRE_MAGIC};
pub use image::ImageGrid;
pub use params::{EncoderConfig, EncoderParams, PARAM_NAMES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Text,
}

/// Token ids of one text.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence(Vec<usize>);

impl TokenSequence {
    /// Checks `1 ≤ T ≤ max_length` and every id `< vocab_size`.
    pub fn new(ids: Vec<usize>, vocab_size: usize, max_length: usize) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Empty("token sequence"));
        }
        if ids.len() > max_length {
            return Err(Error::Contract(format!(
                "token sequence of length {} exceeds max length {max_length}",
                ids.len()
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= vocab_size) {
            return Err(Error::Vocabulary {
                token: bad,
                vocab_size,
            });
        }
        Ok(Self(ids))
    }

    pub(crate) fn from_ids_unchecked(ids: Vec<usize>) -> Self {
        Self(ids)
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Encoder output for one image or one text.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGlobalFeatures {
    /// `[R, D]` or `[T, D]`, unit rows.
    pub local: Tensor,
    /// `[D]`, unit norm.
    pub global: Tensor,
    pub modality: Modality,
}

impl LocalGlobalFeatures {
    pub fn dim(&self) -> usize {
        self.global.numel()
    }
}

/// Sinusoidal position terms `[T, D]`, scaled by `scale`.
pub fn sinusoidal_positions(len: usize, dim: usize, scale: f64) -> Tensor {
    let mut data = vec![0.0; len * dim];
    for t in 0..len {
        for k in (0..dim).step_by(2) {
            let freq = 1.0 / 10000f64.powf(k as f64 / dim as f64);
            let angle = t as f64 * freq;
            data[t * dim + k] = scale * angle.sin();
            if k + 1 < dim {
                data[t * dim + k + 1] = scale * angle.cos();
            }
        }
    }
    Tensor::matrix(len, dim, data).expect("positive sizes")
}

/// Encoder parameters registered on a tape.
#[derive(Debug, Clone, Copy)]
pub struct EncoderVars {
    pub patch_proj: Var,
    pub patch_bias: Var,
    pub token_table: Var,
    pub image_global_proj: Var,
    pub text_global_proj: Var,
}

impl EncoderVars {
    pub fn register(tape: &mut Tape, params: &EncoderParams, trainable: bool) -> Self {
        let mut leaf = |t: &Tensor| tape.leaf(t.clone(), trainable);
        Self {
            patch_proj: leaf(&params.patch_proj),
            patch_bias: leaf(&params.patch_bias),
            token_table: leaf(&params.token_table),
            image_global_proj: leaf(&params.image_global_proj),
            text_global_proj: leaf(&params.text_global_proj),
        }
    }

    pub fn all(&self) -> [Var; 5] {
        [
            self.patch_proj,
            self.patch_bias,
            self.token_table,
            self.image_global_proj,
            self.text_global_proj,
        ]
    }
}

/// Pooled patches of a batch of images, stacked region-major per image.
#[derive(Debug, Clone)]
pub struct ImageBatch {
    /// `[n·R, patch_dim]`
    pub patches: Tensor,
    pub count: usize,
    pub regions: usize,
}

impl ImageBatch {
    pub fn from_patches(per_image: &[&Tensor]) -> Result<Self> {
        let first = per_image.first().ok_or(Error::Empty("image batch"))?;
        let (regions, pdim) = first.dims();
        let mut data = Vec::with_capacity(per_image.len() * regions * pdim);
        for p in per_image {
            if p.dims() != (regions, pdim) {
                return Err(Error::dim("image batch", first.shape(), p.shape()));
            }
            data.extend_from_slice(p.data());
        }
        Ok(Self {
            patches: Tensor::matrix(per_image.len() * regions, pdim, data)?,
            count: per_image.len(),
            regions,
        })
    }

    pub fn from_images(images: &[&ImageGrid], config: &EncoderConfig) -> Result<Self> {
        let patches = images
            .iter()
            .map(|img| image_patches(img, config))
            .collect::<Result<Vec<_>>>()?;
        Self::from_patches(&patches.iter().collect::<Vec<_>>())
    }
}

/// Checks an image against the encoder grid and pools its patches.
pub fn image_patches(img: &ImageGrid, config: &EncoderConfig) -> Result<Tensor> {
    if img.grid() != (config.grid_rows, config.grid_cols) {
        return Err(Error::dim(
            "image grid",
            &[img.grid().0, img.grid().1],
            &[config.grid_rows, config.grid_cols],
        ));
    }
    img.patch_vectors(config.patch_pool)
}

/// Token ids of a batch of texts, concatenated, with segment offsets.
#[derive(Debug, Clone)]
pub struct TextBatch {
    pub ids: Vec<usize>,
    /// `offsets[j]..offsets[j + 1]` are the rows of text `j`.
    pub offsets: Vec<usize>,
    /// Position term per row, `[N, D]`; `None` when positions are off.
    pub positions: Option<Tensor>,
}

impl TextBatch {
    pub fn new(seqs: &[&TokenSequence], config: &EncoderConfig) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::Empty("text batch"));
        }
        let mut ids = Vec::new();
        let mut offsets = vec![0];
        let mut pos_data = Vec::new();
        for s in seqs {
            if s.is_empty() {
                return Err(Error::Empty("token sequence"));
            }
            if s.len() > config.max_length {
                return Err(Error::Contract(format!(
                    "token sequence of length {} exceeds max length {}",
                    s.len(),
                    config.max_length
                )));
            }
            if let Some(&bad) = s.ids().iter().find(|&&id| id >= config.vocab_size) {
                return Err(Error::Vocabulary {
                    token: bad,
                    vocab_size: config.vocab_size,
                });
            }
            ids.extend_from_slice(s.ids());
            offsets.push(ids.len());
            if config.positions {
                pos_data.extend(
                    sinusoidal_positions(s.len(), config.dim, config.position_scale).into_data(),
                );
            }
        }
        let positions = if config.positions {
            Some(Tensor::matrix(ids.len(), config.dim, pos_data)?)
        } else {
            None
        };
        Ok(Self {
            ids,
            offsets,
            positions,
        })
    }

    pub fn count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn segment(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }
}

/// Batch features on a tape: local rows of all items stacked, one global row
/// per item.
#[derive(Debug, Clone, Copy)]
pub struct EncodedBatch {
    pub local: Var,
    pub global: Var,
}

/// `[n, rows]` matrix averaging each item's rows.
fn averaging_matrix(bounds: &[(usize, usize)], rows: usize) -> Result<Tensor> {
    let mut data = vec![0.0; bounds.len() * rows];
    for (i, &(start, end)) in bounds.iter().enumerate() {
        let w = 1.0 / (end - start) as f64;
        for r in start..end {
            data[i * rows + r] = w;
        }
    }
    Tensor::matrix(bounds.len(), rows, data)
}

pub fn encode_image_graph(
    tape: &mut Tape,
    vars: &EncoderVars,
    batch: &ImageBatch,
) -> Result<EncodedBatch> {
    let rows = batch.count * batch.regions;
    let x = tape.constant(batch.patches.clone());
    let projected = tape.matmul(x, vars.patch_proj)?;
    let ones = tape.constant(Tensor::full(&[rows, 1], 1.0)?);
    let bias = tape.matmul(ones, vars.patch_bias)?;
    let pre = tape.add(projected, bias)?;
    let local = tape.l2_normalize_rows(pre)?;
    let bounds: Vec<_> = (0..batch.count)
        .map(|i| (i * batch.regions, (i + 1) * batch.regions))
        .collect();
    let avg = tape.constant(averaging_matrix(&bounds, rows)?);
    let pooled = tape.matmul(avg, pre)?;
    let proj = tape.matmul(pooled, vars.image_global_proj)?;
    let global = tape.l2_normalize_rows(proj)?;
    Ok(EncodedBatch { local, global })
}

pub fn encode_text_graph(
    tape: &mut Tape,
    vars: &EncoderVars,
    batch: &TextBatch,
) -> Result<EncodedBatch> {
    let rows = batch.ids.len();
    let emb = tape.gather_rows(vars.token_table, &batch.ids)?;
    let pre = match &batch.positions {
        Some(pos) => {
            let p = tape.constant(pos.clone());
            tape.add(emb, p)?
        }
        None => emb,
    };
    let local = tape.l2_normalize_rows(pre)?;
    let bounds: Vec<_> = (0..batch.count())
        .map(|j| (batch.offsets[j], batch.offsets[j + 1]))
        .collect();
    let avg = tape.constant(averaging_matrix(&bounds, rows)?);
    let pooled = tape.matmul(avg, pre)?;
    let proj = tape.matmul(pooled, vars.text_global_proj)?;
    let global = tape.l2_normalize_rows(proj)?;
    Ok(EncodedBatch { local, global })
}

fn split_features(
    tape: &Tape,
    enc: EncodedBatch,
    bounds: impl Iterator<Item = std::ops::Range<usize>>,
    modality: Modality,
) -> Result<Vec<LocalGlobalFeatures>> {
    let local = tape.value(enc.local);
    let global = tape.value(enc.global);
    let d = global.cols();
    bounds
        .enumerate()
        .map(|(i, range)| {
            let len = range.len();
            let data = local.data()[range.start * d..range.end * d].to_vec();
            Ok(LocalGlobalFeatures {
                local: Tensor::matrix(len, d, data)?,
                global: Tensor::vector(global.row(i).to_vec())?,
                modality,
            })
        })
        .collect()
}

/// Encodes many images with fixed parameters.
pub fn encode_images(
    images: &[&ImageGrid],
    params: &EncoderParams,
) -> Result<Vec<LocalGlobalFeatures>> {
    let batch = ImageBatch::from_images(images, &params.config)?;
    encode_image_batch(&batch, params)
}

pub fn encode_image_batch(
    batch: &ImageBatch,
    params: &EncoderParams,
) -> Result<Vec<LocalGlobalFeatures>> {
    if batch.patches.cols() != params.config.patch_dim() {
        return Err(Error::dim(
            "image patches",
            batch.patches.shape(),
            params.patch_proj.shape(),
        ));
    }
    let mut tape = Tape::new();
    let vars = EncoderVars::register(&mut tape, params, false);
    let enc = encode_image_graph(&mut tape, &vars, batch)?;
    let r = batch.regions;
    split_features(&tape, enc, (0..batch.count).map(|i| i * r..(i + 1) * r), Modality::Image)
}

/// Encodes many texts with fixed parameters.
pub fn encode_texts(
    seqs: &[&TokenSequence],
    params: &EncoderParams,
) -> Result<Vec<LocalGlobalFeatures>> {
    let batch = TextBatch::new(seqs, &params.config)?;
    let mut tape = Tape::new();
    let vars = EncoderVars::register(&mut tape, params, false);
    let enc = encode_text_graph(&mut tape, &vars, &batch)?;
    split_features(&tape, enc, (0..batch.count()).map(|j| batch.segment(j)), Modality::Text)
}

pub fn encode_image_toy(img: &ImageGrid, params: &EncoderParams) -> Result<LocalGlobalFeatures> {
    Ok(encode_images(&[img], params)?.remove(0))
}

pub fn encode_text_toy(seq: &TokenSequence, params: &EncoderParams) -> Result<LocalGlobalFeatures> {
    Ok(encode_texts(&[seq], params)?.remove(0))
}
