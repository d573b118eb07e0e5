use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Shape hyperparameters of the toy encoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Embedding dimension shared by both modalities.
    pub dim: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Each region is average-pooled into `patch_pool × patch_pool` cells.
    pub patch_pool: usize,
    pub vocab_size: usize,
    pub max_length: usize,
    /// Add sinusoidal position terms to word vectors.
    pub positions: bool,
    pub position_scale: f64,
    /// Half-width of the uniform initialization range.
    pub init_range: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            grid_rows: 3,
            grid_cols: 3,
            patch_pool: 4,
            vocab_size: 0,
            max_length: 97,
            positions: true,
            position_scale: 0.01,
            init_range: 0.05,
        }
    }
}

impl EncoderConfig {
    pub fn regions(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_pool * self.patch_pool
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Contract(format!(
                "embedding dimension must be at least 2, got {}",
                self.dim
            )));
        }
        if self.grid_rows == 0 || self.grid_cols == 0 || self.patch_pool == 0 {
            return Err(Error::Contract("region grid and pooling must be positive".into()));
        }
        if self.vocab_size == 0 || self.max_length == 0 {
            return Err(Error::Contract("vocabulary size and max length must be positive".into()));
        }
        if !(self.init_range.is_finite() && self.init_range > 0.0) {
            return Err(Error::Parameter {
                name: "init_range",
                value: self.init_range,
                reason: "must be a finite positive number",
            });
        }
        if !self.position_scale.is_finite() {
            return Err(Error::Parameter {
                name: "position_scale",
                value: self.position_scale,
                reason: "must be finite",
            });
        }
        Ok(())
    }
}

pub const PARAM_NAMES: [&str; 5] = [
    "patch_proj",
    "patch_bias",
    "token_table",
    "image_global_proj",
    "text_global_proj",
];

/// Trainable weights of both toy encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    /// `[patch_dim, D]`
    pub patch_proj: Tensor,
    /// `[1, D]`
    pub patch_bias: Tensor,
    /// `[V, D]`
    pub token_table: Tensor,
    /// `[D, D]`
    pub image_global_proj: Tensor,
    /// `[D, D]`
    pub text_global_proj: Tensor,
}

impl EncoderParams {
    /// Every weight drawn from `uniform(-init_range, init_range)`.
    pub fn init<R: Rng>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let dist = Uniform::new_inclusive(-config.init_range, config.init_range);
        let mut draw = |rows: usize, cols: usize| {
            Tensor::matrix(rows, cols, (0..rows * cols).map(|_| dist.sample(rng)).collect())
        };
        let d = config.dim;
        Ok(Self {
            patch_proj: draw(config.patch_dim(), d)?,
            patch_bias: draw(1, d)?,
            token_table: draw(config.vocab_size, d)?,
            image_global_proj: draw(d, d)?,
            text_global_proj: draw(d, d)?,
            config,
        })
    }

    pub fn tensors(&self) -> [&Tensor; 5] {
        [
            &self.patch_proj,
            &self.patch_bias,
            &self.token_table,
            &self.image_global_proj,
            &self.text_global_proj,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 5] {
        [
            &mut self.patch_proj,
            &mut self.patch_bias,
            &mut self.token_table,
            &mut self.image_global_proj,
            &mut self.text_global_proj,
        ]
    }

    /// Rebuilds parameters from tensors in [`PARAM_NAMES`] order.
    pub fn from_tensors(config: EncoderConfig, tensors: Vec<Tensor>) -> Result<Self> {
        let [patch_proj, patch_bias, token_table, image_global_proj, text_global_proj]: [Tensor; 5] =
            tensors
                .try_into()
                .map_err(|v: Vec<Tensor>| Error::Consistency(format!("expected 5 parameter tensors, got {}", v.len())))?;
        let params = Self {
            config,
            patch_proj,
            patch_bias,
            token_table,
            image_global_proj,
            text_global_proj,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let c = &self.config;
        let d = c.dim;
        let expected = [
            [c.patch_dim(), d],
            [1, d],
            [c.vocab_size, d],
            [d, d],
            [d, d],
        ];
        for ((name, t), want) in PARAM_NAMES.iter().zip(self.tensors()).zip(expected) {
            if t.shape() != want {
                return Err(Error::Consistency(format!(
                    "parameter {name} has shape {:?}, expected {want:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::Consistency(format!("parameter {name} is not finite")));
            }
        }
        Ok(())
    }
}
