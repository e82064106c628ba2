use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;

use super::DEFAULT_SAMPLE_POINTS;

/// Layer widths. The per-point MLP is `3 -> hidden1 -> hidden2`, the head
/// `hidden2 -> hidden3 -> embed_dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub hidden1: usize,
    pub hidden2: usize,
    pub hidden3: usize,
    pub embed_dim: usize,
    /// Points per sampled proxy fed to `forward`.
    pub num_points: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden1: 64,
            hidden2: 128,
            hidden3: 128,
            embed_dim: 64,
            num_points: DEFAULT_SAMPLE_POINTS,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.hidden1,
            self.hidden2,
            self.hidden3,
            self.embed_dim,
            self.num_points,
        ];
        if dims.contains(&0) {
            return Err(Error::Config(format!("encoder sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of the four dense layers.
    pub fn layer_shapes(&self) -> [(usize, usize); 4] {
        [
            (3, self.hidden1),
            (self.hidden1, self.hidden2),
            (self.hidden2, self.hidden3),
            (self.hidden3, self.embed_dim),
        ]
    }
}

/// Affine layer `y = W x + b` with `W` stored as `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: DMatrix::zeros(fan_out, fan_in),
            bias: DVector::zeros(fan_out),
        }
    }
}

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    config: EncoderConfig,
    layers: [Dense; 4],
    generation: u64,
}

impl PartialEq for EncoderParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.layers == other.layers
    }
}

impl EncoderParams {
    pub fn zeros(config: EncoderConfig) -> Self {
        let layers = config.layer_shapes().map(|(i, o)| Dense::zeros(i, o));
        Self {
            config,
            layers,
            generation: next_generation(),
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Dense; 4] {
        &self.layers
    }

    /// Mutable layer access; invalidates every cache computed so far.
    pub fn layers_mut(&mut self) -> &mut [Dense; 4] {
        self.generation = next_generation();
        &mut self.layers
    }

    /// Flat views in the order `W1 b1 W2 b2 W3 b3 W4 b4` (weights column-major).
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut()
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Same shapes as [`EncoderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGradients {
    pub layers: [Dense; 4],
}

impl EncoderGradients {
    pub fn zeros(config: &EncoderConfig) -> Self {
        Self {
            layers: config.layer_shapes().map(|(i, o)| Dense::zeros(i, o)),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn add_assign(&mut self, other: &EncoderGradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0))
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(seed: u64, config: EncoderConfig) -> Result<EncoderParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = EncoderParams::zeros(config);
    for layer in params.layers_mut().iter_mut() {
        let (fan_out, fan_in) = layer.weight.shape();
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for r in 0..fan_out {
            for c in 0..fan_in {
                layer.weight[(r, c)] = rng.random_range(-a..a);
            }
        }
    }
    Ok(params)
}

/// Intermediate values kept for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    /// `n x 3` input.
    points: DMatrix<f64>,
    /// `n x hidden1` first-layer pre-activations.
    z1: DMatrix<f64>,
    /// Pooled features `max(0, max_i z2[i, j])`.
    pooled: DVector<f64>,
    /// Lowest point index attaining the channel maximum.
    argmax: Vec<usize>,
    z3: DVector<f64>,
    a3: DVector<f64>,
    z4_norm: f64,
    embedding: DVector<f64>,
}

impl ForwardCache {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }

    pub fn pooled(&self) -> &DVector<f64> {
        &self.pooled
    }
}

fn relu_in_place(m: &mut DMatrix<f64>) {
    m.iter_mut().for_each(|v| *v = v.max(0.0));
}

fn add_row_bias(m: &mut DMatrix<f64>, bias: &DVector<f64>) {
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col.add_scalar_mut(bias[j]);
    }
}

/// Embeds a sampled point set into a unit vector.
pub fn forward(params: &EncoderParams, sampled: &PointCloud) -> Result<(EmbeddingVector, ForwardCache)> {
    let cfg = params.config();
    if sampled.len() != cfg.num_points {
        return Err(Error::DimensionMismatch {
            expected: cfg.num_points,
            actual: sampled.len(),
        });
    }
    let n = sampled.len();
    let points = DMatrix::from_fn(n, 3, |i, k| {
        let p = sampled.points()[i];
        [p.x, p.y, p.z][k]
    });
    let [l1, l2, l3, l4] = params.layers();

    let mut z1 = &points * l1.weight.transpose();
    add_row_bias(&mut z1, &l1.bias);
    let mut a1 = z1.clone();
    relu_in_place(&mut a1);
    let mut z2 = &a1 * l2.weight.transpose();
    add_row_bias(&mut z2, &l2.bias);

    let mut pooled = DVector::zeros(cfg.hidden2);
    let mut argmax = vec![0usize; cfg.hidden2];
    for (j, col) in z2.column_iter().enumerate() {
        let mut best = 0;
        for i in 1..n {
            if col[i] > col[best] {
                best = i;
            }
        }
        argmax[j] = best;
        pooled[j] = col[best].max(0.0);
    }

    let z3 = &l3.weight * &pooled + &l3.bias;
    let a3 = z3.map(|v| v.max(0.0));
    let z4 = &l4.weight * &a3 + &l4.bias;
    let z4_norm = z4.norm();
    if z4_norm == 0.0 || !z4_norm.is_finite() {
        return Err(Error::DegenerateEmbedding);
    }
    let embedding = z4 / z4_norm;
    let out = EmbeddingVector::new(embedding.iter().copied().collect())?;
    Ok((
        out,
        ForwardCache {
            generation: params.generation,
            points,
            z1,
            pooled,
            argmax,
            z3,
            a3,
            z4_norm,
            embedding,
        },
    ))
}

/// Gradients of a scalar loss with respect to every parameter, given its
/// gradient with respect to the (normalized) embedding.
pub fn backward(
    params: &EncoderParams,
    cache: &ForwardCache,
    grad_embedding: &EmbeddingVector,
) -> Result<EncoderGradients> {
    if cache.generation != params.generation {
        return Err(Error::StaleCache);
    }
    let cfg = params.config();
    if grad_embedding.dim() != cfg.embed_dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.embed_dim,
            actual: grad_embedding.dim(),
        });
    }
    let [_, l2, l3, l4] = params.layers();
    let mut grads = EncoderGradients::zeros(cfg);

    // d(z/|z|)/dz = (I - f fᵀ) / |z|
    let g = DVector::from_column_slice(grad_embedding.values());
    let f = &cache.embedding;
    let dz4 = (&g - f * f.dot(&g)) / cache.z4_norm;

    grads.layers[3].weight = &dz4 * cache.a3.transpose();
    grads.layers[3].bias = dz4.clone();
    let mut dz3 = l4.weight.tr_mul(&dz4);
    dz3.zip_apply(&cache.z3, |d, z| {
        if z <= 0.0 {
            *d = 0.0
        }
    });

    grads.layers[2].weight = &dz3 * cache.pooled.transpose();
    grads.layers[2].bias = dz3.clone();
    let dpooled = l3.weight.tr_mul(&dz3);

    // Route each channel's gradient to its argmax point; channels whose
    // maximum is clipped by the ReLU carry none.
    let mut per_point: std::collections::BTreeMap<usize, DVector<f64>> = Default::default();
    for j in 0..cfg.hidden2 {
        if cache.pooled[j] > 0.0 && dpooled[j] != 0.0 {
            per_point
                .entry(cache.argmax[j])
                .or_insert_with(|| DVector::zeros(cfg.hidden2))[j] = dpooled[j];
        }
    }

    for (&i, dz2) in &per_point {
        let z1 = cache.z1.row(i).transpose();
        let a1 = z1.map(|v| v.max(0.0));
        grads.layers[1].weight += dz2 * a1.transpose();
        grads.layers[1].bias += dz2;
        let mut dz1 = l2.weight.tr_mul(dz2);
        dz1.zip_apply(&z1, |d, z| {
            if z <= 0.0 {
                *d = 0.0
            }
        });
        let x = cache.points.row(i);
        grads.layers[0].weight += &dz1 * x;
        grads.layers[0].bias += &dz1;
    }
    Ok(grads)
}
