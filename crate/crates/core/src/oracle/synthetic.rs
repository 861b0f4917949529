//! Synthetic response functions. All evaluators here are noiseless; the
//! oracle adds observation noise.

use std::f64::consts::{FRAC_1_PI, PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn in_range(v: f64, lo: f64, hi: f64, what: &str) -> Result<()> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} = {v} outside [{lo}, {hi}]")))
    }
}

/// `sin(2 pi x)` on `[0, 1]`.
pub fn eval_sine1d(x: f64) -> Result<f64> {
    in_range(x, 0.0, 1.0, "sine1d input")?;
    Ok((TAU * x).sin())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sine2DParams {
    /// Row `k` is the weight vector of component `k`.
    pub weights: [[f64; 2]; 2],
    pub phases: [f64; 2],
}

impl Sine2DParams {
    pub const JITTER_STD: f64 = 0.05;

    pub fn default_weights() -> [[f64; 2]; 2] {
        [[0.25, -FRAC_1_PI], [0.1, 0.02]]
    }

    /// Default weights plus Gaussian jitter, phases uniform on `[-pi, pi]`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut weights = Self::default_weights();
        for row in weights.iter_mut() {
            for w in row.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *w += Self::JITTER_STD * e;
            }
        }
        let phase = Uniform::new_inclusive(-PI, PI).expect("valid range");
        let phases = [phase.sample(rng), phase.sample(rng)];
        Self { weights, phases }
    }
}

/// Mean of `sin(w_k . x + phi_k)` over the two components, `x` in `[-pi, pi]^2`.
pub fn eval_sine2d(x: [f64; 2], params: &Sine2DParams) -> Result<f64> {
    for v in x {
        in_range(v, -PI, PI, "sine2d input")?;
    }
    let k = params.weights.len() as f64;
    Ok(params
        .weights
        .iter()
        .zip(params.phases)
        .map(|(w, phi)| (w[0] * x[0] + w[1] * x[1] + phi).sin())
        .sum::<f64>()
        / k)
}

/// Standard Branin-Hoo on its native domain.
pub fn branin_raw(x1: f64, x2: f64) -> f64 {
    let a = 1.0;
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let r = 6.0;
    let s = 10.0;
    let t = 1.0 / (8.0 * PI);
    a * (x2 - b * x1 * x1 + c * x1 - r).powi(2) + s * (1.0 - t) * x1.cos() + s
}

/// Maps the unit square onto `[-5, 10] x [0, 15]`.
pub fn branin_rescale(x: [f64; 2]) -> Result<[f64; 2]> {
    for v in x {
        in_range(v, 0.0, 1.0, "branin input")?;
    }
    Ok([15.0 * x[0] - 5.0, 15.0 * x[1]])
}

/// Min-max constants of `-f` over a pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BraninNormalization {
    pub y_min: f64,
    pub y_max: f64,
}

impl BraninNormalization {
    pub fn from_raw(raw: &[f64]) -> Result<Self> {
        let inverted = raw.iter().map(|f| -f);
        let y_min = inverted.clone().fold(f64::INFINITY, f64::min);
        let y_max = inverted.fold(f64::NEG_INFINITY, f64::max);
        if !(y_max > y_min) {
            return Err(Error::InvalidInput(
                "branin normalization needs at least two distinct raw values".into(),
            ));
        }
        Ok(Self { y_min, y_max })
    }
}

/// Inverted, min-max normalized Branin at a unit-square point.
pub fn eval_branin(x: [f64; 2], norm: &BraninNormalization) -> Result<f64> {
    let [u, v] = branin_rescale(x)?;
    Ok((-branin_raw(u, v) - norm.y_min) / (norm.y_max - norm.y_min))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayGene {
    pub embedding: [f64; 2],
    pub pathway: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwaysParams {
    pub centers: [[f64; 2]; 4],
    pub amplitudes: [f64; 4],
    pub widths: [f64; 4],
    pub gene_scatter: f64,
    pub alpha: f64,
    pub interaction: f64,
    pub genes: Vec<PathwayGene>,
}

impl PathwaysParams {
    pub const CENTERS: [[f64; 2]; 4] = [[0.2, 0.2], [0.8, 0.2], [0.2, 0.8], [0.8, 0.8]];

    /// Pathway amplitudes `U(0.8, 1.5) * 2.5`, widths `U(0.15, 0.25)`, and
    /// `n_genes` genes assigned uniformly to pathways with embeddings
    /// scattered around their pathway center.
    pub fn sample<R: Rng + ?Sized>(n_genes: usize, rng: &mut R) -> Self {
        let amp = Uniform::new(0.8, 1.5).expect("valid range");
        let width = Uniform::new(0.15, 0.25).expect("valid range");
        let amplitudes = std::array::from_fn(|_| amp.sample(rng) * 2.5);
        let widths = std::array::from_fn(|_| width.sample(rng));
        let gene_scatter = 0.12;
        let scatter = Normal::new(0.0, gene_scatter).expect("valid sd");
        let genes = (0..n_genes)
            .map(|_| {
                let pathway = rng.random_range(0..4);
                let c = Self::CENTERS[pathway];
                PathwayGene {
                    embedding: [c[0] + scatter.sample(rng), c[1] + scatter.sample(rng)],
                    pathway,
                }
            })
            .collect();
        Self {
            centers: Self::CENTERS,
            amplitudes,
            widths,
            gene_scatter,
            alpha: 0.4,
            interaction: 0.3,
            genes,
        }
    }
}

/// Pathway activation plus gene-specific and gene-by-context terms for
/// gene `gene` perturbed in context `z`.
pub fn eval_pathways(params: &PathwaysParams, gene: usize, z: [f64; 2]) -> Result<f64> {
    let info = params
        .genes
        .get(gene)
        .ok_or_else(|| Error::InvalidInput(format!("gene {gene} is not in the pathway table")))?;
    let k = info.pathway;
    let [g1, g2] = info.embedding;
    let mu = params.centers[k];
    let d2 = (z[0] - mu[0]).powi(2) + (z[1] - mu[1]).powi(2);
    let activation = params.amplitudes[k] * (-d2 / (2.0 * params.widths[k].powi(2))).exp();
    let modulation = params.alpha * (2.0 * TAU * g1).sin() * (2.0 * TAU * g2).cos();
    let interaction = params.interaction * (TAU * (g1 + z[0])).sin() * (TAU * (g2 + z[1])).cos();
    Ok(activation + modulation + interaction)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemParams {
    pub genes: Vec<[f64; 2]>,
    pub coefficients: [f64; 5],
}

impl SemParams {
    pub const COEFFICIENTS: [f64; 5] = [1.5, 0.8, 0.4, 0.6, 0.5];

    /// `n_genes` gene positions uniform on the unit square.
    pub fn sample<R: Rng + ?Sized>(n_genes: usize, rng: &mut R) -> Self {
        let genes = (0..n_genes).map(|_| [rng.random(), rng.random()]).collect();
        Self {
            genes,
            coefficients: Self::COEFFICIENTS,
        }
    }
}

/// Additive structural model over `x = [g1, g2, c1, c2, e1, e2]`.
pub fn eval_sem(x: [f64; 6], coefficients: &[f64; 5]) -> Result<f64> {
    for &v in &x[2..] {
        in_range(v, 0.0, 1.0, "sem cell/environment coordinate")?;
    }
    let [g1, g2, c1, c2, e1, e2] = x;
    let [a, b, c, d, e] = *coefficients;
    Ok(a * (TAU * g1).sin() * (TAU * g2).cos()
        + b * (PI * c1).sin()
        + c * (PI * c2).cos()
        + d * (PI * e1).sin() * (PI * e2).cos()
        + e * (PI * (g1 + c1)).sin() * (PI * (g2 + c2)).cos())
}
