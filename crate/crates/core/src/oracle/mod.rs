//! Ground-truth oracles and candidate-pool construction.

pub mod synthetic;
pub mod tabular;

use std::fmt;
use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::CandidatePool;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub use synthetic::{
    branin_raw, branin_rescale, eval_branin, eval_pathways, eval_sem, eval_sine1d, eval_sine2d,
    BraninNormalization, PathwayGene, PathwaysParams, SemParams, Sine2DParams,
};
pub use tabular::{load_tabular, write_tabular, TabularDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Sine1d,
    Sine2d,
    Branin,
    Pathways,
    Sem,
    Tabular,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Sine1d => "sine1d",
            Family::Sine2d => "sine2d",
            Family::Branin => "branin",
            Family::Pathways => "pathways",
            Family::Sem => "sem",
            Family::Tabular => "tabular",
        }
    }

    pub fn default_pool_size(self) -> Option<usize> {
        match self {
            Family::Sine1d | Family::Sine2d | Family::Branin => Some(500),
            Family::Pathways | Family::Sem => Some(1000),
            Family::Tabular => None,
        }
    }

    pub fn default_noise_std(self) -> f64 {
        match self {
            Family::Sine1d => 0.05,
            Family::Sine2d | Family::Tabular => 0.0,
            Family::Branin => 0.02,
            Family::Pathways | Family::Sem => 0.08,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Family::Sine1d,
            Family::Sine2d,
            Family::Branin,
            Family::Pathways,
            Family::Sem,
            Family::Tabular,
        ]
        .into_iter()
        .find(|f| f.name() == s)
        .ok_or_else(|| Error::InvalidInput(format!("unknown oracle family `{s}`")))
    }
}

/// How candidate inputs are laid out on the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// i.i.d. uniform draws.
    #[default]
    Uniform,
    /// Evenly spaced points including both endpoints (1-D families only).
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularSource {
    pub path: PathBuf,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name_column: Option<String>,
}

/// Oracle description. Unset fields fall back to per-family defaults; see
/// [`OracleSpec::resolved`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_std: Option<f64>,
    /// Fixes the dataset across campaign seeds when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub layout: Layout,
    /// Gene table size for `sem` (pathways uses one gene per candidate).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_genes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tabular: Option<TabularSource>,
}

impl OracleSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            pool_size: None,
            noise_std: None,
            seed: None,
            layout: Layout::Uniform,
            n_genes: None,
            tabular: None,
        }
    }

    pub fn with_pool_size(mut self, n: usize) -> Self {
        self.pool_size = Some(n);
        self
    }

    pub fn with_noise(mut self, noise_std: f64) -> Self {
        self.noise_std = Some(noise_std);
        self
    }

    pub fn with_layout(mut self, layout: Layout) -> Self {
        self.layout = layout;
        self
    }

    pub fn tabular(source: TabularSource) -> Self {
        Self {
            tabular: Some(source),
            ..Self::new(Family::Tabular)
        }
    }

    /// Copy with every defaultable field made explicit.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        if out.pool_size.is_none() {
            out.pool_size = self.family.default_pool_size();
        }
        out.noise_std.get_or_insert(self.family.default_noise_std());
        if self.family == Family::Sem {
            out.n_genes.get_or_insert(50);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let noise = self.noise_std.unwrap_or(self.family.default_noise_std());
        if !(noise.is_finite() && noise >= 0.0) {
            return Err(Error::InvalidInput("oracle.noise_std must be finite and >= 0".into()));
        }
        if self.pool_size == Some(0) {
            return Err(Error::InvalidInput("oracle.pool_size must be at least 1".into()));
        }
        if self.n_genes == Some(0) {
            return Err(Error::InvalidInput("oracle.n_genes must be at least 1".into()));
        }
        match (self.family, &self.tabular) {
            (Family::Tabular, None) => {
                return Err(Error::InvalidInput("oracle.tabular is required for the tabular family".into()))
            }
            (f, Some(_)) if f != Family::Tabular => {
                return Err(Error::InvalidInput(format!(
                    "oracle.tabular given for non-tabular family {f}"
                )))
            }
            _ => {}
        }
        if self.layout == Layout::Grid && self.family != Family::Sine1d {
            return Err(Error::InvalidInput("oracle.layout = grid is only supported for sine1d".into()));
        }
        Ok(())
    }
}

/// Family-specific constants drawn at pool construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyParams {
    None,
    Sine2d(Sine2DParams),
    Branin(BraninNormalization),
    Pathways(PathwaysParams),
    Sem(SemParams),
}

/// A built oracle: the candidate pool, the noiseless truth over it, and a
/// noisy observation channel.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub family: Family,
    pub pool: CandidatePool,
    /// Inputs in the family's native domain, row-major.
    pub raw_inputs: Vec<f64>,
    pub truth: Vec<f64>,
    pub noise_std: f64,
    pub params: FamilyParams,
    noise_seed: u64,
}

impl Oracle {
    /// Noisy response of candidate `id` at `cycle`; the noise depends only
    /// on `(campaign seed, id, cycle)`.
    pub fn observe(&self, id: usize, cycle: usize) -> Result<f64> {
        let f = *self.truth.get(id).ok_or(Error::UnknownCandidate(id))?;
        if self.noise_std == 0.0 {
            return Ok(f);
        }
        Ok(f + self.noise_std * rng::addressed_normal(self.noise_seed, id, cycle))
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }
}

fn unit_samples<R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize) -> Vec<f64> {
    (0..n * d).map(|_| rng.random::<f64>()).collect()
}

/// Builds the candidate pool and its ground truth.
///
/// `campaign_seed` drives observation noise; the dataset itself uses
/// `spec.seed` when set and `campaign_seed` otherwise. Pool features are
/// unit-scale: Sine-2D inputs are mapped from `[-pi, pi]^2` to the unit
/// square and tabular features are min-max scaled per column.
pub fn build_pool(spec: &OracleSpec, campaign_seed: u64) -> Result<Oracle> {
    spec.validate()?;
    let spec = spec.resolved();
    let dataset_seed = spec.seed.unwrap_or(campaign_seed);
    let mut rng = rng::stream(dataset_seed, Stream::Pool);
    let noise_std = spec.noise_std.unwrap_or(0.0);
    let n = spec.pool_size.unwrap_or(0);

    let (dimension, features, raw_inputs, truth, params) = match spec.family {
        Family::Sine1d => {
            let xs: Vec<f64> = match spec.layout {
                Layout::Uniform => unit_samples(&mut rng, n, 1),
                Layout::Grid if n == 1 => vec![0.0],
                Layout::Grid => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
            };
            let truth = xs.iter().map(|&x| eval_sine1d(x)).collect::<Result<Vec<_>>>()?;
            (1, xs.clone(), xs, truth, FamilyParams::None)
        }
        Family::Sine2d => {
            let params = Sine2DParams::sample(&mut rng);
            let unit = unit_samples(&mut rng, n, 2);
            let raw: Vec<f64> = unit
                .iter()
                .map(|u| (-std::f64::consts::PI + std::f64::consts::TAU * u).clamp(-std::f64::consts::PI, std::f64::consts::PI))
                .collect();
            let truth = raw
                .chunks_exact(2)
                .map(|x| eval_sine2d([x[0], x[1]], &params))
                .collect::<Result<Vec<_>>>()?;
            (2, unit, raw, truth, FamilyParams::Sine2d(params))
        }
        Family::Branin => {
            let unit = unit_samples(&mut rng, n, 2);
            let raw_f: Vec<f64> = unit
                .chunks_exact(2)
                .map(|x| branin_rescale([x[0], x[1]]).map(|[u, v]| branin_raw(u, v)))
                .collect::<Result<Vec<_>>>()?;
            let norm = BraninNormalization::from_raw(&raw_f)?;
            let truth = unit
                .chunks_exact(2)
                .map(|x| eval_branin([x[0], x[1]], &norm))
                .collect::<Result<Vec<_>>>()?;
            (2, unit.clone(), unit, truth, FamilyParams::Branin(norm))
        }
        Family::Pathways => {
            let params = PathwaysParams::sample(n, &mut rng);
            let mut features = Vec::with_capacity(4 * n);
            let mut truth = Vec::with_capacity(n);
            for (i, gene) in params.genes.iter().enumerate() {
                let z = [rng.random::<f64>(), rng.random::<f64>()];
                features.extend_from_slice(&[gene.embedding[0], gene.embedding[1], z[0], z[1]]);
                truth.push(eval_pathways(&params, i, z)?);
            }
            (4, features.clone(), features, truth, FamilyParams::Pathways(params))
        }
        Family::Sem => {
            let params = SemParams::sample(spec.n_genes.unwrap_or(50), &mut rng);
            let mut features = Vec::with_capacity(6 * n);
            let mut truth = Vec::with_capacity(n);
            for _ in 0..n {
                let g = params.genes[rng.random_range(0..params.genes.len())];
                let x = [g[0], g[1], rng.random(), rng.random(), rng.random(), rng.random()];
                features.extend_from_slice(&x);
                truth.push(eval_sem(x, &params.coefficients)?);
            }
            (6, features.clone(), features, truth, FamilyParams::Sem(params))
        }
        Family::Tabular => {
            let src = spec.tabular.as_ref().expect("validated");
            let data = load_tabular(
                &src.path,
                src.features.as_deref(),
                &src.response,
                src.name_column.as_deref(),
            )?;
            let rows = spec.pool_size.unwrap_or(data.len());
            if rows > data.len() {
                return Err(Error::InvalidInput(format!(
                    "oracle.pool_size {rows} exceeds the {} rows of {}",
                    data.len(),
                    src.path.display()
                )));
            }
            let d = data.dimension();
            let raw = data.features[..rows * d].to_vec();
            (d, min_max_columns(&raw, d), raw, data.responses[..rows].to_vec(), FamilyParams::None)
        }
    };

    Ok(Oracle {
        family: spec.family,
        pool: CandidatePool::new(dimension, features)?,
        raw_inputs,
        truth,
        noise_std,
        params,
        noise_seed: campaign_seed,
    })
}

/// Scales each column of a row-major matrix to `[0, 1]`; constant columns map to 0.
pub fn min_max_columns(values: &[f64], d: usize) -> Vec<f64> {
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for row in values.chunks_exact(d) {
        for j in 0..d {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    values
        .chunks_exact(d)
        .flat_map(|row| {
            (0..d).map(|j| {
                let span = hi[j] - lo[j];
                if span > 0.0 {
                    (row[j] - lo[j]) / span
                } else {
                    0.0
                }
            })
        })
        .map(|v| v.clamp(0.0, 1.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine1d_grid_peaks_at_quarter() {
        let o = build_pool(&OracleSpec::new(Family::Sine1d).with_pool_size(101).with_layout(Layout::Grid), 0).unwrap();
        let argmax = (0..101).max_by(|&i, &j| o.truth[i].total_cmp(&o.truth[j])).unwrap();
        assert_eq!(argmax, 25);
        assert_eq!(o.truth[25], 1.0);
    }

    #[test]
    fn same_seed_same_pool() {
        for family in [Family::Sine1d, Family::Sine2d, Family::Branin, Family::Pathways, Family::Sem] {
            let spec = OracleSpec::new(family).with_pool_size(64);
            let a = build_pool(&spec, 9).unwrap();
            let b = build_pool(&spec, 9).unwrap();
            let c = build_pool(&spec, 10).unwrap();
            assert_eq!(a.pool, b.pool);
            assert_eq!(a.truth, b.truth);
            assert_ne!(a.truth, c.truth, "{family}");
            assert!(a.truth.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn fixed_dataset_seed_overrides_campaign_seed() {
        let mut spec = OracleSpec::new(Family::Sine2d).with_pool_size(20);
        spec.seed = Some(5);
        let a = build_pool(&spec, 1).unwrap();
        let b = build_pool(&spec, 2).unwrap();
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn branin_pool_attains_unit_range() {
        let o = build_pool(&OracleSpec::new(Family::Branin), 3).unwrap();
        let max = o.truth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = o.truth.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((max - 1.0).abs() < 1e-15);
        assert!(min.abs() < 1e-15);
    }

    #[test]
    fn pathways_genes_cluster_near_centers() {
        let o = build_pool(&OracleSpec::new(Family::Pathways).with_pool_size(400), 4).unwrap();
        let FamilyParams::Pathways(p) = &o.params else { panic!() };
        let within = p
            .genes
            .iter()
            .filter(|g| {
                let c = p.centers[g.pathway];
                ((g.embedding[0] - c[0]).powi(2) + (g.embedding[1] - c[1]).powi(2)).sqrt() <= 3.0 * p.gene_scatter
            })
            .count();
        // a 2-D Gaussian has P(r <= 3 sigma) = 1 - exp(-4.5) ~ 0.989
        assert!(within as f64 >= 0.95 * 400.0, "{within}");
    }

    #[test]
    fn sem_rows_use_the_gene_table() {
        let mut spec = OracleSpec::new(Family::Sem).with_pool_size(300);
        spec.n_genes = Some(7);
        let o = build_pool(&spec, 0).unwrap();
        let FamilyParams::Sem(p) = &o.params else { panic!() };
        for c in o.pool.iter() {
            assert!(p.genes.iter().any(|g| g[0] == c.features[0] && g[1] == c.features[1]));
            assert!(c.features[2..].iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn noise_is_addressed() {
        let o = build_pool(&OracleSpec::new(Family::Sine1d).with_pool_size(10), 0).unwrap();
        let a = o.observe(3, 1).unwrap();
        let _ = o.observe(4, 1).unwrap();
        assert_eq!(a, o.observe(3, 1).unwrap());
        assert_ne!(a, o.observe(3, 2).unwrap());
        assert_ne!(a, o.truth[3]);
        assert!(o.observe(10, 1).is_err());
        let quiet = build_pool(&OracleSpec::new(Family::Sine2d).with_pool_size(10), 0).unwrap();
        assert_eq!(quiet.observe(2, 1).unwrap(), quiet.truth[2]);
    }

    #[test]
    fn sine2d_features_are_unit_scaled() {
        let o = build_pool(&OracleSpec::new(Family::Sine2d).with_pool_size(200), 1).unwrap();
        assert!(o.pool.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(o.raw_inputs.iter().all(|v| v.abs() <= std::f64::consts::PI));
    }

    #[test]
    fn invalid_specs() {
        assert!(build_pool(&OracleSpec::new(Family::Sine1d).with_noise(-1.0), 0).is_err());
        assert!(build_pool(&OracleSpec::new(Family::Sine1d).with_pool_size(0), 0).is_err());
        assert!(build_pool(&OracleSpec::new(Family::Tabular), 0).is_err());
        assert!(build_pool(&OracleSpec::new(Family::Branin).with_layout(Layout::Grid), 0).is_err());
    }

    #[test]
    fn tabular_oracle() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "a,b,y\n0,10,1\n2,10,3\n4,10,2\n").unwrap();
        let o = build_pool(
            &OracleSpec::tabular(TabularSource {
                path: p,
                response: "y".into(),
                features: None,
                name_column: None,
            }),
            0,
        )
        .unwrap();
        assert_eq!(o.truth, vec![1.0, 3.0, 2.0]);
        assert_eq!(o.pool.row(1), &[0.5, 0.0]);
        assert_eq!(o.observe(1, 4).unwrap(), 3.0);
    }

    #[test]
    fn resolved_materializes_defaults() {
        let r = OracleSpec::new(Family::Sem).resolved();
        assert_eq!(r.pool_size, Some(1000));
        assert_eq!(r.noise_std, Some(0.08));
        assert_eq!(r.n_genes, Some(50));
    }
}
