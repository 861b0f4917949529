//! The batched active-search loop and multi-seed sweeps.

use std::time::Instant;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{self, Strategy, ThompsonMode};
use crate::domain::{resolve_threshold, CampaignState, Threshold};
use crate::error::{Error, Result};
use crate::metrics::{self, CycleMetrics};
use crate::oracle::{build_pool, Oracle, OracleSpec};
use crate::rng::{self, Stream};
use crate::stats::mean_std;
use crate::surrogate::{self, default_grid, KernelSpec};
use crate::theory::CycleSnapshot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub oracle: OracleSpec,
    pub strategy: Strategy,
    #[serde(default)]
    pub thompson_mode: ThompsonMode,
    pub threshold: Threshold,
    pub cycles: usize,
    pub batch_size: usize,
    /// Uniformly labeled points before cycle 1; defaults to `batch_size`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<usize>,
    /// Hyperparameter candidates; defaults to [`default_grid`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_grid: Option<Vec<KernelSpec>>,
    #[serde(default)]
    pub count_warm_start_hits: bool,
    /// Keep the full-pool posterior of every cycle (for audits).
    #[serde(default)]
    pub record_posteriors: bool,
}

impl CampaignConfig {
    pub fn new(oracle: OracleSpec, strategy: Strategy, threshold: Threshold, cycles: usize, batch_size: usize) -> Self {
        Self {
            oracle,
            strategy,
            thompson_mode: ThompsonMode::default(),
            threshold,
            cycles,
            batch_size,
            warm_start: None,
            kernel_grid: None,
            count_warm_start_hits: false,
            record_posteriors: false,
        }
    }

    pub fn warm_start_size(&self) -> usize {
        self.warm_start.unwrap_or(self.batch_size)
    }

    pub fn validate(&self) -> Result<()> {
        self.oracle.validate()?;
        self.threshold.validate()?;
        if self.cycles == 0 {
            return Err(Error::InvalidInput("cycles must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be at least 1".into()));
        }
        if let Some(grid) = &self.kernel_grid {
            if grid.is_empty() {
                return Err(Error::InvalidInput("kernel_grid must not be empty".into()));
            }
        }
        Ok(())
    }

    /// Copy with defaults made explicit for a pool of dimension `d`.
    pub fn resolved(&self, d: usize) -> Self {
        let mut out = self.clone();
        out.oracle = self.oracle.resolved();
        out.warm_start = Some(self.warm_start_size());
        out.kernel_grid.get_or_insert_with(|| default_grid(d));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    #[serde(flatten)]
    pub metrics: CycleMetrics,
    pub batch: Vec<usize>,
    pub responses: Vec<f64>,
    pub kernel: KernelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub strategy: Strategy,
    pub seed: u64,
    pub tau: f64,
    pub total_hits: usize,
    pub warm_start: Vec<usize>,
    pub warm_start_responses: Vec<f64>,
    pub warm_start_hits: usize,
    pub cycles: Vec<CycleRecord>,
    /// The pool ran out before the last cycle.
    pub exhausted: bool,
    pub final_hits: usize,
    pub final_hit_ratio: f64,
    #[serde(skip)]
    pub snapshots: Vec<CycleSnapshot>,
    #[serde(skip)]
    pub wall_clock: WallClock,
}

/// Seconds spent per cycle. Ignored by equality so that results compare by
/// content alone.
#[derive(Debug, Clone, Default)]
pub struct WallClock(pub Vec<f64>);

impl PartialEq for WallClock {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl CampaignResult {
    pub fn batches(&self) -> Vec<Vec<usize>> {
        self.cycles.iter().map(|c| c.batch.clone()).collect()
    }
}

/// Runs one campaign. Deterministic in `(config, seed)`.
pub fn run_campaign(config: &CampaignConfig, seed: u64) -> Result<CampaignResult> {
    config.validate()?;
    let oracle = build_pool(&config.oracle, seed)?;
    run_on_oracle(config, &oracle, seed)
}

/// Runs one campaign against an already built oracle.
pub fn run_on_oracle(config: &CampaignConfig, oracle: &Oracle, seed: u64) -> Result<CampaignResult> {
    config.validate()?;
    let pool = &oracle.pool;
    let n = pool.len();
    let b = config.batch_size;
    let tau = resolve_threshold(config.threshold, &oracle.truth)?;
    let total_hits = oracle.truth.iter().filter(|&&f| f > tau).count();
    let grid = config.kernel_grid.clone().unwrap_or_else(|| default_grid(pool.dimension()));
    let mut state = CampaignState::new(n, b, config.cycles, seed)?;

    let w = config.warm_start_size().min(n);
    let mut warm_rng = rng::stream(seed, Stream::WarmStart);
    let warm: Vec<usize> = index::sample(&mut warm_rng, n, w).into_vec();
    let warm_y = warm
        .iter()
        .map(|&id| oracle.observe(id, 0))
        .collect::<Result<Vec<_>>>()?;
    state.record_warm_start(&warm, &warm_y)?;
    let warm_hits = warm.iter().filter(|&&id| oracle.truth[id] > tau).count();
    let offset = if config.count_warm_start_hits { warm_hits } else { 0 };

    let mut cycles = Vec::with_capacity(config.cycles);
    let mut snapshots = Vec::new();
    let mut wall = Vec::with_capacity(config.cycles);
    let mut exhausted = false;
    let mut h = offset;
    for t in 1..=config.cycles {
        let start = Instant::now();
        let candidates = state.unsampled();
        if candidates.is_empty() {
            exhausted = true;
            break;
        }
        let kernel = if state.history.len() >= 2 {
            surrogate::fit_hyperparameters(&state.history, pool, &grid)?
        } else {
            grid[grid.len() / 2].clone()
        };
        let model = surrogate::fit(&state.history, pool, &kernel)?;
        if config.record_posteriors {
            let all: Vec<usize> = pool.ids().collect();
            let post = model.predict(pool, &all)?;
            snapshots.push(CycleSnapshot {
                cycle: t,
                candidates: candidates.clone(),
                batch: Vec::new(),
                means: post.means,
                stddevs: post.stddevs,
            });
        }
        let batch = match config.strategy {
            Strategy::ProbabilityOfHit => {
                let post = model.predict(pool, &candidates)?;
                acquisition::select_poh(&post, tau, b, &mut state.acquisition_rng)?
            }
            Strategy::TopK => acquisition::select_topk(&model.predict(pool, &candidates)?, b)?,
            Strategy::Random => acquisition::select_random(&candidates, b, &mut state.acquisition_rng)?,
            Strategy::Thompson => acquisition::select_thompson(
                &model,
                pool,
                &candidates,
                b,
                config.thompson_mode,
                &mut state.posterior_rng,
            )?,
            Strategy::ThompsonHit => acquisition::select_thompson_hit(
                &model,
                pool,
                &candidates,
                tau,
                b,
                &mut state.posterior_rng,
                &mut state.acquisition_rng,
            )?,
        };
        if let Some(s) = snapshots.last_mut() {
            s.batch = batch.clone();
        }
        let responses = batch
            .iter()
            .map(|&id| oracle.observe(id, t))
            .collect::<Result<Vec<_>>>()?;
        state.record_batch(&batch, &responses)?;

        let new_hits = batch.iter().filter(|&&id| oracle.truth[id] > tau).count();
        h += new_hits;
        let held_out = state.unsampled();
        let smape = if held_out.is_empty() {
            None
        } else {
            let refit = surrogate::fit(&state.history, pool, &kernel)?;
            let pred = refit.predict(pool, &held_out)?;
            let actual: Vec<f64> = held_out.iter().map(|&id| oracle.truth[id]).collect();
            Some(metrics::smape(&pred.means, &actual)?)
        };
        cycles.push(CycleRecord {
            metrics: CycleMetrics {
                cycle: t,
                new_hits,
                cumulative_hits: h,
                hit_ratio: metrics::hit_ratio(h, total_hits),
                smape,
            },
            batch,
            responses,
            kernel,
        });
        wall.push(start.elapsed().as_secs_f64());
    }

    Ok(CampaignResult {
        strategy: config.strategy,
        seed,
        tau,
        total_hits,
        warm_start: warm,
        warm_start_responses: warm_y,
        warm_start_hits: warm_hits,
        exhausted,
        final_hits: h,
        final_hit_ratio: metrics::hit_ratio(h, total_hits),
        cycles,
        snapshots,
        wall_clock: WallClock(wall),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub campaign: CampaignConfig,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.campaign.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::InvalidInput("seeds must not be empty".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::InvalidInput("strategies must not be empty".into()));
        }
        Ok(())
    }

    /// `(strategy, seed)` cells in strategy-major order.
    pub fn cells(&self) -> Vec<(Strategy, u64)> {
        self.strategies
            .iter()
            .flat_map(|&s| self.seeds.iter().map(move |&seed| (s, seed)))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub strategy: Strategy,
    pub seed: u64,
    pub result: std::result::Result<CampaignResult, Error>,
}

/// Mean and population standard deviation over seeds for one
/// `(strategy, cycle)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub strategy: Strategy,
    pub cycle: usize,
    pub n_seeds: usize,
    pub mean_hits: f64,
    pub std_hits: f64,
    pub mean_hit_ratio: f64,
    pub std_hit_ratio: f64,
    pub mean_smape: Option<f64>,
    pub std_smape: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub cells: Vec<CellOutcome>,
    pub aggregate: Vec<AggregateRow>,
}

/// Runs every `(strategy, seed)` cell on `jobs` threads. Results are in
/// [`SweepConfig::cells`] order whatever the thread count.
pub fn run_sweep(config: &SweepConfig, jobs: usize) -> Result<SweepResult> {
    config.validate()?;
    let run_cell = |(strategy, seed): (Strategy, u64)| {
        let cfg = CampaignConfig {
            strategy,
            ..config.campaign.clone()
        };
        CellOutcome {
            strategy,
            seed,
            result: run_campaign(&cfg, seed),
        }
    };
    let cells = config.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let outcomes: Vec<CellOutcome> = pool.install(|| cells.into_par_iter().map(run_cell).collect());
    let ok: Vec<&CampaignResult> = outcomes.iter().filter_map(|c| c.result.as_ref().ok()).collect();
    let aggregate = aggregate(&ok, &config.strategies);
    Ok(SweepResult {
        cells: outcomes,
        aggregate,
    })
}

/// Mean and spread with the inputs sorted first, so the result does not
/// depend on seed order.
fn order_free_mean_std(values: &mut [f64]) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    mean_std(values)
}

/// Per strategy and cycle aggregation over the given results.
pub fn aggregate(results: &[&CampaignResult], strategies: &[Strategy]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for &strategy in strategies {
        let runs: Vec<&&CampaignResult> = results.iter().filter(|r| r.strategy == strategy).collect();
        let max_cycle = runs.iter().map(|r| r.cycles.len()).max().unwrap_or(0);
        for c in 0..max_cycle {
            let at: Vec<&CycleMetrics> = runs.iter().filter_map(|r| r.cycles.get(c)).map(|r| &r.metrics).collect();
            let (mean_hits, std_hits) =
                order_free_mean_std(&mut at.iter().map(|m| m.cumulative_hits as f64).collect::<Vec<_>>());
            let (mean_hit_ratio, std_hit_ratio) =
                order_free_mean_std(&mut at.iter().map(|m| m.hit_ratio).collect::<Vec<_>>());
            let mut smapes: Vec<f64> = at.iter().filter_map(|m| m.smape).collect();
            let (mean_smape, std_smape) = if smapes.is_empty() {
                (None, None)
            } else {
                let (m, s) = order_free_mean_std(&mut smapes);
                (Some(m), Some(s))
            };
            rows.push(AggregateRow {
                strategy,
                cycle: c + 1,
                n_seeds: at.len(),
                mean_hits,
                std_hits,
                mean_hit_ratio,
                std_hit_ratio,
                mean_smape,
                std_smape,
            });
        }
    }
    rows
}
