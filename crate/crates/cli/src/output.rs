//! Result files: aggregate table, per-campaign event logs, curves, and
//! complexity rows.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use hitscan_core::campaign::{AggregateRow, CampaignResult, CycleRecord};
use hitscan_core::complexity::{ComplexityReport, ComplexityRow};
use hitscan_core::Strategy;
use serde::{Deserialize, Serialize};

use crate::CliError;

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::from("strategy,cycle,n_seeds,mean_hits,std_hits,mean_hit_ratio,std_hit_ratio,mean_smape,std_smape\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.strategy,
            r.cycle,
            r.n_seeds,
            r.mean_hits,
            r.std_hits,
            r.mean_hit_ratio,
            r.std_hit_ratio,
            opt(r.mean_smape),
            opt(r.std_smape)
        );
    }
    s
}

pub fn event_file_name(strategy: Strategy, seed: u64) -> String {
    format!("{strategy}_seed{seed}.jsonl")
}

/// One line of an event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Start {
        strategy: Strategy,
        seed: u64,
        pool_size: usize,
        tau: f64,
        total_hits: usize,
        warm_start: Vec<usize>,
        warm_start_responses: Vec<f64>,
        warm_start_hits: usize,
    },
    Cycle {
        strategy: Strategy,
        seed: u64,
        #[serde(flatten)]
        record: CycleRecord,
    },
    End {
        strategy: Strategy,
        seed: u64,
        final_hits: usize,
        final_hit_ratio: f64,
        exhausted: bool,
    },
    Error {
        strategy: Strategy,
        seed: u64,
        message: String,
    },
}

pub fn events_for(result: &CampaignResult, pool_size: usize) -> Vec<Event> {
    let (strategy, seed) = (result.strategy, result.seed);
    let mut ev = vec![Event::Start {
        strategy,
        seed,
        pool_size,
        tau: result.tau,
        total_hits: result.total_hits,
        warm_start: result.warm_start.clone(),
        warm_start_responses: result.warm_start_responses.clone(),
        warm_start_hits: result.warm_start_hits,
    }];
    ev.extend(result.cycles.iter().map(|c| Event::Cycle {
        strategy,
        seed,
        record: c.clone(),
    }));
    ev.push(Event::End {
        strategy,
        seed,
        final_hits: result.final_hits,
        final_hit_ratio: result.final_hit_ratio,
        exhausted: result.exhausted,
    });
    ev
}

pub fn jsonl(events: &[Event]) -> Result<String, CliError> {
    let mut s = String::new();
    for e in events {
        s.push_str(&serde_json::to_string(e).map_err(|e| CliError::Runtime(e.to_string()))?);
        s.push('\n');
    }
    Ok(s)
}

pub fn read_events(path: &Path) -> Result<Vec<Event>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, line)| {
            let line = line.map_err(|e| CliError::Runtime(e.to_string()))?;
            serde_json::from_str(&line)
                .map_err(|e| CliError::Config(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub const CURVES_HEADER: &str = "strategy,seed,cycle,H,hit_ratio,smape\n";

/// Long-format learning curves from cycle events.
pub fn curves_csv(events: &[Event]) -> String {
    let mut s = String::from(CURVES_HEADER);
    for e in events {
        if let Event::Cycle { strategy, seed, record } = e {
            let m = &record.metrics;
            let _ = writeln!(s, "{strategy},{seed},{},{},{},{}", m.cycle, m.cumulative_hits, m.hit_ratio, opt(m.smape));
        }
    }
    s
}

fn complexity_line(s: &mut String, family: &str, r: &ComplexityRow) {
    let _ = writeln!(
        s,
        "{family},{},{},{},{},{},{},{},{}",
        r.seed.map_or_else(|| "mean".to_string(), |v| v.to_string()),
        r.smoothness,
        r.n_clusters,
        opt(r.hit_spread),
        r.d_eff,
        r.rho_max,
        r.rho_dy,
        r.degenerate
    );
}

pub fn complexity_csv(report: &ComplexityReport) -> String {
    let mut s = String::from("family,seed,smoothness,n_clusters,hit_spread,d_eff,rho_max,rho_dy,degenerate\n");
    for r in &report.rows {
        complexity_line(&mut s, &report.family, r);
    }
    complexity_line(&mut s, &report.family, &report.mean);
    s
}
