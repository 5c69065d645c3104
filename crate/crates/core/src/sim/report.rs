//! Folds a metrics stream into one summary row.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{Footer, MetricsFrame, QueryRecord, Record};
use crate::error::{Error, Result};

/// Mean with a percentile-bootstrap confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub n_peers: usize,
    pub cycles: u64,
    pub live_peers: usize,
    pub representatives: usize,
    pub mean_view_quality: f64,
    pub communities_oracle: usize,
    pub repairs: usize,
    pub messages_sent: u64,
    pub conservation_ok: bool,
    pub invariant_violations: u64,
    pub queries: usize,
    pub recall: Option<Estimate>,
    pub peers_contacted: Option<f64>,
    pub messages_per_query: Option<f64>,
    pub comparisons_per_query: Option<f64>,
    pub flood_recall: Option<f64>,
    pub flood_peers_contacted: Option<f64>,
    /// Mean two-layer contacts over mean flood contacts.
    pub contacted_ratio: Option<f64>,
}

pub const BOOTSTRAP_RESAMPLES: usize = 2000;

/// 95% percentile bootstrap of the mean. Deterministic in `seed`.
pub fn bootstrap_mean(values: &[f64], resamples: usize, seed: u64) -> Option<Estimate> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| means[((q * (means.len() - 1) as f64).round() as usize).min(means.len() - 1)];
    Some(Estimate { mean, lo: at(0.025), hi: at(0.975), n })
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn summarize(records: &[Record]) -> Result<Summary> {
    let mut header = None;
    let mut last_frame: Option<&MetricsFrame> = None;
    let mut queries: Vec<&QueryRecord> = Vec::new();
    let mut footer: Option<&Footer> = None;
    for r in records {
        match r {
            Record::Header { config, .. } => header = Some(config),
            Record::Frame(f) => last_frame = Some(f),
            Record::Query(q) => queries.push(q),
            Record::Footer(f) => footer = Some(f),
        }
    }
    let cfg = header.ok_or_else(|| Error::parse(0, "metrics stream has no header"))?;
    let footer = footer.ok_or_else(|| Error::parse(0, "metrics stream has no footer (truncated run?)"))?;
    let recalls: Vec<f64> = queries.iter().map(|q| q.recall).collect();
    let flooded: Vec<_> = queries.iter().filter_map(|q| q.flood.as_ref().map(|f| (q, f))).collect();
    let peers_contacted = mean(queries.iter().map(|q| q.cost.peers_contacted as f64));
    let flood_peers_contacted = mean(flooded.iter().map(|(_, f)| f.cost.peers_contacted as f64));
    let contacted_ratio = match (mean(flooded.iter().map(|(q, _)| q.cost.peers_contacted as f64)), flood_peers_contacted) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    Ok(Summary {
        seed: cfg.seed,
        n_peers: cfg.n_peers,
        cycles: footer.cycles,
        live_peers: footer.live_peers,
        representatives: footer.representatives.len(),
        mean_view_quality: last_frame.map_or(0.0, |f| f.mean_view_quality),
        communities_oracle: last_frame.map_or(0, |f| f.n_communities_oracle),
        repairs: footer.repairs,
        messages_sent: footer.totals.sent,
        conservation_ok: footer.conservation_ok,
        invariant_violations: last_frame.map_or(0, |f| f.invariant_violations),
        queries: queries.len(),
        recall: bootstrap_mean(&recalls, BOOTSTRAP_RESAMPLES, cfg.seed),
        peers_contacted,
        messages_per_query: mean(queries.iter().map(|q| q.cost.messages as f64)),
        comparisons_per_query: mean(queries.iter().map(|q| q.cost.comparisons as f64)),
        flood_recall: mean(flooded.iter().map(|(_, f)| f.recall)),
        flood_peers_contacted,
        contacted_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bootstrap_brackets_the_mean() {
        let xs: Vec<f64> = (0..100).map(|i| (i % 10) as f64 / 10.0).collect();
        let e = bootstrap_mean(&xs, 1000, 7).unwrap();
        assert!((e.mean - 0.45).abs() < 1e-12);
        assert!(e.lo < e.mean && e.mean < e.hi);
        assert!(e.hi - e.lo < 0.2);
        assert_eq!(e, bootstrap_mean(&xs, 1000, 7).unwrap());
    }

    #[test]
    fn constant_sample_has_zero_width() {
        let e = bootstrap_mean(&[0.5; 20], 100, 1).unwrap();
        assert_eq!((e.lo, e.hi), (0.5, 0.5));
        assert!(bootstrap_mean(&[], 100, 1).is_none());
    }
}
