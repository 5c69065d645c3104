//! Human-readable summary tables on standard output.

use strata_core::sim::{bootstrap_mean, Summary, BOOTSTRAP_RESAMPLES};

fn opt(x: Option<f64>, prec: usize) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.prec$}"))
}

pub fn print_rows(rows: &[(String, &Summary)]) {
    let flood = rows.iter().any(|(_, s)| s.flood_recall.is_some());
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(4);
    let mut head = format!(
        "{:<width$}  {:>6}  {:>4}  {:>7}  {:>17}  {:>9}  {:>8}  {:>9}",
        "run", "peers", "reps", "queries", "recall [95% CI]", "msgs/q", "peers/q", "cmp/q"
    );
    if flood {
        head += &format!("  {:>8}  {:>9}  {:>7}", "flood_r", "flood_p/q", "ratio");
    }
    println!("{head}");
    for (label, s) in rows {
        let recall = s.recall.map_or_else(|| "-".to_string(), |e| format!("{:.3} [{:.3},{:.3}]", e.mean, e.lo, e.hi));
        let mut line = format!(
            "{label:<width$}  {:>6}  {:>4}  {:>7}  {recall:>17}  {:>9}  {:>8}  {:>9}",
            s.live_peers,
            s.representatives,
            s.queries,
            opt(s.messages_per_query, 1),
            opt(s.peers_contacted, 1),
            opt(s.comparisons_per_query, 1),
        );
        if flood {
            line += &format!(
                "  {:>8}  {:>9}  {:>7}",
                opt(s.flood_recall, 3),
                opt(s.flood_peers_contacted, 1),
                opt(s.contacted_ratio, 3)
            );
        }
        println!("{line}");
    }
}

/// Mean over replications, with a bootstrap interval on mean recall.
pub fn print_aggregate(label: &str, rows: &[Summary]) {
    let recalls: Vec<f64> = rows.iter().filter_map(|s| s.recall.map(|e| e.mean)).collect();
    let mean = |f: fn(&Summary) -> Option<f64>| {
        let xs: Vec<f64> = rows.iter().filter_map(f).collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    };
    let recall = bootstrap_mean(&recalls, BOOTSTRAP_RESAMPLES, 0)
        .map_or_else(|| "-".to_string(), |e| format!("{:.3} [{:.3},{:.3}]", e.mean, e.lo, e.hi));
    let mut line = format!(
        "{label}: {} replications, recall {recall}, msgs/q {}, peers/q {}",
        rows.len(),
        opt(mean(|s| s.messages_per_query), 1),
        opt(mean(|s| s.peers_contacted), 1),
    );
    if rows.iter().any(|s| s.contacted_ratio.is_some()) {
        line += &format!(
            ", flood recall {}, contacted ratio {}",
            opt(mean(|s| s.flood_recall), 3),
            opt(mean(|s| s.contacted_ratio), 3)
        );
    }
    println!("{line}");
}
