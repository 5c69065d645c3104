use std::io::Cursor;

use strata_core::sim::{read_jsonl, summarize, Record, SimConfig, Simulation, SCHEMA};

fn small_run() -> strata_core::sim::RunOutput {
    let mut cfg = SimConfig { n_peers: 80, seed: 11, cycles: 40, ..Default::default() };
    cfg.workload.n_queries = 12;
    cfg.workload.warmup = 25;
    cfg.workload.flood_baseline = true;
    Simulation::run(cfg).unwrap()
}

#[test]
fn jsonl_round_trips() {
    let out = small_run();
    let text = out.to_jsonl();
    let records = read_jsonl(Cursor::new(text.as_bytes())).unwrap();
    let direct: Vec<Record> = out.records().collect();
    assert_eq!(records, direct);
    assert!(matches!(&records[0], Record::Header { schema, .. } if schema == SCHEMA));
    assert!(matches!(records.last(), Some(Record::Footer(_))));
}

#[test]
fn foreign_schema_and_headless_streams_are_rejected() {
    let text = small_run().to_jsonl();
    let foreign = text.replacen(SCHEMA, "strata-metrics/99", 1);
    assert!(read_jsonl(Cursor::new(foreign.as_bytes())).is_err());
    let headless: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    assert!(read_jsonl(Cursor::new(headless.as_bytes())).is_err());
    assert!(read_jsonl(Cursor::new(&b""[..])).is_err());
}

#[test]
fn summary_is_recomputable_from_the_stream() {
    let out = small_run();
    let direct: Vec<Record> = out.records().collect();
    let parsed = read_jsonl(Cursor::new(out.to_jsonl().into_bytes())).unwrap();
    let s = summarize(&parsed).unwrap();
    assert_eq!(s, summarize(&direct).unwrap());
    assert_eq!(s.queries, out.queries.len());
    assert_eq!(s.seed, 11);
    let mean = out.queries.iter().map(|q| q.recall).sum::<f64>() / out.queries.len() as f64;
    let recall = s.recall.unwrap();
    assert!((recall.mean - mean).abs() < 1e-12);
    assert!(recall.lo <= recall.mean && recall.mean <= recall.hi);
    assert_eq!(s.messages_sent, out.footer.totals.sent);
    assert!(s.conservation_ok);
}

#[test]
fn truncated_stream_cannot_be_summarized() {
    let out = small_run();
    let records: Vec<Record> = out.records().filter(|r| !matches!(r, Record::Footer(_))).collect();
    assert!(summarize(&records).is_err());
}
