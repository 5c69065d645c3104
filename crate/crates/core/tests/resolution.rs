use std::collections::{BTreeMap, BTreeSet};

use strata_core::profile::{similarity, Profile};
use strata_core::sim::{DatasetKind, QueryRecord, SimConfig, Simulation};
use strata_core::PeerId;

fn planted_cfg(n: usize, k: usize, seed: u64) -> SimConfig {
    let mut cfg = SimConfig { n_peers: n, seed, ..Default::default() };
    cfg.dataset.kind = DatasetKind::Planted;
    cfg.dataset.clusters = k;
    cfg
}

/// Runs to convergence, injects one query per (entry, sample) and drains.
fn resolve(cfg: SimConfig, warm: u64, queries: impl Fn(&Simulation) -> Vec<(PeerId, Profile)>) -> (Vec<QueryRecord>, BTreeMap<u64, Profile>, BTreeMap<PeerId, Profile>) {
    let mut sim = Simulation::new(cfg).unwrap();
    sim.run_cycles(warm);
    let profiles = sim.peers().map(|p| (p.id, Profile::clone(&p.profile))).collect();
    let mut samples = BTreeMap::new();
    for (entry, sample) in queries(&sim) {
        let id = sim.inject_query(entry, entry, sample.clone()).unwrap();
        samples.insert(id, sample);
    }
    sim.run_cycles(3);
    (sim.finish().queries, samples, profiles)
}

fn every_fifth_profile(sim: &Simulation) -> Vec<(PeerId, Profile)> {
    let ids = sim.live_ids();
    ids.iter().step_by(5).enumerate().map(|(i, &src)| (ids[(i * 7) % ids.len()], Profile::clone(&sim.peer(src).unwrap().profile))).collect()
}

#[test]
fn results_are_sound_unique_and_within_the_cost_bound() {
    let cfg = planted_cfg(120, 3, 4);
    let q = cfg.query;
    let alpha = cfg.dht.alpha as u64;
    let (records, samples, profiles) = resolve(cfg, 80, every_fifth_profile);
    assert!(!records.is_empty());
    let flood_cap: u64 = (0..=q.ttl).map(|h| (q.fanout as u64).pow(h)).sum();
    for r in &records {
        let sample = &samples[&r.query_id];
        let mut seen = BTreeSet::new();
        for w in r.matches.windows(2) {
            assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0), "unsorted {:?}", r.matches);
        }
        for &(peer, score) in &r.matches {
            assert!(seen.insert(peer), "duplicate {peer:?}");
            assert!(score >= r.theta);
            assert_eq!(score, similarity(sample, &profiles[&peer]));
        }
        let bound = q.m as u64 * flood_cap + alpha * r.cost.dht_hops;
        assert!(r.cost.peers_contacted <= bound, "{} > {bound}", r.cost.peers_contacted);
    }
}

#[test]
fn zero_threshold_never_returns_empty_when_a_representative_is_found() {
    let mut cfg = planted_cfg(90, 3, 6);
    cfg.query.theta = 0.0;
    let (records, _, _) = resolve(cfg, 80, every_fifth_profile);
    let found: Vec<_> = records.iter().filter(|r| !r.descriptors.is_empty()).collect();
    assert!(!found.is_empty());
    for r in found {
        assert!(!r.matches.is_empty(), "query {} empty", r.query_id);
    }
}

#[test]
fn representative_profile_is_an_exact_match() {
    let mut cfg = planted_cfg(90, 3, 2);
    cfg.query.theta = 0.9;
    let (records, samples, profiles) = resolve(cfg, 80, |sim| {
        sim.representatives().into_iter().map(|r| (PeerId(0), Profile::clone(&sim.peer(r).unwrap().profile))).collect()
    });
    assert_eq!(records.len(), 3);
    for r in &records {
        let sample = &samples[&r.query_id];
        let owner = profiles.iter().find(|(_, p)| similarity(p, sample) >= 1.0 - 1e-12).map(|(id, _)| *id).unwrap();
        assert!(r.matches.iter().any(|&(p, s)| p == owner && (s - 1.0).abs() < 1e-12), "{:?}", r.matches);
    }
}

#[test]
fn zero_ttl_answers_from_representatives_only() {
    let mut cfg = planted_cfg(90, 3, 3);
    cfg.query.ttl = 0;
    cfg.query.theta = 0.0;
    let (records, _, _) = resolve(cfg, 80, every_fifth_profile);
    for r in records {
        let reps: BTreeSet<PeerId> = r.descriptors.iter().take(3).map(|d| d.0).collect();
        assert!(r.matches.iter().all(|(p, _)| reps.contains(p)), "{:?} vs {reps:?}", r.matches);
    }
}

#[test]
fn flood_covers_an_eight_peer_clique() {
    let mut cfg = planted_cfg(8, 1, 5);
    cfg.query.theta = 0.0;
    let (records, _, _) = resolve(cfg, 60, |sim| vec![(PeerId(3), Profile::clone(&sim.peer(PeerId(5)).unwrap().profile))]);
    assert_eq!(records[0].matches.len(), 8, "{:?}", records[0]);
}

#[test]
fn global_flood_dominates_at_zero_threshold() {
    let mut cfg = planted_cfg(150, 5, 8);
    cfg.query.theta = 0.0;
    cfg.workload.flood_baseline = true;
    let (records, _, _) = resolve(cfg, 80, every_fifth_profile);
    for r in records {
        let flood = r.flood.as_ref().unwrap();
        assert_eq!(flood.recall, 1.0);
        assert!(r.recall <= flood.recall);
        let eff = r.efficiency.unwrap();
        assert!(eff.peers_contacted_ratio.unwrap() < 1.0);
    }
}
