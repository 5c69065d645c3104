use std::collections::BTreeMap;

use strata_core::gossip::view_quality;
use strata_core::profile::{brute_force_top_k, similarity, PlantedClusters, PlantedSpec, Profile};
use strata_core::sim::{Bootstrap, Dataset, DatasetKind, SimConfig, Simulation};
use strata_core::PeerId;

fn planted(k: usize, per: usize, seed: u64) -> (Simulation, Vec<usize>) {
    let p = PlantedClusters::generate(&PlantedSpec::new(k, per, seed)).unwrap();
    let mut cfg = SimConfig { n_peers: p.profiles.len(), seed, ..Default::default() };
    cfg.dataset.kind = DatasetKind::Planted;
    cfg.dataset.clusters = k;
    let clusters = p.cluster_of.clone();
    let ds = Dataset::from_parts(p.taxonomy, p.profiles, &cfg.dataset, seed).unwrap();
    (Simulation::with_dataset(cfg, ds).unwrap(), clusters)
}

#[test]
fn ring_bootstrap_balances_in_degree() {
    let mut cfg = SimConfig { n_peers: 100, seed: 4, ..Default::default() };
    cfg.bootstrap = Bootstrap::Ring;
    let mut sim = Simulation::new(cfg).unwrap();
    sim.run_cycles(50);
    let mut indeg: BTreeMap<PeerId, f64> = sim.live_ids().into_iter().map(|p| (p, 0.0)).collect();
    for p in sim.peers() {
        for e in p.gossip.random_view() {
            *indeg.get_mut(&e.peer).unwrap() += 1.0;
        }
    }
    let n = indeg.len() as f64;
    let mean = indeg.values().sum::<f64>() / n;
    let var = indeg.values().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let cv = var.sqrt() / mean;
    assert!(cv < 0.35, "in-degree CV {cv:.3}");
}

#[test]
fn two_clusters_separate_within_thirty_cycles() {
    let (mut sim, clusters) = planted(2, 100, 8);
    sim.run_cycles(30);
    let clean = sim
        .peers()
        .filter(|p| p.gossip.similar_ids().all(|q| clusters[q.0 as usize] == clusters[p.id.0 as usize]))
        .count();
    assert!(clean as f64 >= 0.95 * 200.0, "{clean}/200 peers have single-cluster similar views");
}

#[test]
fn mean_view_quality_rises_in_windows_of_five() {
    let cycles = 60;
    let mut mean = vec![0.0; cycles as usize];
    for seed in 1..=5 {
        let out = Simulation::run(SimConfig { n_peers: 200, seed, cycles, ..Default::default() }).unwrap();
        for f in out.frames.iter().filter(|f| f.cycle < cycles) {
            mean[f.cycle as usize] += f.mean_view_quality / 5.0;
        }
    }
    let windows: Vec<f64> = mean.chunks(5).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    for w in windows.windows(2) {
        assert!(w[1] >= w[0] - 1e-12, "window means {windows:?}");
    }
    assert!(*windows.last().unwrap() > 0.99);
}

#[test]
fn views_match_the_oracle_on_small_networks() {
    let mut sim = Simulation::new(SimConfig { n_peers: 12, seed: 3, ..Default::default() }).unwrap();
    sim.run_cycles(50);
    let pop: Vec<(PeerId, Profile)> = sim.peers().map(|p| (p.id, Profile::clone(&p.profile))).collect();
    for p in sim.peers() {
        let oracle = brute_force_top_k(&p.profile, pop.iter().filter(|(q, _)| *q != p.id).map(|(q, pr)| (*q, pr)), 10);
        assert_eq!(view_quality(p.gossip.similar_ids(), &oracle), 1.0, "peer {:?}", p.id);
        p.gossip.check_invariants().unwrap();
    }
}

#[test]
fn single_peer_is_its_own_representative() {
    let out = Simulation::run(SimConfig { n_peers: 1, cycles: 10, ..Default::default() }).unwrap();
    assert_eq!(out.footer.totals.sent, 0);
    assert_eq!(out.footer.representatives, vec![PeerId(0)]);
}

#[test]
fn joiner_gossips_on_the_next_cycle() {
    let mut sim = Simulation::new(SimConfig { n_peers: 50, seed: 2, ..Default::default() }).unwrap();
    sim.run_cycles(5);
    let profile = Profile::clone(&sim.peers().next().unwrap().profile);
    let id = sim.add_peer(profile);
    assert!(!sim.peer(id).unwrap().gossip.random_view().is_empty());
    sim.run_cycles(1);
    let known_by = sim.peers().filter(|p| p.gossip.neighbours().contains(&id)).count();
    assert!(known_by > 0, "no peer learned of the joiner");
}

#[test]
fn converged_two_cluster_network_has_two_agreeing_representatives() {
    let (mut sim, clusters) = planted(2, 30, 5);
    sim.run_cycles(60);
    let reps = sim.representatives();
    assert_eq!(reps.len(), 2);
    for p in sim.peers() {
        let rep = p.election.community();
        assert!(reps.contains(&rep));
        assert_eq!(clusters[rep.0 as usize], clusters[p.id.0 as usize]);
    }
}

/// With the similar view spanning the whole cluster, a peer's score is an
/// affine function of its cosine to the cluster's summed unit profile.
#[test]
fn centroid_peer_scores_highest_offline() {
    let c_s = SimConfig::default().gossip.similar_capacity;
    for seed in 1..=10 {
        centroid_case(c_s, seed);
    }
}

fn centroid_case(c_s: usize, seed: u64) {
    let p = PlantedClusters::generate(&PlantedSpec::new(3, c_s + 1, seed)).unwrap();
    let n = p.profiles.len();
    let score = |i: usize| {
        let top = brute_force_top_k(
            &p.profiles[i],
            (0..n).filter(|&j| j != i).map(|j| (PeerId(j as u64), &p.profiles[j])),
            c_s,
        );
        top.iter().map(|(_, s)| s).sum::<f64>() / top.len() as f64
    };
    for c in 0..3 {
        let members: Vec<usize> = (0..n).filter(|&i| p.cluster_of[i] == c).collect();
        let mut centroid: BTreeMap<u32, f64> = BTreeMap::new();
        for &i in &members {
            for &(l, w) in p.profiles[i].normalized().weights() {
                *centroid.entry(l).or_default() += w;
            }
        }
        let centroid = Profile::new(centroid).unwrap();
        let closest = members.iter().copied().max_by(|&a, &b| {
            similarity(&p.profiles[a], &centroid).total_cmp(&similarity(&p.profiles[b], &centroid)).then(b.cmp(&a))
        });
        let best = members.iter().copied().max_by(|&a, &b| score(a).total_cmp(&score(b)).then(b.cmp(&a)));
        assert_eq!(closest, best, "seed {seed} cluster {c}");
    }
}

#[test]
fn scaling_profiles_keeps_the_elected_set() {
    let elect = |scale: f64| {
        let p = PlantedClusters::generate(&PlantedSpec::new(3, 20, 9)).unwrap();
        let mut cfg = SimConfig { n_peers: 60, seed: 9, ..Default::default() };
        cfg.dataset.kind = DatasetKind::Planted;
        let profiles = p.profiles.iter().map(|q| q.scaled(scale)).collect();
        let ds = Dataset::from_parts(p.taxonomy, profiles, &cfg.dataset, 9).unwrap();
        let mut sim = Simulation::with_dataset(cfg, ds).unwrap();
        sim.run_cycles(60);
        sim.representatives()
    };
    assert_eq!(elect(1.0), elect(7.5));
}

#[test]
fn silent_representative_is_noticed_after_the_repair_threshold() {
    let (mut sim, _) = planted(2, 20, 12);
    let mut cfg = sim.config().clone();
    cfg.election.repair_silence = 5;
    let ds = sim.dataset().clone();
    sim = Simulation::with_dataset(cfg, ds).unwrap();
    sim.run_cycles(11);
    let rep = sim.representatives().into_iter().max_by_key(|r| {
        (sim.peers().filter(|p| p.election.community() == *r).count(), std::cmp::Reverse(*r))
    });
    let rep = rep.unwrap();
    let followers: Vec<PeerId> = sim.peers().filter(|p| p.election.community() == rep && p.id != rep).map(|p| p.id).collect();
    assert!(!followers.is_empty());
    sim.remove_peer(rep);
    sim.run_cycles(40);
    let first = sim.repairs().iter().filter(|r| r.silenced == rep).map(|r| r.cycle).min();
    assert_eq!(first, Some(16));
    for f in followers {
        assert_ne!(sim.peer(f).unwrap().election.community(), rep);
    }
}
