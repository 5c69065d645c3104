//! Query resolution types and the pure parts of the query engine: ranking,
//! recall against an oracle, forward selection inside a community, the
//! global-flood baseline and the efficiency comparison between the two.
//!
//! The event-driven part (DHT search, QUERY_FWD / QUERY_HIT traffic) lives
//! in the simulator, which fills in a [`QueryResult`] from bus events.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gossip::SharedProfile;
use crate::ids::PeerId;
use crate::profile::{rank_order, similarity, Profile};

/// Workload defaults for every query issued in a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryConfig {
    pub k: usize,
    /// Representatives to contact.
    pub m: usize,
    pub ttl: u32,
    pub fanout: usize,
    pub theta: f64,
    /// The search widens its probe radius up to this value while fewer than
    /// `m` representatives have been found.
    pub max_probe_radius: u32,
    pub forward: ForwardPolicy,
}

impl Default for QueryConfig {
    fn default() -> Self {
        QueryConfig {
            k: 10,
            m: 3,
            ttl: 3,
            fanout: 3,
            theta: 0.5,
            max_probe_radius: 2,
            forward: ForwardPolicy::Sample,
        }
    }
}

impl QueryConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 || self.m == 0 || self.fanout == 0 {
            return Err("k, m and fanout must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(format!("theta must lie in [0, 1], got {}", self.theta));
        }
        Ok(())
    }
}

/// How a peer picks the neighbours it forwards a query to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForwardPolicy {
    /// Highest similarity to the query sample (one comparison per candidate).
    #[default]
    Sample,
    /// Similar-view order, no extra comparisons.
    View,
}

pub type QueryId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub id: QueryId,
    pub sample: SharedProfile,
    pub k: usize,
    pub m: usize,
    pub ttl: u32,
    pub fanout: usize,
    pub theta: f64,
}

impl Query {
    pub fn new(id: QueryId, sample: SharedProfile, cfg: &QueryConfig) -> Result<Self> {
        cfg.validate().map_err(Error::Parameter)?;
        Ok(Query { id, sample, k: cfg.k, m: cfg.m, ttl: cfg.ttl, fanout: cfg.fanout, theta: cfg.theta })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub peer: PeerId,
    pub profile: SharedProfile,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub representative: PeerId,
    pub descriptor: SharedProfile,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCost {
    pub messages: u64,
    pub comparisons: u64,
    pub peers_contacted: u64,
    pub dht_hops: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultFlags {
    /// Representatives that were sent the query but never acknowledged it.
    pub unreachable_representatives: u32,
    /// Probe radius of the final search pass.
    pub probe_radius: u32,
    pub incomplete_lookups: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryResult {
    pub matches: Vec<Match>,
    pub community_descriptors: Vec<Descriptor>,
    pub cost: QueryCost,
    pub flags: ResultFlags,
}

impl QueryResult {
    pub fn scored(&self) -> Vec<(PeerId, f64)> {
        self.matches.iter().map(|m| (m.peer, m.score)).collect()
    }
}

/// Deduplicates by peer, drops scores below `theta`, sorts by score
/// descending then ascending id, keeps `k`.
pub fn rank_matches(hits: impl IntoIterator<Item = Match>, theta: f64, k: usize) -> Vec<Match> {
    let mut by_peer: BTreeMap<PeerId, Match> = BTreeMap::new();
    for h in hits {
        if h.score >= theta {
            by_peer.entry(h.peer).or_insert(h);
        }
    }
    let mut out: Vec<Match> = by_peer.into_values().collect();
    out.sort_by(|a, b| rank_order(&(a.peer, a.score), &(b.peer, b.score)));
    out.truncate(k);
    out
}

const TIE_EPS: f64 = 1e-9;

/// Recall@k against an exact top-k `oracle`.
///
/// Peers scoring at least the oracle's k-th score count as hits, so a
/// retrieved peer tied with an oracle member is as good as that member.
/// An empty oracle gives 1.0.
pub fn recall_at_k(retrieved: &[(PeerId, f64)], oracle: &[(PeerId, f64)]) -> f64 {
    let Some(&(_, kth)) = oracle.last() else {
        return 1.0;
    };
    let distinct: BTreeSet<PeerId> =
        retrieved.iter().filter(|(_, s)| *s >= kth - TIE_EPS).map(|&(p, _)| p).collect();
    distinct.len().min(oracle.len()) as f64 / oracle.len() as f64
}

/// A forwarding candidate as seen from the forwarding peer's views.
#[derive(Debug, Clone)]
pub struct ForwardCandidate<'a> {
    pub peer: PeerId,
    pub profile: &'a Profile,
    /// Last community the neighbour advertised, if any.
    pub community: Option<PeerId>,
}

/// Picks up to `fanout` unvisited candidates whose community matches
/// `community` or is unknown. Candidates come in similar-view order.
/// Returns the picks and the number of sample comparisons spent.
pub fn select_forwards(
    candidates: &[ForwardCandidate<'_>],
    community: PeerId,
    sample: &Profile,
    visited: &BTreeSet<PeerId>,
    fanout: usize,
    policy: ForwardPolicy,
) -> (Vec<PeerId>, u64) {
    let eligible = candidates
        .iter()
        .filter(|c| !visited.contains(&c.peer) && c.community.is_none_or(|x| x == community));
    match policy {
        ForwardPolicy::View => (eligible.take(fanout).map(|c| c.peer).collect(), 0),
        ForwardPolicy::Sample => {
            let scored: Vec<(PeerId, f64)> =
                eligible.map(|c| (c.peer, similarity(sample, c.profile))).collect();
            let spent = scored.len() as u64;
            let mut scored = scored;
            scored.sort_by(rank_order);
            (scored.into_iter().take(fanout).map(|(p, _)| p).collect(), spent)
        }
    }
}

/// Global TTL-unbounded flood from `entry` over the given neighbour graph.
///
/// Every reached peer evaluates the sample once, replies with a QUERY_HIT
/// when its score reaches `theta`, and forwards to every neighbour except
/// the one it heard from; duplicates are dropped silently. Delivery is
/// breadth-first. Neighbours missing from `graph` are departed peers: the
/// message to them is counted but reaches nobody.
pub fn global_flood(
    entry: PeerId,
    sample: &Profile,
    theta: f64,
    k: usize,
    graph: &BTreeMap<PeerId, (SharedProfile, Vec<PeerId>)>,
) -> QueryResult {
    let mut cost = QueryCost::default();
    let mut hits = Vec::new();
    let mut seen = BTreeSet::from([entry]);
    let mut queue = VecDeque::from([(entry, None::<PeerId>)]);
    while let Some((p, from)) = queue.pop_front() {
        let Some((profile, nbrs)) = graph.get(&p) else { continue };
        cost.comparisons += 1;
        let score = similarity(sample, profile);
        if score >= theta {
            hits.push(Match { peer: p, profile: SharedProfile::clone(profile), score });
            if p != entry {
                cost.messages += 1;
            }
        }
        for &n in nbrs {
            if Some(n) == from || n == p {
                continue;
            }
            cost.messages += 1;
            if graph.contains_key(&n) && seen.insert(n) {
                cost.peers_contacted += 1;
                queue.push_back((n, Some(p)));
            }
        }
    }
    QueryResult { matches: rank_matches(hits, theta, k), cost, ..Default::default() }
}

/// Cost ratios of a strategy against the flood baseline, plus both recalls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub messages_ratio: Option<f64>,
    pub comparisons_ratio: Option<f64>,
    pub peers_contacted_ratio: Option<f64>,
    pub recall: f64,
    pub flood_recall: f64,
}

/// `a / b`; 1.0 when both are zero and `None` when only `b` is.
pub fn cost_ratio(a: u64, b: u64) -> Option<f64> {
    match (a, b) {
        (0, 0) => Some(1.0),
        (_, 0) => None,
        _ => Some(a as f64 / b as f64),
    }
}

pub fn efficiency_report(result: &QueryResult, flood: &QueryResult, oracle: &[(PeerId, f64)]) -> EfficiencyReport {
    EfficiencyReport {
        messages_ratio: cost_ratio(result.cost.messages, flood.cost.messages),
        comparisons_ratio: cost_ratio(result.cost.comparisons, flood.cost.comparisons),
        peers_contacted_ratio: cost_ratio(result.cost.peers_contacted, flood.cost.peers_contacted),
        recall: recall_at_k(&result.scored(), oracle),
        flood_recall: recall_at_k(&flood.scored(), oracle),
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;

    fn p(l: u32) -> SharedProfile {
        Arc::new(Profile::singleton(l))
    }

    #[test]
    fn ranking_filters_dedups_and_orders() {
        let hits = vec![
            Match { peer: PeerId(5), profile: p(1), score: 0.9 },
            Match { peer: PeerId(2), profile: p(1), score: 0.9 },
            Match { peer: PeerId(5), profile: p(1), score: 0.9 },
            Match { peer: PeerId(7), profile: p(1), score: 0.2 },
            Match { peer: PeerId(1), profile: p(1), score: 0.95 },
        ];
        let got: Vec<_> = rank_matches(hits, 0.5, 10).iter().map(|m| m.peer.0).collect();
        assert_eq!(got, vec![1, 2, 5]);
    }

    #[test]
    fn recall_counts_ties() {
        let oracle = vec![(PeerId(1), 1.0), (PeerId(2), 0.8)];
        assert_eq!(recall_at_k(&[(PeerId(1), 1.0), (PeerId(9), 0.8)], &oracle), 1.0);
        assert_eq!(recall_at_k(&[(PeerId(1), 1.0), (PeerId(9), 0.7)], &oracle), 0.5);
        assert_eq!(recall_at_k(&[], &oracle), 0.0);
        assert_eq!(recall_at_k(&[], &[]), 1.0);
    }

    #[test]
    fn identical_strategies_have_unit_ratios() {
        let r = QueryResult {
            matches: vec![Match { peer: PeerId(1), profile: p(1), score: 1.0 }],
            cost: QueryCost { messages: 12, comparisons: 4, peers_contacted: 3, dht_hops: 0 },
            ..Default::default()
        };
        let e = efficiency_report(&r, &r, &[(PeerId(1), 1.0)]);
        assert_eq!(e.messages_ratio, Some(1.0));
        assert_eq!(e.comparisons_ratio, Some(1.0));
        assert_eq!(e.peers_contacted_ratio, Some(1.0));
        assert_eq!(e.recall, e.flood_recall);
    }

    #[test]
    fn forwards_respect_community_and_visited() {
        let a = Profile::singleton(1);
        let b = Profile::new(vec![(1, 1.0), (2, 1.0)]).unwrap();
        let cands = vec![
            ForwardCandidate { peer: PeerId(1), profile: &b, community: Some(PeerId(9)) },
            ForwardCandidate { peer: PeerId(2), profile: &a, community: Some(PeerId(8)) },
            ForwardCandidate { peer: PeerId(3), profile: &a, community: None },
            ForwardCandidate { peer: PeerId(4), profile: &a, community: Some(PeerId(9)) },
        ];
        let visited = BTreeSet::from([PeerId(4)]);
        let (picks, spent) = select_forwards(&cands, PeerId(9), &a, &visited, 3, ForwardPolicy::Sample);
        assert_eq!(picks, vec![PeerId(3), PeerId(1)]);
        assert_eq!(spent, 2);
        let (picks, spent) = select_forwards(&cands, PeerId(9), &a, &visited, 1, ForwardPolicy::View);
        assert_eq!(picks, vec![PeerId(1)]);
        assert_eq!(spent, 0);
    }

    #[test]
    fn flood_reaches_connected_component() {
        // 0 - 1 - 2, plus 3 departed (listed as neighbour of 2).
        let mut g = BTreeMap::new();
        g.insert(PeerId(0), (p(1), vec![PeerId(1)]));
        g.insert(PeerId(1), (p(2), vec![PeerId(0), PeerId(2)]));
        g.insert(PeerId(2), (p(1), vec![PeerId(1), PeerId(3)]));
        let r = global_flood(PeerId(0), &Profile::singleton(1), 0.0, 10, &g);
        assert_eq!(r.cost.peers_contacted, 2);
        assert_eq!(r.cost.comparisons, 3);
        // forwards: 0->1, 1->2, 2->3; hits: 1 and 2 reply
        assert_eq!(r.cost.messages, 3 + 2);
        assert_eq!(r.matches.len(), 3);
        assert_eq!(r.matches[0].peer, PeerId(0));
    }
}
