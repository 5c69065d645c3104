//! Synchronous in-memory DHT: every message is delivered instantly and a
//! node that is not in the map counts as failed. Useful for checking
//! routing and index quality without the event simulator.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;

use super::id::{Key, NodeId, ID_BITS};
use super::lookup::{Lookup, LookupResult};
use super::node::DhtNode;
use super::routing::{Contact, Update};
use super::simhash::SignatureScheme;
use super::store::{DescriptorRecord, PutOutcome};
use super::{probe_plan, rank_records};
use crate::ids::PeerId;
use crate::profile::Profile;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreReceipt {
    pub key: Key,
    pub holder: PeerId,
    pub outcome: PutOutcome,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub results: Vec<(Arc<DescriptorRecord>, f64)>,
    /// Distinct representatives seen before ranking.
    pub candidates: usize,
    pub probes: u32,
    pub rounds: u32,
    /// Remote peers that received at least one request.
    pub contacted: BTreeSet<PeerId>,
}

#[derive(Debug, Clone)]
pub struct DhtNetwork {
    nodes: BTreeMap<PeerId, DhtNode>,
    k: usize,
    alpha: usize,
    scheme: SignatureScheme,
    now: u64,
}

impl DhtNetwork {
    pub fn new(k: usize, alpha: usize, scheme: SignatureScheme) -> Self {
        DhtNetwork { nodes: BTreeMap::new(), k, alpha, scheme, now: 0 }
    }

    pub fn scheme(&self) -> &SignatureScheme {
        &self.scheme
    }

    pub fn set_time(&mut self, now: u64) {
        self.now = now;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, peer: PeerId) -> Option<&DhtNode> {
        self.nodes.get(&peer)
    }

    pub fn node_mut(&mut self, peer: PeerId) -> Option<&mut DhtNode> {
        self.nodes.get_mut(&peer)
    }

    pub fn peers(&self) -> impl Iterator<Item = PeerId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn into_nodes(self) -> BTreeMap<PeerId, DhtNode> {
        self.nodes
    }

    pub fn remove(&mut self, peer: PeerId) -> bool {
        self.nodes.remove(&peer).is_some()
    }

    /// `peer` learns about `c`. A full bucket pings its least recently
    /// seen entry and evicts it only if it has left the network.
    fn learn(&mut self, peer: PeerId, c: Contact) {
        let Some(node) = self.nodes.get_mut(&peer) else { return };
        if let Update::Full { lrs } = node.routing.update(c) {
            let alive = self.nodes.contains_key(&lrs.peer);
            let node = self.nodes.get_mut(&peer).expect("checked above");
            if alive {
                node.routing.touch(lrs.peer);
            } else {
                node.routing.replace(lrs.peer, c);
            }
        }
    }

    /// Adds `peer`, seeded with `bootstrap`, then performs a self-lookup and
    /// refreshes every bucket farther than its closest neighbour. Every peer
    /// the newcomer queries learns about it.
    pub fn join<R: Rng + ?Sized>(&mut self, peer: PeerId, bootstrap: &[PeerId], rng: &mut R) {
        self.nodes.insert(peer, DhtNode::new(peer, self.k));
        for &b in bootstrap {
            if b != peer && self.nodes.contains_key(&b) {
                self.learn(peer, Contact::for_peer(b));
            }
        }
        let own = NodeId::for_peer(peer);
        self.learning_lookup(peer, own);
        let first = self.nodes[&peer].routing.closest_bucket();
        if let Some(j) = first {
            for bucket in (j + 1)..ID_BITS {
                let target = own.random_in_bucket(bucket, rng);
                self.learning_lookup(peer, target);
            }
        }
    }

    /// Lookup that updates routing tables on both sides of every exchange.
    fn learning_lookup(&mut self, from: PeerId, target: NodeId) -> LookupResult {
        let me = Contact::for_peer(from);
        let seeds = self.nodes[&from].routing.closest(&target, self.k);
        let mut lookup = Lookup::new(target, self.k, self.alpha, me, seeds);
        loop {
            let probes = lookup.next_round();
            if probes.is_empty() {
                break;
            }
            for p in probes {
                match self.nodes.get(&p.peer) {
                    Some(n) => {
                        let reply = n.find_node(&target);
                        lookup.on_reply(p.peer, reply);
                        self.learn(p.peer, me);
                        self.learn(from, p);
                    }
                    None => {
                        lookup.on_failure(p.peer);
                        if let Some(n) = self.nodes.get_mut(&from) {
                            n.routing.remove(p.peer);
                        }
                    }
                }
            }
        }
        lookup.result()
    }

    /// Read-only iterative FIND_NODE from `from`.
    pub fn iterative_find_node(&self, from: PeerId, target: NodeId) -> LookupResult {
        self.drive(from, target, &[], &mut Vec::new(), &mut BTreeSet::new())
    }

    fn drive(
        &self,
        from: PeerId,
        target: NodeId,
        keys: &[Key],
        found: &mut Vec<Arc<DescriptorRecord>>,
        contacted: &mut BTreeSet<PeerId>,
    ) -> LookupResult {
        let me = Contact::for_peer(from);
        let origin = &self.nodes[&from];
        if !keys.is_empty() {
            found.extend(origin.store.get(keys));
        }
        let seeds = origin.routing.closest(&target, self.k);
        let mut lookup = Lookup::new(target, self.k, self.alpha, me, seeds);
        loop {
            let probes = lookup.next_round();
            if probes.is_empty() {
                break;
            }
            for p in probes {
                contacted.insert(p.peer);
                match self.nodes.get(&p.peer) {
                    Some(n) => {
                        let (contacts, records) = n.find_value(&target, keys);
                        found.extend(records);
                        lookup.on_reply(p.peer, contacts);
                    }
                    None => {
                        lookup.on_failure(p.peer);
                    }
                }
            }
        }
        lookup.result()
    }

    /// The true `k` closest peers to `target`, by exhaustive scan.
    pub fn brute_force_closest(&self, target: &NodeId, k: usize) -> Vec<Contact> {
        let mut all: Vec<Contact> = self.nodes.values().map(DhtNode::contact).collect();
        all.sort_by_key(|c| c.id.distance(target));
        all.truncate(k);
        all
    }

    /// Stores `record` under each of its keys on the `k` closest peers found
    /// from `from`.
    pub fn register(&mut self, from: PeerId, record: DescriptorRecord) -> Vec<StoreReceipt> {
        let record = Arc::new(record);
        let mut receipts = Vec::new();
        for key in record.keys(&self.scheme) {
            let holders = self.iterative_find_node(from, key).closest;
            for h in holders {
                if let Some(n) = self.nodes.get_mut(&h.peer) {
                    let outcome = n.store(key, Arc::clone(&record), self.now);
                    receipts.push(StoreReceipt { key, holder: h.peer, outcome });
                }
            }
        }
        receipts
    }

    /// Approximate search: one FIND_VALUE lookup per signature set, carrying
    /// every probe key within `radius`, then a similarity ranking of the
    /// records found.
    pub fn approx_search(&self, from: PeerId, sample: &Profile, k: usize, radius: u32) -> SearchOutcome {
        let mut found = Vec::new();
        let mut contacted = BTreeSet::new();
        let mut probes = 0;
        let mut rounds = 0;
        for set in probe_plan(&self.scheme, sample, radius) {
            let r = self.drive(from, set.target, &set.keys, &mut found, &mut contacted);
            probes += r.probes;
            rounds += r.rounds;
        }
        let candidates: BTreeSet<PeerId> = found.iter().map(|r| r.representative).collect();
        SearchOutcome {
            results: rank_records(sample, found, k),
            candidates: candidates.len(),
            probes,
            rounds,
            contacted,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(n: u64, seed: u64) -> DhtNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = DhtNetwork::new(8, 3, SignatureScheme::new(seed, 4, 16));
        for p in 0..n {
            let boot: Vec<PeerId> = if p == 0 { vec![] } else { vec![PeerId(rng.random_range(0..p))] };
            net.join(PeerId(p), &boot, &mut rng);
        }
        net
    }

    #[test]
    fn lookups_find_true_closest() {
        let net = build(200, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let from = PeerId(rng.random_range(0..200));
            let target = NodeId::random(&mut rng);
            let got = net.iterative_find_node(from, target);
            assert!(got.complete);
            assert_eq!(got.closest, net.brute_force_closest(&target, 8));
        }
    }

    #[test]
    fn routing_tables_stay_valid() {
        let net = build(100, 9);
        for p in net.peers() {
            net.node(p).unwrap().routing.check_invariants().unwrap();
            assert!(!net.node(p).unwrap().routing.is_empty());
        }
    }

    #[test]
    fn registered_record_is_found() {
        let mut net = build(120, 5);
        let p = Arc::new(Profile::new(vec![(1, 1.0), (2, 0.5), (7, 0.25)]).unwrap());
        let rec = DescriptorRecord::new(PeerId(17), Arc::clone(&p), net.scheme(), 1);
        let receipts = net.register(PeerId(17), rec);
        assert_eq!(receipts.len(), 4 * 8);
        let out = net.approx_search(PeerId(90), &p, 3, 1);
        assert_eq!(out.results.len(), 1);
        assert_eq!(out.results[0].0.representative, PeerId(17));
        assert!((out.results[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn departed_nodes_fail_probes() {
        let mut net = build(60, 2);
        for p in 0..20 {
            net.remove(PeerId(p));
        }
        let target = NodeId::from_u64(42);
        let got = net.iterative_find_node(PeerId(40), target);
        let truth = net.brute_force_closest(&target, 8);
        assert!(got.complete);
        assert!(got.closest.iter().all(|c| net.node(c.peer).is_some()));
        let overlap = got.closest.iter().filter(|c| truth.contains(c)).count();
        assert!(overlap >= 6, "overlap {overlap}");
    }
}
