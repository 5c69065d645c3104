use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::message::RpcId;
use crate::dht::{Contact, DescriptorRecord, DhtNode, Key, Lookup};
use crate::election::Election;
use crate::gossip::{GossipState, SharedProfile};
use crate::ids::PeerId;
use crate::query::QueryId;

/// One simulated node. Only the simulator mutates it, one event at a time.
#[derive(Debug, Clone)]
pub struct Peer {
    pub id: PeerId,
    pub profile: SharedProfile,
    pub gossip: GossipState,
    pub election: Election,
    pub dht: DhtNode,
    pub joined: u64,
    pub(crate) rng: ChaCha8Rng,
    /// Last community advertised by each neighbour.
    pub(crate) communities: BTreeMap<PeerId, PeerId>,
    pub(crate) lookups: BTreeMap<u64, LookupOp>,
    pub(crate) rpcs: BTreeMap<RpcId, Rpc>,
    /// Least-recently-seen contacts with a liveness ping outstanding.
    pub(crate) pinging: BTreeSet<PeerId>,
    /// Epoch and cycle of the last registration.
    pub(crate) published: Option<(u64, u64)>,
    /// Query ids already evaluated here, with the cycle they expire at.
    pub(crate) seen_queries: BTreeMap<QueryId, u64>,
    next_rpc: RpcId,
    next_op: u64,
}

impl Peer {
    pub(crate) fn new(
        id: PeerId,
        profile: SharedProfile,
        gossip: GossipState,
        election: Election,
        dht: DhtNode,
        joined: u64,
        rng: ChaCha8Rng,
    ) -> Self {
        Peer {
            id,
            profile,
            gossip,
            election,
            dht,
            joined,
            rng,
            communities: BTreeMap::new(),
            lookups: BTreeMap::new(),
            rpcs: BTreeMap::new(),
            pinging: BTreeSet::new(),
            published: None,
            seen_queries: BTreeMap::new(),
            next_rpc: 0,
            next_op: 0,
        }
    }

    pub(crate) fn new_rpc(&mut self) -> RpcId {
        self.next_rpc += 1;
        self.next_rpc
    }

    pub(crate) fn new_op(&mut self) -> u64 {
        self.next_op += 1;
        self.next_op
    }

    /// Profile of a neighbour as last seen in either view.
    pub fn known_profile(&self, peer: PeerId) -> Option<SharedProfile> {
        self.gossip
            .similar_view()
            .iter()
            .map(|s| &s.entry)
            .chain(self.gossip.random_view())
            .find(|e| e.peer == peer)
            .map(|e| Arc::clone(&e.profile))
    }

    pub fn community_of(&self, neighbour: PeerId) -> Option<PeerId> {
        self.communities.get(&neighbour).copied()
    }

    pub fn lookups_in_flight(&self) -> usize {
        self.lookups.len()
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Purpose {
    Join,
    Refresh,
    Publish { key: Key, record: Arc<DescriptorRecord> },
    Search { query: QueryId },
}

#[derive(Debug, Clone)]
pub(crate) struct LookupOp {
    pub lookup: Lookup,
    pub purpose: Purpose,
    pub keys: Arc<[Key]>,
    pub query: Option<QueryId>,
    pub found: Vec<Arc<DescriptorRecord>>,
}

#[derive(Debug, Clone)]
pub(crate) enum Rpc {
    Probe { op: u64, to: PeerId },
    Ping { lrs: Contact, candidate: Contact },
}
