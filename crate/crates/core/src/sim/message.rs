use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dht::{Contact, DescriptorRecord, Key, NodeId};
use crate::election::ElectionState;
use crate::gossip::{SharedProfile, ViewEntry};
use crate::ids::PeerId;
use crate::query::{Query, QueryId};

pub type RpcId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MsgKind {
    ShuffleReq,
    ShuffleRep,
    SimReq,
    SimRep,
    Ping,
    Pong,
    FindNode,
    FindNodeRep,
    FindValue,
    FindValueRep,
    Store,
    QueryFwd,
    QueryHit,
}

impl MsgKind {
    pub const ALL: [MsgKind; 13] = [
        MsgKind::ShuffleReq,
        MsgKind::ShuffleRep,
        MsgKind::SimReq,
        MsgKind::SimRep,
        MsgKind::Ping,
        MsgKind::Pong,
        MsgKind::FindNode,
        MsgKind::FindNodeRep,
        MsgKind::FindValue,
        MsgKind::FindValueRep,
        MsgKind::Store,
        MsgKind::QueryFwd,
        MsgKind::QueryHit,
    ];
}

/// Query forwarded inside a community.
#[derive(Debug, Clone)]
pub struct QueryFwd {
    pub query: Arc<Query>,
    /// Peer that collects the hits.
    pub origin: PeerId,
    pub ttl: u32,
    /// True on the hop from the entry point to a representative, which
    /// always acknowledges.
    pub first_hop: bool,
    pub visited: Vec<PeerId>,
}

#[derive(Debug, Clone)]
pub enum Payload {
    ShuffleReq(Vec<ViewEntry>),
    ShuffleRep(Vec<ViewEntry>),
    SimReq { entries: Vec<ViewEntry>, election: ElectionState },
    SimRep { entries: Vec<ViewEntry>, election: ElectionState },
    Ping { rpc: RpcId },
    Pong { rpc: RpcId },
    FindNode { rpc: RpcId, target: NodeId },
    FindNodeRep { rpc: RpcId, contacts: Vec<Contact> },
    FindValue { rpc: RpcId, target: NodeId, keys: Arc<[Key]> },
    FindValueRep { rpc: RpcId, contacts: Vec<Contact>, records: Vec<Arc<DescriptorRecord>> },
    Store { key: Key, record: Arc<DescriptorRecord> },
    QueryFwd(QueryFwd),
    QueryHit { query: QueryId, profile: SharedProfile, score: f64, ack: bool },
}

impl Payload {
    pub fn kind(&self) -> MsgKind {
        match self {
            Payload::ShuffleReq(_) => MsgKind::ShuffleReq,
            Payload::ShuffleRep(_) => MsgKind::ShuffleRep,
            Payload::SimReq { .. } => MsgKind::SimReq,
            Payload::SimRep { .. } => MsgKind::SimRep,
            Payload::Ping { .. } => MsgKind::Ping,
            Payload::Pong { .. } => MsgKind::Pong,
            Payload::FindNode { .. } => MsgKind::FindNode,
            Payload::FindNodeRep { .. } => MsgKind::FindNodeRep,
            Payload::FindValue { .. } => MsgKind::FindValue,
            Payload::FindValueRep { .. } => MsgKind::FindValueRep,
            Payload::Store { .. } => MsgKind::Store,
            Payload::QueryFwd(_) => MsgKind::QueryFwd,
            Payload::QueryHit { .. } => MsgKind::QueryHit,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Message {
    pub from: PeerId,
    pub to: PeerId,
    /// Query this message is spent on, for per-query cost accounting.
    pub query: Option<QueryId>,
    pub payload: Payload,
}
