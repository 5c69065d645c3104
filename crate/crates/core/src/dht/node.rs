use std::sync::Arc;

use super::id::{Key, NodeId};
use super::routing::{Contact, RoutingTable};
use super::store::{DescriptorRecord, PutOutcome, RecordStore};
use crate::ids::PeerId;

/// Per-peer DHT state: routing table plus the records this node holds.
#[derive(Debug, Clone)]
pub struct DhtNode {
    contact: Contact,
    pub routing: RoutingTable,
    pub store: RecordStore,
}

impl DhtNode {
    pub fn new(peer: PeerId, bucket_size: usize) -> Self {
        let contact = Contact::for_peer(peer);
        DhtNode { contact, routing: RoutingTable::new(contact.id, bucket_size), store: RecordStore::new() }
    }

    pub fn contact(&self) -> Contact {
        self.contact
    }

    pub fn id(&self) -> NodeId {
        self.contact.id
    }

    pub fn peer(&self) -> PeerId {
        self.contact.peer
    }

    /// FIND_NODE: the `k` closest contacts this node knows.
    pub fn find_node(&self, target: &NodeId) -> Vec<Contact> {
        self.routing.closest(target, self.routing.bucket_size())
    }

    /// FIND_VALUE: closest contacts to `target` plus any records held under
    /// `keys`.
    pub fn find_value(&self, target: &NodeId, keys: &[Key]) -> (Vec<Contact>, Vec<Arc<DescriptorRecord>>) {
        (self.find_node(target), self.store.get(keys))
    }

    pub fn store(&mut self, key: Key, record: Arc<DescriptorRecord>, now: u64) -> PutOutcome {
        self.store.put(key, record, now)
    }
}
