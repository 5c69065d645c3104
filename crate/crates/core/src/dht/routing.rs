use serde::{Deserialize, Serialize};

use super::id::{NodeId, ID_BITS};
use crate::ids::PeerId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Contact {
    pub id: NodeId,
    pub peer: PeerId,
}

impl Contact {
    pub fn for_peer(peer: PeerId) -> Self {
        Contact { id: NodeId::for_peer(peer), peer }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Update {
    Inserted,
    /// Already known; moved to the most-recently-seen end.
    Refreshed,
    /// Bucket full; the caller should check `lrs` and either keep it
    /// ([`RoutingTable::touch`]) or replace it ([`RoutingTable::replace`]).
    Full { lrs: Contact },
    IsSelf,
}

/// Kademlia routing table: bucket `j` holds contacts whose XOR distance to
/// the owner has its highest set bit at `j`. Each bucket is ordered from
/// least- to most-recently seen.
#[derive(Debug, Clone)]
pub struct RoutingTable {
    own: NodeId,
    k: usize,
    buckets: Vec<Vec<Contact>>,
}

impl RoutingTable {
    pub fn new(own: NodeId, k: usize) -> Self {
        assert!(k >= 1, "bucket size must be positive");
        RoutingTable { own, k, buckets: vec![Vec::new(); ID_BITS] }
    }

    pub fn own_id(&self) -> NodeId {
        self.own
    }

    pub fn bucket_size(&self) -> usize {
        self.k
    }

    pub fn bucket(&self, j: usize) -> &[Contact] {
        &self.buckets[j]
    }

    pub fn len(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.iter().all(Vec::is_empty)
    }

    pub fn contains(&self, peer: PeerId) -> bool {
        self.find(peer).is_some()
    }

    fn find(&self, peer: PeerId) -> Option<(usize, usize)> {
        let c = Contact::for_peer(peer);
        let j = self.own.bucket_index(&c.id)?;
        self.buckets[j].iter().position(|x| x.peer == peer).map(|i| (j, i))
    }

    pub fn contacts(&self) -> impl Iterator<Item = &Contact> {
        self.buckets.iter().flatten()
    }

    pub fn update(&mut self, c: Contact) -> Update {
        let Some(j) = self.own.bucket_index(&c.id) else {
            return Update::IsSelf;
        };
        let b = &mut self.buckets[j];
        if let Some(i) = b.iter().position(|x| x.peer == c.peer) {
            let e = b.remove(i);
            b.push(e);
            return Update::Refreshed;
        }
        if b.len() < self.k {
            b.push(c);
            return Update::Inserted;
        }
        Update::Full { lrs: b[0] }
    }

    /// Marks `peer` as just seen.
    pub fn touch(&mut self, peer: PeerId) {
        if let Some((j, i)) = self.find(peer) {
            let e = self.buckets[j].remove(i);
            self.buckets[j].push(e);
        }
    }

    /// Evicts `old` and appends `new` (same bucket) as most recently seen.
    pub fn replace(&mut self, old: PeerId, new: Contact) -> bool {
        match self.find(old) {
            Some((j, i)) if self.own.bucket_index(&new.id) == Some(j) => {
                self.buckets[j].remove(i);
                if !self.buckets[j].iter().any(|x| x.peer == new.peer) {
                    self.buckets[j].push(new);
                }
                true
            }
            _ => false,
        }
    }

    pub fn remove(&mut self, peer: PeerId) -> bool {
        match self.find(peer) {
            Some((j, i)) => {
                self.buckets[j].remove(i);
                true
            }
            None => false,
        }
    }

    /// Up to `n` known contacts closest to `target`, nearest first.
    pub fn closest(&self, target: &NodeId, n: usize) -> Vec<Contact> {
        let mut all: Vec<Contact> = self.contacts().copied().collect();
        all.sort_by_key(|c| c.id.distance(target));
        all.truncate(n);
        all
    }

    /// Bucket of the closest known neighbour (lowest non-empty index).
    pub fn closest_bucket(&self) -> Option<usize> {
        self.buckets.iter().position(|b| !b.is_empty())
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        for (j, b) in self.buckets.iter().enumerate() {
            if b.len() > self.k {
                return Err(format!("bucket {j} over capacity"));
            }
            for c in b {
                if self.own.bucket_index(&c.id) != Some(j) {
                    return Err(format!("contact {} in wrong bucket {j}", c.peer));
                }
            }
        }
        Ok(())
    }
}
