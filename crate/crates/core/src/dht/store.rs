use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::id::Key;
use super::simhash::SignatureScheme;
use crate::gossip::SharedProfile;
use crate::ids::PeerId;

/// A community descriptor as registered by its representative.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorRecord {
    pub representative: PeerId,
    pub descriptor: SharedProfile,
    pub signatures: Vec<u64>,
    pub epoch: u64,
    /// Previous representatives of the same community whose records this
    /// one replaces.
    pub supersedes: Vec<PeerId>,
}

impl DescriptorRecord {
    pub fn new(representative: PeerId, descriptor: SharedProfile, scheme: &SignatureScheme, epoch: u64) -> Self {
        let signatures = scheme.signatures(&descriptor);
        DescriptorRecord { representative, descriptor, signatures, epoch, supersedes: Vec::new() }
    }

    pub fn keys(&self, scheme: &SignatureScheme) -> Vec<Key> {
        self.signatures.iter().enumerate().map(|(i, &s)| scheme.key(i as u32, s)).collect()
    }

    /// Signatures match the descriptor under `scheme`.
    pub fn verify(&self, scheme: &SignatureScheme) -> bool {
        self.signatures == scheme.signatures(&self.descriptor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PutOutcome {
    Stored,
    Refreshed,
    /// An equal-or-newer epoch (or a supersession) for this representative
    /// is already held.
    Stale,
}

#[derive(Debug, Clone)]
struct Held {
    record: Arc<DescriptorRecord>,
    refreshed: u64,
}

/// Records held by one DHT node. At most one epoch per representative is
/// ever held, across all keys.
#[derive(Debug, Clone, Default)]
pub struct RecordStore {
    by_key: BTreeMap<Key, BTreeMap<PeerId, Held>>,
    /// Highest epoch seen per representative and the keys holding it. An
    /// entry with no keys is a tombstone left by a supersession.
    by_rep: BTreeMap<PeerId, (u64, BTreeSet<Key>)>,
}

impl RecordStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, key: Key, record: Arc<DescriptorRecord>, now: u64) -> PutOutcome {
        let rep = record.representative;
        for &old in &record.supersedes {
            if old != rep {
                self.retire(old, record.epoch);
            }
        }
        if let Some((epoch, _)) = self.by_rep.get(&rep) {
            if *epoch > record.epoch {
                return PutOutcome::Stale;
            }
            if *epoch < record.epoch {
                self.purge(rep);
            }
        }
        let entry = self.by_rep.entry(rep).or_insert((record.epoch, BTreeSet::new()));
        entry.0 = record.epoch;
        let fresh = entry.1.insert(key);
        self.by_key.entry(key).or_default().insert(rep, Held { record, refreshed: now });
        if fresh {
            PutOutcome::Stored
        } else {
            PutOutcome::Refreshed
        }
    }

    fn purge(&mut self, rep: PeerId) {
        if let Some((_, keys)) = self.by_rep.get_mut(&rep) {
            for k in std::mem::take(keys) {
                if let Some(m) = self.by_key.get_mut(&k) {
                    m.remove(&rep);
                    if m.is_empty() {
                        self.by_key.remove(&k);
                    }
                }
            }
        }
    }

    /// Drops every record of `rep` older than `epoch` and refuses older
    /// re-registrations from then on.
    pub fn retire(&mut self, rep: PeerId, epoch: u64) {
        match self.by_rep.get(&rep) {
            Some((e, _)) if *e >= epoch => {}
            _ => {
                self.purge(rep);
                self.by_rep.insert(rep, (epoch, BTreeSet::new()));
            }
        }
    }

    /// Distinct records stored under any of `keys`, by ascending representative.
    pub fn get(&self, keys: &[Key]) -> Vec<Arc<DescriptorRecord>> {
        let mut out: BTreeMap<PeerId, Arc<DescriptorRecord>> = BTreeMap::new();
        for k in keys {
            if let Some(m) = self.by_key.get(k) {
                for (rep, h) in m {
                    out.entry(*rep).or_insert_with(|| Arc::clone(&h.record));
                }
            }
        }
        out.into_values().collect()
    }

    /// Removes records not refreshed within `ttl` cycles.
    pub fn expire(&mut self, now: u64, ttl: u64) -> usize {
        let mut dropped = 0;
        let by_rep = &mut self.by_rep;
        self.by_key.retain(|key, m| {
            m.retain(|rep, h| {
                let keep = now.saturating_sub(h.refreshed) <= ttl;
                if !keep {
                    dropped += 1;
                    if let Some((_, keys)) = by_rep.get_mut(rep) {
                        keys.remove(key);
                    }
                }
                keep
            });
            !m.is_empty()
        });
        dropped
    }

    /// Number of (key, record) pairs held.
    pub fn len(&self) -> usize {
        self.by_key.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }

    pub fn holds(&self, rep: PeerId) -> bool {
        self.by_rep.get(&rep).is_some_and(|(_, keys)| !keys.is_empty())
    }

    /// Distinct epochs held for `rep` across all keys (for invariant checks).
    pub fn epochs_for(&self, rep: PeerId) -> BTreeSet<u64> {
        self.by_key
            .values()
            .filter_map(|m| m.get(&rep))
            .map(|h| h.record.epoch)
            .collect()
    }

    /// One held record per representative, by ascending representative.
    pub fn records(&self) -> Vec<Arc<DescriptorRecord>> {
        let mut out: BTreeMap<PeerId, Arc<DescriptorRecord>> = BTreeMap::new();
        for m in self.by_key.values() {
            for (rep, h) in m {
                out.entry(*rep).or_insert_with(|| Arc::clone(&h.record));
            }
        }
        out.into_values().collect()
    }

    pub fn representatives(&self) -> impl Iterator<Item = PeerId> + '_ {
        self.by_rep.iter().filter(|(_, (_, k))| !k.is_empty()).map(|(r, _)| *r)
    }
}
