//! Structured layer: a Kademlia-style DHT whose records are community
//! descriptors filed under simhash signature keys, so that similar
//! descriptors can be found by probing nearby keys.

mod id;
mod lookup;
mod network;
mod node;
mod routing;
mod simhash;
mod store;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use id::{xor_distance, Distance, Key, NodeId, ID_BITS, ID_BYTES};
pub use lookup::{Lookup, LookupResult};
pub use network::{DhtNetwork, SearchOutcome, StoreReceipt};
pub use node::DhtNode;
pub use routing::{Contact, RoutingTable, Update};
pub use simhash::{hamming, hyperplane_component, probe_signatures, SignatureScheme};
pub use store::{DescriptorRecord, PutOutcome, RecordStore};

use crate::profile::{similarity, Profile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DhtConfig {
    pub bucket_size: usize,
    pub alpha: usize,
    pub signature_sets: u32,
    pub signature_bits: u32,
    pub probe_radius: u32,
    pub republish_interval: u64,
    pub record_ttl: u64,
}

impl Default for DhtConfig {
    fn default() -> Self {
        DhtConfig {
            bucket_size: 8,
            alpha: 3,
            signature_sets: 4,
            signature_bits: 16,
            probe_radius: 1,
            republish_interval: 50,
            record_ttl: 120,
        }
    }
}

impl DhtConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.bucket_size == 0 || self.alpha == 0 {
            return Err("bucket_size and alpha must be positive".into());
        }
        if self.signature_sets == 0 {
            return Err("signature_sets must be positive".into());
        }
        if !(1..=64).contains(&self.signature_bits) {
            return Err("signature_bits must lie in 1..=64".into());
        }
        if self.probe_radius > self.signature_bits {
            return Err("probe_radius cannot exceed signature_bits".into());
        }
        if self.republish_interval == 0 || self.record_ttl < self.republish_interval {
            return Err("record_ttl must be at least republish_interval (> 0)".into());
        }
        Ok(())
    }

    pub fn scheme(&self, seed: u64) -> SignatureScheme {
        SignatureScheme::new(seed, self.signature_sets, self.signature_bits)
    }
}

/// One signature set's share of an approximate search: the lookup target
/// (the sample's own key) and every probe key within the radius.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeSet {
    pub set: u32,
    pub target: Key,
    pub keys: Vec<Key>,
}

pub fn probe_plan(scheme: &SignatureScheme, sample: &Profile, radius: u32) -> Vec<ProbeSet> {
    (0..scheme.sets)
        .map(|set| {
            let sig = scheme.signature(sample, set);
            let keys = probe_signatures(sig, scheme.bits, radius).into_iter().map(|s| scheme.key(set, s)).collect();
            ProbeSet { set, target: scheme.key(set, sig), keys }
        })
        .collect()
}

/// Deduplicates by representative (newest epoch wins), scores against
/// `sample` and keeps the best `k` by score descending, then ascending id.
pub fn rank_records(
    sample: &Profile,
    records: impl IntoIterator<Item = Arc<DescriptorRecord>>,
    k: usize,
) -> Vec<(Arc<DescriptorRecord>, f64)> {
    let mut best: BTreeMap<crate::PeerId, Arc<DescriptorRecord>> = BTreeMap::new();
    for r in records {
        match best.get(&r.representative) {
            Some(held) if held.epoch >= r.epoch => {}
            _ => {
                best.insert(r.representative, r);
            }
        }
    }
    let mut scored: Vec<(Arc<DescriptorRecord>, f64)> =
        best.into_values().map(|r| {
            let s = similarity(sample, &r.descriptor);
            (r, s)
        }).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.representative.cmp(&b.0.representative)));
    scored.truncate(k);
    scored
}
