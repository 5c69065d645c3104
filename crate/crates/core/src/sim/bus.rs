use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::message::MsgKind;

/// Per-kind message counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub sent: u64,
    pub delivered: u64,
    /// Addressed to a peer that left before delivery.
    pub dropped: u64,
}

impl KindCounts {
    pub fn in_flight(&self) -> u64 {
        self.sent - self.delivered - self.dropped
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bus {
    pub kinds: BTreeMap<MsgKind, KindCounts>,
}

impl Bus {
    pub fn sent(&mut self, k: MsgKind) {
        self.kinds.entry(k).or_default().sent += 1;
    }

    pub fn delivered(&mut self, k: MsgKind) {
        self.kinds.entry(k).or_default().delivered += 1;
    }

    pub fn dropped(&mut self, k: MsgKind) {
        self.kinds.entry(k).or_default().dropped += 1;
    }

    pub fn totals(&self) -> KindCounts {
        self.kinds.values().fold(KindCounts::default(), |a, c| KindCounts {
            sent: a.sent + c.sent,
            delivered: a.delivered + c.delivered,
            dropped: a.dropped + c.dropped,
        })
    }

    pub fn count(&self, k: MsgKind) -> KindCounts {
        self.kinds.get(&k).copied().unwrap_or_default()
    }

    /// Checks sent = delivered + dropped for every kind.
    pub fn audit(&self) -> Result<(), String> {
        for (k, c) in &self.kinds {
            if c.sent != c.delivered + c.dropped {
                return Err(format!(
                    "{k:?}: sent {} != delivered {} + dropped {}",
                    c.sent, c.delivered, c.dropped
                ));
            }
        }
        Ok(())
    }
}
