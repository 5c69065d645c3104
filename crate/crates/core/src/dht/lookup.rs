//! Iterative node lookup as a round-based state machine.
//!
//! A round sends up to `alpha` probes to the closest not-yet-queried
//! contacts among the current `k` best; the next round starts once every
//! probe of the round has been answered or has failed. The lookup is done
//! when the `k` closest live contacts it knows of have all answered, which
//! covers both the "round found nothing closer" stop and the final sweep
//! over unqueried members of the closest set.

use std::collections::BTreeMap;

use super::id::{Distance, NodeId};
use super::routing::Contact;
use crate::ids::PeerId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Fresh,
    InFlight,
    Answered,
    Failed,
}

#[derive(Debug, Clone)]
pub struct Lookup {
    target: NodeId,
    k: usize,
    alpha: usize,
    shortlist: BTreeMap<Distance, (Contact, Slot)>,
    in_flight: usize,
    rounds: u32,
    failures: u32,
    probes: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupResult {
    /// Up to `k` answered contacts, nearest first.
    pub closest: Vec<Contact>,
    /// False when probes failed and fewer than `k` live contacts answered.
    pub complete: bool,
    pub rounds: u32,
    /// Remote probes sent.
    pub probes: u32,
}

impl Lookup {
    /// `origin` is the node running the lookup; it counts as answered.
    pub fn new(target: NodeId, k: usize, alpha: usize, origin: Contact, seeds: impl IntoIterator<Item = Contact>) -> Self {
        assert!(k >= 1 && alpha >= 1, "k and alpha must be positive");
        let mut l = Lookup {
            target,
            k,
            alpha,
            shortlist: BTreeMap::new(),
            in_flight: 0,
            rounds: 0,
            failures: 0,
            probes: 0,
        };
        l.shortlist.insert(origin.id.distance(&target), (origin, Slot::Answered));
        l.learn(seeds);
        l
    }

    pub fn target(&self) -> NodeId {
        self.target
    }

    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    fn learn(&mut self, contacts: impl IntoIterator<Item = Contact>) {
        for c in contacts {
            self.shortlist.entry(c.id.distance(&self.target)).or_insert((c, Slot::Fresh));
        }
    }

    /// Live (non-failed) slots, nearest first, limited to `k`.
    fn best(&self) -> impl Iterator<Item = (&Distance, &(Contact, Slot))> {
        self.shortlist.iter().filter(|(_, (_, s))| *s != Slot::Failed).take(self.k)
    }

    /// Probes for the next round, or empty while a round is still in flight
    /// or when the lookup is finished.
    pub fn next_round(&mut self) -> Vec<Contact> {
        if self.in_flight > 0 {
            return Vec::new();
        }
        let picks: Vec<Distance> = self
            .best()
            .filter(|(_, (_, s))| *s == Slot::Fresh)
            .take(self.alpha)
            .map(|(d, _)| *d)
            .collect();
        let mut out = Vec::with_capacity(picks.len());
        for d in picks {
            let slot = self.shortlist.get_mut(&d).expect("picked from shortlist");
            slot.1 = Slot::InFlight;
            out.push(slot.0);
        }
        if !out.is_empty() {
            self.rounds += 1;
            self.in_flight = out.len();
            self.probes += out.len() as u32;
        }
        out
    }

    fn settle(&mut self, from: PeerId, to: Slot) -> bool {
        let hit = self.shortlist.values_mut().find(|(c, s)| c.peer == from && *s == Slot::InFlight);
        match hit {
            Some(slot) => {
                slot.1 = to;
                self.in_flight -= 1;
                true
            }
            None => false,
        }
    }

    /// Records a reply. Ignored unless `from` has a probe in flight.
    pub fn on_reply(&mut self, from: PeerId, contacts: impl IntoIterator<Item = Contact>) -> bool {
        if !self.settle(from, Slot::Answered) {
            return false;
        }
        self.learn(contacts);
        true
    }

    pub fn on_failure(&mut self, from: PeerId) -> bool {
        let hit = self.settle(from, Slot::Failed);
        if hit {
            self.failures += 1;
        }
        hit
    }

    pub fn round_complete(&self) -> bool {
        self.in_flight == 0
    }

    pub fn is_done(&self) -> bool {
        self.in_flight == 0 && self.best().all(|(_, (_, s))| *s == Slot::Answered)
    }

    pub fn result(&self) -> LookupResult {
        let closest: Vec<Contact> = self
            .shortlist
            .values()
            .filter(|(_, s)| *s == Slot::Answered)
            .take(self.k)
            .map(|(c, _)| *c)
            .collect();
        let complete = self.failures == 0 || closest.len() >= self.k;
        LookupResult { closest, complete, rounds: self.rounds, probes: self.probes }
    }
}
