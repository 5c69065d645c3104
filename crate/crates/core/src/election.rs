//! Similarity-gated representative election.
//!
//! Every peer starts as its own candidate and advertises a centrality score
//! (mean similarity to its similar view). Candidates spread on similar-layer
//! messages by max-aggregation over `(score, -id)`, but a peer only adopts a
//! candidate whose profile is within `tau_adopt` of its own, which keeps
//! dissimilar communities from collapsing onto one leader.
//!
//! A candidate re-issues its advert every cycle with a fresh heartbeat stamp.
//! Followers that stop seeing newer heartbeats for longer than
//! `repair_silence` cycles assume the representative is gone, bump their
//! epoch and restart from self-candidacy. Messages from older epochs are
//! ignored; newer epochs are adopted on sight.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::gossip::{SharedProfile, SimilarEntry};
use crate::ids::PeerId;
use crate::profile::similarity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElectionConfig {
    pub tau_adopt: f64,
    /// Cycles an election needs before its winner is trusted (registration gate).
    pub convergence_cycles: u64,
    pub repair_silence: u64,
    /// Every this many cycles all peers restart the election (0 disables).
    pub reelection_period: u64,
}

impl Default for ElectionConfig {
    fn default() -> Self {
        ElectionConfig { tau_adopt: 0.5, convergence_cycles: 30, repair_silence: 10, reelection_period: 100 }
    }
}

impl ElectionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.tau_adopt) {
            return Err("tau_adopt must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// A candidacy as carried on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectionState {
    pub candidate: PeerId,
    pub candidate_profile: SharedProfile,
    pub candidate_score: f64,
    pub epoch: u64,
    /// Cycle at which the candidate itself last issued this advert.
    pub heartbeat: u64,
    /// Earlier representatives of this community whose index records the
    /// candidate's records replace, oldest first.
    pub supersedes: Vec<PeerId>,
}

/// Longest `supersedes` list carried by a candidacy.
pub const MAX_SUPERSEDED: usize = 4;

/// Mean similarity between the owner and its similar view; 0 when empty.
pub fn centrality_score(view: &[SimilarEntry]) -> f64 {
    if view.is_empty() {
        return 0.0;
    }
    view.iter().map(|s| s.score).sum::<f64>() / view.len() as f64
}

/// `(score, -id)` lexicographic comparison.
pub fn beats(a_score: f64, a_id: PeerId, b_score: f64, b_id: PeerId) -> bool {
    a_score > b_score || (a_score == b_score && a_id < b_id)
}

/// True iff the representative has been silent strictly longer than the
/// repair threshold.
pub fn reelection_trigger(silence: u64, repair_silence: u64) -> bool {
    silence > repair_silence
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TickOutcome {
    /// The representative went silent and a repair election started.
    pub repaired: Option<PeerId>,
    pub periodic_restart: bool,
}

#[derive(Debug, Clone)]
pub struct Election {
    owner: PeerId,
    profile: SharedProfile,
    config: ElectionConfig,
    state: ElectionState,
    own_score: f64,
    last_fresh: u64,
    election_started: u64,
    /// Representative whose silence triggered the current repair round.
    silenced: Option<PeerId>,
    /// Epoch of the owner's last registration as representative.
    published_epoch: Option<u64>,
}

impl Election {
    pub fn new(owner: PeerId, profile: SharedProfile, config: ElectionConfig, now: u64) -> Self {
        let state = ElectionState {
            candidate: owner,
            candidate_profile: Arc::clone(&profile),
            candidate_score: 0.0,
            epoch: 0,
            heartbeat: now,
            supersedes: Vec::new(),
        };
        Election {
            owner,
            profile,
            config,
            state,
            own_score: 0.0,
            last_fresh: now,
            election_started: now,
            silenced: None,
            published_epoch: None,
        }
    }

    pub fn state(&self) -> &ElectionState {
        &self.state
    }

    pub fn config(&self) -> &ElectionConfig {
        &self.config
    }

    pub fn is_representative(&self) -> bool {
        self.state.candidate == self.owner
    }

    /// Community the peer currently belongs to.
    pub fn community(&self) -> PeerId {
        self.state.candidate
    }

    pub fn own_score(&self) -> f64 {
        self.own_score
    }

    pub fn epoch(&self) -> u64 {
        self.state.epoch
    }

    pub fn election_started(&self) -> u64 {
        self.election_started
    }

    pub fn silenced(&self) -> Option<PeerId> {
        self.silenced
    }

    /// Representatives the current candidacy replaces.
    pub fn superseded(&self) -> &[PeerId] {
        &self.state.supersedes
    }

    /// Records that the owner registered itself in the current epoch.
    pub fn mark_published(&mut self) {
        self.published_epoch = Some(self.state.epoch);
    }

    fn note_superseded(&mut self, rep: PeerId) {
        let list = &mut self.state.supersedes;
        if rep == self.owner || list.contains(&rep) {
            return;
        }
        list.push(rep);
        if list.len() > MAX_SUPERSEDED {
            list.remove(0);
        }
    }

    /// Cycles since a newer advert of the current candidate was last seen.
    pub fn silence(&self, now: u64) -> u64 {
        now.saturating_sub(self.last_fresh)
    }

    /// Representative and the election has had `convergence_cycles` to settle.
    pub fn is_settled_representative(&self, now: u64) -> bool {
        self.is_representative() && now.saturating_sub(self.election_started) >= self.config.convergence_cycles
    }

    fn reset_to_self(&mut self, now: u64) {
        self.state.candidate = self.owner;
        self.state.candidate_profile = Arc::clone(&self.profile);
        self.state.candidate_score = self.own_score;
        self.state.heartbeat = now;
        self.last_fresh = now;
    }

    /// Per-cycle housekeeping with the owner's freshly computed centrality.
    pub fn tick(&mut self, now: u64, own_score: f64) -> TickOutcome {
        self.own_score = own_score;
        let mut out = TickOutcome::default();
        let period = self.config.reelection_period;
        if period > 0 && now > 0 && now.is_multiple_of(period) {
            self.silenced = None;
            if self.is_representative() && self.published_epoch == Some(self.state.epoch) {
                self.state.supersedes.clear();
            }
            self.note_superseded(self.state.candidate);
            self.state.epoch += 1;
            self.election_started = now;
            self.reset_to_self(now);
            out.periodic_restart = true;
            return out;
        }
        if self.is_representative() {
            self.reset_to_self(now);
        } else if reelection_trigger(self.silence(now), self.config.repair_silence) {
            out.repaired = Some(self.state.candidate);
            self.silenced = Some(self.state.candidate);
            self.note_superseded(self.state.candidate);
            self.state.epoch += 1;
            self.election_started = now;
            self.reset_to_self(now);
        } else if beats(own_score, self.owner, self.state.candidate_score, self.state.candidate) {
            self.reset_to_self(now);
        }
        out
    }

    /// Folds a neighbour's advertised candidacy into ours. Returns true when
    /// the peer switched to a different candidate.
    pub fn observe(&mut self, now: u64, incoming: &ElectionState) -> bool {
        if incoming.epoch < self.state.epoch {
            return false;
        }
        self.state.epoch = incoming.epoch;
        if incoming.candidate == self.state.candidate {
            if incoming.heartbeat > self.state.heartbeat && incoming.candidate != self.owner {
                self.state.candidate_score = incoming.candidate_score;
                self.state.candidate_profile = Arc::clone(&incoming.candidate_profile);
                self.state.heartbeat = incoming.heartbeat;
                self.state.supersedes = incoming.supersedes.clone();
                self.last_fresh = now;
            }
            return false;
        }
        if incoming.candidate == self.owner {
            return false;
        }
        if now.saturating_sub(incoming.heartbeat) > self.config.repair_silence {
            return false;
        }
        if similarity(&self.profile, &incoming.candidate_profile) < self.config.tau_adopt {
            return false;
        }
        if !beats(incoming.candidate_score, incoming.candidate, self.state.candidate_score, self.state.candidate) {
            return false;
        }
        self.state.candidate = incoming.candidate;
        self.state.supersedes = incoming.supersedes.iter().copied().filter(|p| *p != self.owner).collect();
        self.state.candidate_profile = Arc::clone(&incoming.candidate_profile);
        self.state.candidate_score = incoming.candidate_score;
        self.state.heartbeat = incoming.heartbeat;
        self.last_fresh = now;
        true
    }
}
