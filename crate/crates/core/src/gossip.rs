//! Two-view gossip overlay.
//!
//! The random view runs a Cyclon-style shuffle: each cycle a peer ages its
//! entries, contacts the oldest one and swaps a handful of descriptors with
//! it. The similar view is ranked by similarity to the owner's profile; peers
//! exchange their best candidates and keep the top `similar_capacity`, so
//! peers with similar profiles drift into each other's similar views.
//!
//! Everything here is a pure state machine: callers move the returned
//! entries between peers.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ids::PeerId;
use crate::profile::{similarity, Profile};

pub type SharedProfile = Arc<Profile>;

#[derive(Debug, Clone, PartialEq)]
pub struct ViewEntry {
    pub peer: PeerId,
    pub profile: SharedProfile,
    /// Cycles since the descriptor was issued by its owner.
    pub age: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarEntry {
    pub entry: ViewEntry,
    /// Similarity to the view owner's profile.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GossipConfig {
    pub random_capacity: usize,
    pub similar_capacity: usize,
    /// Entries sent per shuffle, the sender's own descriptor included.
    pub shuffle_length: usize,
    /// Similar-view entries older than this are dropped. The rotation through
    /// the similar view refreshes live neighbours well before this bound.
    pub similar_max_age: u32,
}

impl Default for GossipConfig {
    fn default() -> Self {
        GossipConfig { random_capacity: 20, similar_capacity: 10, shuffle_length: 10, similar_max_age: 40 }
    }
}

impl GossipConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.random_capacity == 0 || self.similar_capacity == 0 {
            return Err("view capacities must be positive".into());
        }
        if self.shuffle_length == 0 || self.shuffle_length > self.random_capacity {
            return Err("shuffle_length must lie in 1..=random_capacity".into());
        }
        if (self.similar_max_age as usize) <= self.similar_capacity {
            return Err("similar_max_age must exceed similar_capacity".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct PendingShuffle {
    partner: PeerId,
    sent: Vec<PeerId>,
}

#[derive(Debug, Clone)]
pub struct GossipState {
    owner: PeerId,
    profile: SharedProfile,
    config: GossipConfig,
    random_view: Vec<ViewEntry>,
    similar_view: Vec<SimilarEntry>,
    pending_shuffle: Option<PendingShuffle>,
    pending_similar: Option<PeerId>,
    contacted: BTreeSet<PeerId>,
}

impl GossipState {
    pub fn new(owner: PeerId, profile: SharedProfile, config: GossipConfig) -> Self {
        GossipState {
            owner,
            profile,
            config,
            random_view: Vec::with_capacity(config.random_capacity),
            similar_view: Vec::with_capacity(config.similar_capacity),
            pending_shuffle: None,
            pending_similar: None,
            contacted: BTreeSet::new(),
        }
    }

    pub fn owner(&self) -> PeerId {
        self.owner
    }

    pub fn profile(&self) -> &SharedProfile {
        &self.profile
    }

    pub fn config(&self) -> &GossipConfig {
        &self.config
    }

    pub fn random_view(&self) -> &[ViewEntry] {
        &self.random_view
    }

    pub fn similar_view(&self) -> &[SimilarEntry] {
        &self.similar_view
    }

    pub fn self_entry(&self) -> ViewEntry {
        ViewEntry { peer: self.owner, profile: Arc::clone(&self.profile), age: 0 }
    }

    /// Bootstrap contacts for the random view.
    pub fn seed(&mut self, entries: impl IntoIterator<Item = ViewEntry>) {
        for e in entries {
            if e.peer == self.owner || self.random_view.iter().any(|v| v.peer == e.peer) {
                continue;
            }
            if self.random_view.len() < self.config.random_capacity {
                self.random_view.push(e);
            }
        }
    }

    /// Ages both views and returns partners that never answered last cycle's
    /// requests. Those partners are removed from both views.
    pub fn begin_cycle(&mut self) -> Vec<PeerId> {
        let mut silent = Vec::new();
        if let Some(p) = self.pending_shuffle.take() {
            silent.push(p.partner);
        }
        if let Some(p) = self.pending_similar.take() {
            if !silent.contains(&p) {
                silent.push(p);
            }
        }
        for &p in &silent {
            self.drop_peer(p);
        }
        for e in &mut self.random_view {
            e.age = e.age.saturating_add(1);
        }
        let max_age = self.config.similar_max_age;
        for s in &mut self.similar_view {
            s.entry.age = s.entry.age.saturating_add(1);
        }
        self.similar_view.retain(|s| s.entry.age <= max_age);
        silent
    }

    /// Removes `peer` from both views.
    pub fn drop_peer(&mut self, peer: PeerId) {
        self.random_view.retain(|e| e.peer != peer);
        self.similar_view.retain(|s| s.entry.peer != peer);
        self.contacted.remove(&peer);
    }

    /// Oldest random-view entry, ties broken by ascending id.
    pub fn oldest(&self) -> Option<PeerId> {
        self.random_view
            .iter()
            .max_by(|a, b| a.age.cmp(&b.age).then(b.peer.cmp(&a.peer)))
            .map(|e| e.peer)
    }

    /// Begins a shuffle with the oldest random-view entry. The partner leaves
    /// the view; the returned request carries our own fresh descriptor plus
    /// up to `shuffle_length - 1` random others.
    pub fn start_shuffle<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<(PeerId, Vec<ViewEntry>)> {
        let partner = self.oldest()?;
        self.random_view.retain(|e| e.peer != partner);
        let mut out = vec![self.self_entry()];
        out.extend(self.sample_random(self.config.shuffle_length - 1, None, rng));
        let sent = out[1..].iter().map(|e| e.peer).collect();
        self.pending_shuffle = Some(PendingShuffle { partner, sent });
        Some((partner, out))
    }

    /// Handles an incoming shuffle: replies with our own descriptor plus up
    /// to `shuffle_length - 1` random entries, then merges what was received,
    /// overwriting the entries just sent away first.
    pub fn answer_shuffle<R: Rng + ?Sized>(
        &mut self,
        from: PeerId,
        received: Vec<ViewEntry>,
        rng: &mut R,
    ) -> Vec<ViewEntry> {
        let mut reply = vec![self.self_entry()];
        reply.extend(self.sample_random(self.config.shuffle_length - 1, Some(from), rng));
        let sent: Vec<PeerId> = reply[1..].iter().map(|e| e.peer).collect();
        self.merge_random(received, &sent);
        reply
    }

    /// Handles the reply to our own shuffle.
    pub fn complete_shuffle(&mut self, from: PeerId, received: Vec<ViewEntry>) {
        let sent = match self.pending_shuffle.take() {
            Some(p) if p.partner == from => p.sent,
            other => {
                self.pending_shuffle = other;
                Vec::new()
            }
        };
        self.merge_random(received, &sent);
    }

    fn sample_random<R: Rng + ?Sized>(&self, n: usize, exclude: Option<PeerId>, rng: &mut R) -> Vec<ViewEntry> {
        let pool: Vec<&ViewEntry> = self.random_view.iter().filter(|e| Some(e.peer) != exclude).collect();
        pool.choose_multiple(rng, n.min(pool.len())).map(|&e| e.clone()).collect()
    }

    /// Cyclon merge: ignore self, refresh duplicates to the younger age, fill
    /// free slots, then overwrite sent-away entries, then the oldest.
    pub fn merge_random(&mut self, received: Vec<ViewEntry>, sent: &[PeerId]) {
        let mut replaceable: Vec<PeerId> = sent.to_vec();
        for e in received {
            if e.peer == self.owner {
                continue;
            }
            if let Some(v) = self.random_view.iter_mut().find(|v| v.peer == e.peer) {
                v.age = v.age.min(e.age);
                continue;
            }
            if self.random_view.len() < self.config.random_capacity {
                self.random_view.push(e);
                continue;
            }
            let victim = loop {
                match replaceable.pop() {
                    Some(id) => {
                        if let Some(i) = self.random_view.iter().position(|v| v.peer == id) {
                            break Some(i);
                        }
                    }
                    None => break None,
                }
            };
            let idx = victim.unwrap_or_else(|| {
                let (i, _) = self
                    .random_view
                    .iter()
                    .enumerate()
                    .max_by(|(_, a), (_, b)| a.age.cmp(&b.age).then(b.peer.cmp(&a.peer)))
                    .expect("full view is non-empty");
                i
            });
            self.random_view[idx] = e;
        }
    }

    /// Offers the random view's entries to the similar view.
    pub fn absorb_random_view(&mut self) {
        let cands: Vec<ViewEntry> = self.random_view.clone();
        self.merge_similar(cands);
    }

    /// Picks the best-ranked similar-view entry not yet contacted in the
    /// current rotation (the rotation restarts once every entry has been
    /// contacted). Falls back to the random view when the similar view is
    /// empty.
    pub fn choose_similar_partner(&mut self) -> Option<PeerId> {
        if self.similar_view.is_empty() {
            let best = self
                .random_view
                .iter()
                .map(|e| (e.peer, similarity(&self.profile, &e.profile)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))?;
            self.pending_similar = Some(best.0);
            return Some(best.0);
        }
        let pick = |c: &BTreeSet<PeerId>| {
            self.similar_view.iter().map(|s| s.entry.peer).find(|p| !c.contains(p))
        };
        let partner = match pick(&self.contacted) {
            Some(p) => p,
            None => {
                self.contacted.clear();
                pick(&self.contacted)?
            }
        };
        self.contacted.insert(partner);
        self.pending_similar = Some(partner);
        Some(partner)
    }

    /// Marks a similar-layer exchange with `from` as answered.
    pub fn similar_answered(&mut self, from: PeerId) {
        if self.pending_similar == Some(from) {
            self.pending_similar = None;
        }
    }

    /// Our descriptor followed by the union of both views ranked by
    /// similarity to `target`, at most `random_capacity` entries in total.
    pub fn similar_payload(&self, target: &Profile, exclude: PeerId) -> Vec<ViewEntry> {
        let mut seen = BTreeSet::new();
        let mut pool: Vec<(f64, &ViewEntry)> = Vec::new();
        for e in self.similar_view.iter().map(|s| &s.entry).chain(self.random_view.iter()) {
            if e.peer == exclude || !seen.insert(e.peer) {
                continue;
            }
            pool.push((similarity(target, &e.profile), e));
        }
        pool.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.peer.cmp(&b.1.peer)));
        let mut out = vec![self.self_entry()];
        out.extend(pool.into_iter().take(self.config.random_capacity - 1).map(|(_, e)| e.clone()));
        out
    }

    /// Keeps the best `similar_capacity` of the current view plus `received`,
    /// ordered by score descending then ascending id.
    pub fn merge_similar(&mut self, received: impl IntoIterator<Item = ViewEntry>) {
        let max_age = self.config.similar_max_age;
        let mut changed = false;
        for e in received {
            if e.peer == self.owner || e.age > max_age {
                continue;
            }
            if let Some(s) = self.similar_view.iter_mut().find(|s| s.entry.peer == e.peer) {
                if e.age < s.entry.age {
                    s.entry.age = e.age;
                }
                continue;
            }
            let score = similarity(&self.profile, &e.profile);
            if self.similar_view.len() >= self.config.similar_capacity {
                let worst = self.similar_view.last().expect("full view");
                if (score, std::cmp::Reverse(e.peer)) <= (worst.score, std::cmp::Reverse(worst.entry.peer)) {
                    continue;
                }
            }
            self.similar_view.push(SimilarEntry { entry: e, score });
            changed = true;
            self.similar_view
                .sort_by(|a, b| b.score.total_cmp(&a.score).then(a.entry.peer.cmp(&b.entry.peer)));
            self.similar_view.truncate(self.config.similar_capacity);
        }
        if changed {
            let live: BTreeSet<PeerId> = self.similar_view.iter().map(|s| s.entry.peer).collect();
            self.contacted.retain(|p| live.contains(p));
        }
    }

    pub fn similar_ids(&self) -> impl Iterator<Item = PeerId> + '_ {
        self.similar_view.iter().map(|s| s.entry.peer)
    }

    /// Every distinct neighbour across both views, ascending.
    pub fn neighbours(&self) -> BTreeSet<PeerId> {
        self.random_view.iter().map(|e| e.peer).chain(self.similar_ids()).collect()
    }

    /// Checks the structural view invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for e in &self.random_view {
            if e.peer == self.owner {
                return Err(format!("peer {} has itself in its random view", self.owner));
            }
            if !seen.insert(e.peer) {
                return Err(format!("peer {} has duplicate random entry {}", self.owner, e.peer));
            }
        }
        if self.random_view.len() > self.config.random_capacity {
            return Err(format!("peer {} random view over capacity", self.owner));
        }
        seen.clear();
        for s in &self.similar_view {
            if s.entry.peer == self.owner {
                return Err(format!("peer {} has itself in its similar view", self.owner));
            }
            if !seen.insert(s.entry.peer) {
                return Err(format!("peer {} has duplicate similar entry {}", self.owner, s.entry.peer));
            }
        }
        if self.similar_view.len() > self.config.similar_capacity {
            return Err(format!("peer {} similar view over capacity", self.owner));
        }
        for w in self.similar_view.windows(2) {
            let ordered = w[0].score > w[1].score
                || (w[0].score == w[1].score && w[0].entry.peer < w[1].entry.peer);
            if !ordered {
                return Err(format!("peer {} similar view out of order", self.owner));
            }
        }
        Ok(())
    }
}

/// Fraction of the oracle neighbour set present in `view`. The denominator
/// is the oracle size, which is `c_s` whenever the population allows it; an
/// empty oracle (single-peer network) counts as fully converged.
pub fn view_quality(view: impl IntoIterator<Item = PeerId>, oracle: &[(PeerId, f64)]) -> f64 {
    if oracle.is_empty() {
        return 1.0;
    }
    let want: BTreeSet<PeerId> = oracle.iter().map(|&(p, _)| p).collect();
    let hit = view.into_iter().filter(|p| want.contains(p)).count();
    hit as f64 / want.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn entry(id: u64, label: u32, age: u32) -> ViewEntry {
        ViewEntry { peer: PeerId(id), profile: Arc::new(Profile::singleton(label)), age }
    }

    fn state(id: u64, label: u32, cfg: GossipConfig) -> GossipState {
        GossipState::new(PeerId(id), Arc::new(Profile::singleton(label)), cfg)
    }

    #[test]
    fn two_peer_exchange() {
        let cfg = GossipConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = state(0, 1, cfg);
        let mut b = state(1, 1, cfg);
        a.seed([b.self_entry()]);
        b.seed([a.self_entry()]);
        a.begin_cycle();
        b.begin_cycle();
        let (to, req) = a.start_shuffle(&mut rng).unwrap();
        assert_eq!(to, PeerId(1));
        let rep = b.answer_shuffle(PeerId(0), req, &mut rng);
        a.complete_shuffle(PeerId(1), rep);
        assert_eq!(a.random_view().len(), 1);
        assert_eq!(a.random_view()[0].peer, PeerId(1));
        assert_eq!(a.random_view()[0].age, 0);
        assert_eq!(b.random_view()[0].peer, PeerId(0));
        assert_eq!(b.random_view()[0].age, 0);
        a.check_invariants().unwrap();
        b.check_invariants().unwrap();
    }

    #[test]
    fn oldest_is_shuffle_partner_and_eviction_candidate() {
        let cfg = GossipConfig { random_capacity: 3, shuffle_length: 2, ..Default::default() };
        let mut s = state(0, 1, cfg);
        s.seed([entry(1, 1, 0), entry(2, 1, 3), entry(3, 1, 1)]);
        assert_eq!(s.oldest(), Some(PeerId(2)));
        // Full view, nothing sent away: the new entry overwrites the oldest.
        s.merge_random(vec![entry(9, 1, 0)], &[]);
        let ids: BTreeSet<_> = s.random_view().iter().map(|e| e.peer).collect();
        assert_eq!(ids, [1, 3, 9].into_iter().map(PeerId).collect());
        // Sent-away entries go first.
        s.merge_random(vec![entry(10, 1, 0)], &[PeerId(1)]);
        let ids: BTreeSet<_> = s.random_view().iter().map(|e| e.peer).collect();
        assert_eq!(ids, [3, 9, 10].into_iter().map(PeerId).collect());
    }

    #[test]
    fn unanswered_partner_is_dropped() {
        let cfg = GossipConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = state(0, 1, cfg);
        s.seed([entry(1, 1, 0), entry(2, 1, 0)]);
        let (p, _) = s.start_shuffle(&mut rng).unwrap();
        let silent = s.begin_cycle();
        assert_eq!(silent, vec![p]);
        assert!(s.random_view().iter().all(|e| e.peer != p));
        s.check_invariants().unwrap();
    }

    #[test]
    fn similar_view_keeps_best() {
        let cfg = GossipConfig { similar_capacity: 2, ..Default::default() };
        let own = Profile::new(vec![(1, 1.0), (2, 1.0)]).unwrap();
        let mut s = GossipState::new(PeerId(0), Arc::new(own), cfg);
        let mk = |id: u64, w: Vec<(u32, f64)>| ViewEntry {
            peer: PeerId(id),
            profile: Arc::new(Profile::new(w).unwrap()),
            age: 0,
        };
        s.merge_similar([mk(1, vec![(1, 1.0), (3, 2.0)]), mk(2, vec![(1, 1.0), (2, 0.9)])]);
        let worst = s.similar_view()[1].score;
        assert!(worst < 0.5);
        // A much better candidate replaces the worst entry.
        s.merge_similar([mk(3, vec![(1, 1.0), (2, 1.0), (4, 0.3)])]);
        let ids: Vec<_> = s.similar_ids().collect();
        assert_eq!(ids, vec![PeerId(2), PeerId(3)]);
        // A worse one does not.
        s.merge_similar([mk(4, vec![(5, 1.0)])]);
        assert_eq!(s.similar_ids().collect::<Vec<_>>(), vec![PeerId(2), PeerId(3)]);
        s.check_invariants().unwrap();
    }

    #[test]
    fn fixed_point_when_view_is_optimal() {
        let cfg = GossipConfig { similar_capacity: 2, ..Default::default() };
        let mut s = state(0, 1, cfg);
        s.merge_similar([entry(1, 1, 0), entry(2, 1, 0)]);
        let before: Vec<_> = s.similar_ids().collect();
        s.merge_similar([entry(3, 2, 0), entry(4, 1, 0), entry(5, 3, 0)]);
        assert_eq!(s.similar_ids().collect::<Vec<_>>(), before);
    }

    #[test]
    fn partner_rotation() {
        let cfg = GossipConfig { similar_capacity: 3, ..Default::default() };
        let mut s = state(0, 1, cfg);
        s.merge_similar([entry(1, 1, 0), entry(2, 1, 0), entry(3, 1, 0)]);
        let picks: Vec<_> = (0..4).map(|_| s.choose_similar_partner().unwrap().0).collect();
        assert_eq!(picks, vec![1, 2, 3, 1]);
    }

    #[test]
    fn payload_is_bounded_and_leads_with_self() {
        let cfg = GossipConfig { random_capacity: 4, shuffle_length: 2, similar_capacity: 3, ..Default::default() };
        let mut s = state(0, 1, cfg);
        s.seed((1..=4).map(|i| entry(i, i as u32, 0)));
        s.merge_similar((5..=7).map(|i| entry(i, 1, 0)));
        let p = s.similar_payload(&Profile::singleton(1), PeerId(99));
        assert_eq!(p.len(), 4);
        assert_eq!(p[0].peer, PeerId(0));
        assert_eq!(p[1].peer, PeerId(1));
    }

    #[test]
    fn quality_definition() {
        let oracle: Vec<_> = (0..10).map(|i| (PeerId(i), 1.0)).collect();
        assert_eq!(view_quality((0..10).map(PeerId), &oracle), 1.0);
        assert_eq!(view_quality((10..20).map(PeerId), &oracle), 0.0);
        let mixed = (0..7).chain(20..23).map(PeerId);
        assert!((view_quality(mixed, &oracle) - 0.7).abs() < 1e-12);
        assert_eq!(view_quality(std::iter::empty(), &[]), 1.0);
    }
}
