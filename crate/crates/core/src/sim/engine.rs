use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::bus::Bus;
use super::config::{Bootstrap, Dataset, SimConfig};
use super::event::{EventKind, EventQueue};
use super::message::{Message, Payload, QueryFwd, RpcId};
use super::metrics::{FloodRecord, Footer, MetricsFrame, QueryRecord, RepairEvent, RunOutput};
use super::peer::{LookupOp, Peer, Purpose, Rpc};
use crate::dht::{
    probe_plan, rank_records, Contact, DescriptorRecord, DhtNetwork, DhtNode, Key, Lookup, LookupResult, NodeId,
    SignatureScheme, Update, ID_BITS,
};
use crate::election::{centrality_score, Election};
use crate::error::Result;
use crate::exec::Exec;
use crate::gossip::{view_quality, GossipState, SharedProfile, ViewEntry};
use crate::ids::PeerId;
use crate::profile::{brute_force_top_k, expand_profile, perturb_profile, similarity, Profile};
use crate::query::{
    efficiency_report, global_flood, rank_matches, recall_at_k, select_forwards, Descriptor, ForwardCandidate,
    Match, Query, QueryCost, QueryId, QueryResult, ResultFlags,
};

const STREAM_SCHEDULE: u64 = 1;
const STREAM_NETWORK: u64 = 2;
const STREAM_PEER_BASE: u64 = 1 << 32;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Entry-point state of one query.
#[derive(Debug, Clone)]
struct QueryOp {
    query: Arc<Query>,
    entry: PeerId,
    sampled_from: PeerId,
    cycle: u64,
    oracle: Vec<(PeerId, f64)>,
    radius: u32,
    pending_sets: usize,
    found: Vec<Arc<DescriptorRecord>>,
    descriptors: Vec<Descriptor>,
    hits: Vec<Match>,
    acks: BTreeSet<PeerId>,
    sent_to_reps: BTreeSet<PeerId>,
    cost: QueryCost,
    contacted: BTreeSet<PeerId>,
    incomplete_lookups: u32,
    flood: Option<QueryResult>,
}

type NeighbourOracles = BTreeMap<PeerId, Vec<(PeerId, f64)>>;

/// Discrete-event simulation of the full two-layer system.
pub struct Simulation {
    cfg: SimConfig,
    dataset: Dataset,
    scheme: SignatureScheme,
    exec: Exec,
    peers: BTreeMap<PeerId, Peer>,
    next_peer: u64,
    queue: EventQueue,
    bus: Bus,
    sched_rng: ChaCha8Rng,
    net_rng: ChaCha8Rng,
    time: u64,
    cycle: u64,
    queries: BTreeMap<QueryId, QueryOp>,
    next_query: QueryId,
    frames: Vec<MetricsFrame>,
    repairs: Vec<RepairEvent>,
    violations: u64,
    membership: u64,
    /// Each live peer's top-k neighbours, tagged with the membership version.
    oracle_cache: Option<(u64, NeighbourOracles)>,
    communities_cache: Option<(u64, usize)>,
}

impl Simulation {
    /// Validates `cfg`, generates its dataset and bootstraps the population.
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let dataset = Dataset::generate(&cfg.dataset, cfg.n_peers, cfg.seed)?;
        Self::with_dataset(cfg, dataset)
    }

    /// Like [`Simulation::new`] but with a prepared dataset; `n_peers` is
    /// taken from the dataset.
    pub fn with_dataset(mut cfg: SimConfig, dataset: Dataset) -> Result<Self> {
        cfg.n_peers = dataset.profiles.len();
        cfg.validate()?;
        let scheme = cfg.dht.scheme(cfg.seed);
        let mut sim = Simulation {
            scheme,
            exec: Exec::default(),
            peers: BTreeMap::new(),
            next_peer: 0,
            queue: EventQueue::default(),
            bus: Bus::default(),
            sched_rng: stream(cfg.seed, STREAM_SCHEDULE),
            net_rng: stream(cfg.seed, STREAM_NETWORK),
            time: 0,
            cycle: 0,
            queries: BTreeMap::new(),
            next_query: 0,
            frames: Vec::new(),
            repairs: Vec::new(),
            violations: 0,
            membership: 0,
            oracle_cache: None,
            communities_cache: None,
            dataset,
            cfg,
        };
        sim.bootstrap();
        sim.schedule_workload();
        Ok(sim)
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    fn bootstrap(&mut self) {
        let n = self.dataset.profiles.len();
        let h = self.cfg.bootstrap_contacts().min(n.saturating_sub(1));
        let profiles: Vec<SharedProfile> = self.dataset.profiles.iter().cloned().map(Arc::new).collect();

        // DHT routing tables are built by sequential joins before the clock
        // starts; each newcomer knows one uniformly chosen earlier peer.
        let mut net = DhtNetwork::new(self.cfg.dht.bucket_size, self.cfg.dht.alpha, self.scheme);
        for i in 0..n {
            let boot: Vec<PeerId> =
                if i == 0 { vec![] } else { vec![PeerId(self.sched_rng.random_range(0..i as u64))] };
            net.join(PeerId(i as u64), &boot, &mut self.sched_rng);
        }
        let mut nodes = net.into_nodes();

        for i in 0..n {
            let id = PeerId(i as u64);
            let contacts: Vec<usize> = match self.cfg.bootstrap {
                Bootstrap::Random => {
                    let mut picks: Vec<usize> = index::sample(&mut self.sched_rng, n - 1, h).into_vec();
                    for p in &mut picks {
                        if *p >= i {
                            *p += 1;
                        }
                    }
                    picks
                }
                Bootstrap::Ring => (1..=h).map(|d| (i + d) % n).collect(),
            };
            let mut gossip = GossipState::new(id, Arc::clone(&profiles[i]), self.cfg.gossip);
            gossip.seed(contacts.iter().map(|&j| ViewEntry {
                peer: PeerId(j as u64),
                profile: Arc::clone(&profiles[j]),
                age: 0,
            }));
            let election = Election::new(id, Arc::clone(&profiles[i]), self.cfg.election, 0);
            let dht = nodes.remove(&id).expect("every initial peer joined the DHT");
            let rng = stream(self.cfg.seed, STREAM_PEER_BASE + i as u64);
            self.peers.insert(id, Peer::new(id, Arc::clone(&profiles[i]), gossip, election, dht, 0, rng));
        }
        self.next_peer = n as u64;
    }

    fn schedule_workload(&mut self) {
        let w = self.cfg.workload;
        let span = self.cfg.cycles.saturating_sub(w.warmup).max(1);
        for i in 0..w.n_queries {
            let cycle = w.warmup + (i as u64 * span) / w.n_queries as u64;
            let time = cycle * self.cfg.cycle_length + self.cfg.cycle_length / 2;
            self.queue.schedule(time, EventKind::QueryInjection(i));
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn scheme(&self) -> &SignatureScheme {
        &self.scheme
    }

    /// Cycles executed so far.
    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn peers(&self) -> impl Iterator<Item = &Peer> {
        self.peers.values()
    }

    pub fn peer(&self, id: PeerId) -> Option<&Peer> {
        self.peers.get(&id)
    }

    pub fn live_ids(&self) -> Vec<PeerId> {
        self.peers.keys().copied().collect()
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn frames(&self) -> &[MetricsFrame] {
        &self.frames
    }

    pub fn repairs(&self) -> &[RepairEvent] {
        &self.repairs
    }

    pub fn invariant_violations(&self) -> u64 {
        self.violations
    }

    pub fn representatives(&self) -> Vec<PeerId> {
        self.peers.values().filter(|p| p.election.is_representative()).map(|p| p.id).collect()
    }

    /// Peers holding at least one record of `rep`.
    pub fn holders_of(&self, rep: PeerId) -> Vec<PeerId> {
        self.peers.values().filter(|p| p.dht.store.holds(rep)).map(|p| p.id).collect()
    }

    /// Representatives whose held records declare that they supersede `old`.
    pub fn superseders_of(&self, old: PeerId) -> BTreeSet<PeerId> {
        self.peers
            .values()
            .flat_map(|p| p.dht.store.records())
            .filter(|r| r.supersedes.contains(&old))
            .map(|r| r.representative)
            .collect()
    }

    /// Current cycle as seen by event handlers.
    fn now(&self) -> u64 {
        self.time / self.cfg.cycle_length
    }

    /// Runs `n` more cycles.
    pub fn run_cycles(&mut self, n: u64) {
        for _ in 0..n {
            let c = self.cycle;
            let start = c * self.cfg.cycle_length;
            self.queue.schedule(start, EventKind::Churn(c));
            self.queue.schedule(start, EventKind::CycleTick(c));
            let end = start + self.cfg.cycle_length;
            while self.queue.peek_time().is_some_and(|t| t < end) {
                let ev = self.queue.pop().expect("peeked");
                self.time = ev.time;
                self.dispatch(ev.kind);
            }
            self.cycle += 1;
        }
    }

    /// Drains in-flight traffic, emits the final frame and query records.
    pub fn finish(mut self) -> RunOutput {
        while let Some(ev) = self.queue.pop() {
            self.time = self.time.max(ev.time);
            match ev.kind {
                EventKind::Deliver(_) | EventKind::Timeout { .. } => self.dispatch(ev.kind),
                EventKind::CycleTick(_) | EventKind::Churn(_) | EventKind::QueryInjection(_) => {}
            }
        }
        let frame = self.frame(self.cycle);
        self.frames.push(frame);
        let queries: Vec<QueryRecord> = std::mem::take(&mut self.queries)
            .into_values()
            .map(|op| self.finalize(op))
            .collect();
        let totals = self.bus.totals();
        let footer = Footer {
            cycles: self.cycle,
            live_peers: self.peers.len(),
            representatives: self.representatives(),
            repairs: self.repairs.len(),
            messages: self.bus.kinds.clone(),
            totals,
            conservation_ok: self.bus.audit().is_ok(),
        };
        RunOutput { config: self.cfg, frames: self.frames, queries, repairs: self.repairs, bus: self.bus, footer }
    }

    /// Convenience: construct, run the configured cycles, finish.
    pub fn run(cfg: SimConfig) -> Result<RunOutput> {
        let cycles = cfg.cycles;
        let mut sim = Simulation::new(cfg)?;
        sim.run_cycles(cycles);
        Ok(sim.finish())
    }

    fn dispatch(&mut self, kind: EventKind) {
        match kind {
            EventKind::Deliver(msg) => {
                let k = msg.payload.kind();
                if self.peers.contains_key(&msg.to) {
                    self.bus.delivered(k);
                    self.deliver(msg);
                } else {
                    self.bus.dropped(k);
                }
            }
            EventKind::Timeout { peer, rpc } => {
                self.with_peer(peer, |s, p| s.on_timeout(p, rpc));
            }
            EventKind::Churn(_) => self.churn(),
            EventKind::CycleTick(c) => self.tick(c),
            EventKind::QueryInjection(_) => self.inject_workload_query(),
        }
    }

    fn with_peer<R>(&mut self, id: PeerId, f: impl FnOnce(&mut Self, &mut Peer) -> R) -> Option<R> {
        let mut p = self.peers.remove(&id)?;
        let r = f(self, &mut p);
        self.peers.insert(id, p);
        Some(r)
    }

    fn send(&mut self, from: PeerId, to: PeerId, query: Option<QueryId>, payload: Payload) {
        self.bus.sent(payload.kind());
        if let Some(op) = query.and_then(|q| self.queries.get_mut(&q)) {
            op.cost.messages += 1;
            if to != op.entry {
                op.contacted.insert(to);
            }
        }
        let (lo, hi) = self.cfg.message_delay;
        let delay = self.net_rng.random_range(lo..=hi);
        self.queue.schedule(self.time + delay, EventKind::Deliver(Message { from, to, query, payload }));
    }

    fn schedule_timeout(&mut self, peer: PeerId, rpc: RpcId) {
        self.queue.schedule(self.time + self.cfg.rpc_timeout(), EventKind::Timeout { peer, rpc });
    }

    // ---- churn -------------------------------------------------------------

    fn churn(&mut self) {
        let c = self.cfg.churn;
        if c.is_static() {
            return;
        }
        let leaves = poisson(&mut self.sched_rng, c.leave_rate);
        for _ in 0..leaves {
            if self.peers.len() <= 1 {
                break;
            }
            let ids = self.live_ids();
            let victim = ids[self.sched_rng.random_range(0..ids.len())];
            self.remove_peer(victim);
        }
        let joins = poisson(&mut self.sched_rng, c.join_rate);
        for _ in 0..joins {
            let profile = self.fresh_profile();
            self.add_peer(profile);
        }
    }

    fn fresh_profile(&mut self) -> Profile {
        let d = &self.dataset;
        let count = d.labels_per_peer.min(d.zipf.len());
        let labels = d.zipf.sample_distinct(count, &[], &mut self.sched_rng).expect("count bounded by leaves");
        let weighted: Vec<_> = labels.into_iter().map(|l| (l, 1.0)).collect();
        expand_profile(&weighted, &d.taxonomy, d.decay).expect("leaves come from the taxonomy")
    }

    /// Removes a peer silently; messages addressed to it are dropped.
    pub fn remove_peer(&mut self, id: PeerId) -> bool {
        let gone = self.peers.remove(&id).is_some();
        if gone {
            self.membership += 1;
        }
        gone
    }

    /// Adds a peer with ⌈c_r/2⌉ random bootstrap contacts and starts its
    /// DHT self-lookup.
    pub fn add_peer(&mut self, profile: Profile) -> PeerId {
        let id = PeerId(self.next_peer);
        self.next_peer += 1;
        self.membership += 1;
        let profile = Arc::new(profile);
        let ids = self.live_ids();
        let h = self.cfg.bootstrap_contacts().min(ids.len());
        let picks: Vec<PeerId> =
            index::sample(&mut self.sched_rng, ids.len(), h).into_iter().map(|i| ids[i]).collect();
        let now = self.now();
        let mut gossip = GossipState::new(id, Arc::clone(&profile), self.cfg.gossip);
        gossip.seed(picks.iter().map(|p| ViewEntry {
            peer: *p,
            profile: Arc::clone(&self.peers[p].profile),
            age: 0,
        }));
        let mut dht = DhtNode::new(id, self.cfg.dht.bucket_size);
        for p in &picks {
            dht.routing.update(Contact::for_peer(*p));
        }
        let election = Election::new(id, Arc::clone(&profile), self.cfg.election, now);
        let rng = stream(self.cfg.seed, STREAM_PEER_BASE + id.0);
        let mut peer = Peer::new(id, profile, gossip, election, dht, now, rng);
        let own = peer.dht.id();
        self.start_lookup(&mut peer, own, Arc::from(Vec::new()), Purpose::Join, None);
        self.peers.insert(id, peer);
        id
    }

    // ---- cycle tick --------------------------------------------------------

    fn tick(&mut self, c: u64) {
        if c.is_multiple_of(self.cfg.metrics_interval) {
            let f = self.frame(c);
            self.frames.push(f);
        }
        let mut order = self.live_ids();
        order.shuffle(&mut self.sched_rng);
        for id in order {
            self.with_peer(id, |s, p| s.step_peer(p, c));
        }
    }

    fn step_peer(&mut self, p: &mut Peer, now: u64) {
        p.gossip.begin_cycle();
        p.gossip.absorb_random_view();
        if let Some((partner, entries)) = p.gossip.start_shuffle(&mut p.rng) {
            self.send(p.id, partner, None, Payload::ShuffleReq(entries));
        }

        let score = centrality_score(p.gossip.similar_view());
        let outcome = p.election.tick(now, score);
        if let Some(silenced) = outcome.repaired {
            self.repairs.push(RepairEvent { cycle: now, peer: p.id, silenced });
        }

        if let Some(partner) = p.gossip.choose_similar_partner() {
            if let Some(target) = p.known_profile(partner) {
                let entries = p.gossip.similar_payload(&target, partner);
                let election = p.election.state().clone();
                self.send(p.id, partner, None, Payload::SimReq { entries, election });
            }
        }

        self.maybe_publish(p, now);
        p.dht.store.expire(now, self.cfg.dht.record_ttl);
        p.seen_queries.retain(|_, exp| *exp >= now);
        let nbrs = p.gossip.neighbours();
        p.communities.retain(|k, _| nbrs.contains(k));
        if p.gossip.check_invariants().is_err() {
            self.violations += 1;
        }
    }

    fn maybe_publish(&mut self, p: &mut Peer, now: u64) {
        if !p.election.is_settled_representative(now) {
            return;
        }
        let epoch = p.election.epoch();
        let due = match p.published {
            None => true,
            Some((e, at)) => e != epoch || now.saturating_sub(at) >= self.cfg.dht.republish_interval,
        };
        if !due {
            return;
        }
        let mut rec = DescriptorRecord::new(p.id, Arc::clone(&p.profile), &self.scheme, epoch);
        rec.supersedes = p.election.superseded().to_vec();
        let rec = Arc::new(rec);
        for key in rec.keys(&self.scheme) {
            let purpose = Purpose::Publish { key, record: Arc::clone(&rec) };
            self.start_lookup(p, key, Arc::from(Vec::new()), purpose, None);
        }
        p.published = Some((epoch, now));
        p.election.mark_published();
    }

    // ---- message handling --------------------------------------------------

    fn deliver(&mut self, msg: Message) {
        let Message { from, to, query, payload } = msg;
        self.with_peer(to, |s, p| s.handle(p, from, query, payload));
    }

    fn handle(&mut self, p: &mut Peer, from: PeerId, query: Option<QueryId>, payload: Payload) {
        let now = self.now();
        match payload {
            Payload::ShuffleReq(entries) => {
                let reply = p.gossip.answer_shuffle(from, entries, &mut p.rng);
                self.send(p.id, from, None, Payload::ShuffleRep(reply));
            }
            Payload::ShuffleRep(entries) => p.gossip.complete_shuffle(from, entries),
            Payload::SimReq { entries, election } => {
                p.election.observe(now, &election);
                p.communities.insert(from, election.candidate);
                let target = entries
                    .iter()
                    .find(|e| e.peer == from)
                    .map(|e| Arc::clone(&e.profile))
                    .or_else(|| p.known_profile(from));
                if let Some(target) = target {
                    let reply = p.gossip.similar_payload(&target, from);
                    let state = p.election.state().clone();
                    self.send(p.id, from, None, Payload::SimRep { entries: reply, election: state });
                }
                p.gossip.merge_similar(entries);
            }
            Payload::SimRep { entries, election } => {
                p.gossip.similar_answered(from);
                p.election.observe(now, &election);
                p.communities.insert(from, election.candidate);
                p.gossip.merge_similar(entries);
            }
            Payload::Ping { rpc } => {
                self.learn(p, Contact::for_peer(from));
                self.send(p.id, from, None, Payload::Pong { rpc });
            }
            Payload::Pong { rpc } => {
                if let Some(Rpc::Ping { lrs, .. }) = p.rpcs.remove(&rpc) {
                    p.dht.routing.touch(lrs.peer);
                    p.pinging.remove(&lrs.peer);
                }
            }
            Payload::FindNode { rpc, target } => {
                self.learn(p, Contact::for_peer(from));
                let contacts = p.dht.find_node(&target);
                self.send(p.id, from, query, Payload::FindNodeRep { rpc, contacts });
            }
            Payload::FindValue { rpc, target, keys } => {
                self.learn(p, Contact::for_peer(from));
                let (contacts, records) = p.dht.find_value(&target, &keys);
                self.send(p.id, from, query, Payload::FindValueRep { rpc, contacts, records });
            }
            Payload::FindNodeRep { rpc, contacts } => self.on_probe_reply(p, from, rpc, contacts, Vec::new()),
            Payload::FindValueRep { rpc, contacts, records } => self.on_probe_reply(p, from, rpc, contacts, records),
            Payload::Store { key, record } => {
                self.learn(p, Contact::for_peer(from));
                p.dht.store(key, record, now);
            }
            Payload::QueryFwd(fwd) => self.on_query_fwd(p, fwd),
            Payload::QueryHit { query, profile, score, ack } => {
                if let Some(op) = self.queries.get_mut(&query) {
                    if ack {
                        op.acks.insert(from);
                    }
                    op.hits.push(Match { peer: from, profile, score });
                }
            }
        }
    }

    /// Routing-table update on contact; a full bucket pings its least
    /// recently seen entry and evicts it if the ping times out.
    fn learn(&mut self, p: &mut Peer, c: Contact) {
        if let Update::Full { lrs } = p.dht.routing.update(c) {
            if p.pinging.insert(lrs.peer) {
                let rpc = p.new_rpc();
                p.rpcs.insert(rpc, Rpc::Ping { lrs, candidate: c });
                self.send(p.id, lrs.peer, None, Payload::Ping { rpc });
                self.schedule_timeout(p.id, rpc);
            }
        }
    }

    fn on_timeout(&mut self, p: &mut Peer, rpc: RpcId) {
        match p.rpcs.remove(&rpc) {
            Some(Rpc::Probe { op, to }) => {
                p.dht.routing.remove(to);
                if let Some(o) = p.lookups.get_mut(&op) {
                    o.lookup.on_failure(to);
                }
                self.advance(p, op);
            }
            Some(Rpc::Ping { lrs, candidate }) => {
                p.pinging.remove(&lrs.peer);
                p.dht.routing.replace(lrs.peer, candidate);
            }
            None => {}
        }
    }

    fn on_probe_reply(
        &mut self,
        p: &mut Peer,
        from: PeerId,
        rpc: RpcId,
        contacts: Vec<Contact>,
        records: Vec<Arc<DescriptorRecord>>,
    ) {
        self.learn(p, Contact::for_peer(from));
        let Some(Rpc::Probe { op, to }) = p.rpcs.get(&rpc).cloned() else { return };
        if to != from {
            return;
        }
        p.rpcs.remove(&rpc);
        if let Some(o) = p.lookups.get_mut(&op) {
            o.lookup.on_reply(from, contacts);
            o.found.extend(records);
        }
        self.advance(p, op);
    }

    // ---- DHT lookups -------------------------------------------------------

    fn start_lookup(&mut self, p: &mut Peer, target: NodeId, keys: Arc<[Key]>, purpose: Purpose, query: Option<QueryId>) {
        let seeds = p.dht.routing.closest(&target, self.cfg.dht.bucket_size);
        let lookup = Lookup::new(target, self.cfg.dht.bucket_size, self.cfg.dht.alpha, p.dht.contact(), seeds);
        let found = if keys.is_empty() { Vec::new() } else { p.dht.store.get(&keys) };
        let op = p.new_op();
        p.lookups.insert(op, LookupOp { lookup, purpose, keys, query, found });
        self.advance(p, op);
    }

    fn advance(&mut self, p: &mut Peer, op: u64) {
        let Some(o) = p.lookups.get_mut(&op) else { return };
        let probes = o.lookup.next_round();
        if probes.is_empty() {
            if o.lookup.is_done() {
                let o = p.lookups.remove(&op).expect("present");
                self.complete_lookup(p, o);
            }
            return;
        }
        let target = o.lookup.target();
        let keys = Arc::clone(&o.keys);
        let query = o.query;
        for c in probes {
            let rpc = p.new_rpc();
            p.rpcs.insert(rpc, Rpc::Probe { op, to: c.peer });
            let payload = if keys.is_empty() {
                Payload::FindNode { rpc, target }
            } else {
                Payload::FindValue { rpc, target, keys: Arc::clone(&keys) }
            };
            self.send(p.id, c.peer, query, payload);
            self.schedule_timeout(p.id, rpc);
        }
    }

    fn complete_lookup(&mut self, p: &mut Peer, o: LookupOp) {
        let result = o.lookup.result();
        match o.purpose {
            Purpose::Join => {
                if let Some(j) = p.dht.routing.closest_bucket() {
                    let own = p.dht.id();
                    for b in (j + 1)..ID_BITS {
                        let t = own.random_in_bucket(b, &mut p.rng);
                        self.start_lookup(p, t, Arc::from(Vec::new()), Purpose::Refresh, None);
                    }
                }
            }
            Purpose::Refresh => {}
            Purpose::Publish { key, record } => {
                let now = self.now();
                for c in &result.closest {
                    if c.peer == p.id {
                        p.dht.store(key, Arc::clone(&record), now);
                    } else {
                        self.send(p.id, c.peer, None, Payload::Store { key, record: Arc::clone(&record) });
                    }
                }
            }
            Purpose::Search { query } => self.search_set_done(p, query, &result, o.found),
        }
    }

    // ---- queries -----------------------------------------------------------

    fn inject_workload_query(&mut self) {
        if self.peers.is_empty() {
            return;
        }
        let ids = self.live_ids();
        let entry = ids[self.sched_rng.random_range(0..ids.len())];
        let source = ids[self.sched_rng.random_range(0..ids.len())];
        let d = &self.dataset;
        let base = &self.peers[&source].profile;
        let sample = perturb_profile(base, &d.taxonomy, &d.zipf, d.decay, &mut self.sched_rng)
            .unwrap_or_else(|_| Profile::clone(base));
        self.inject_query(entry, source, sample);
    }

    /// Starts resolving `sample` at `entry` right now. `source` is recorded
    /// as the peer the sample was derived from.
    pub fn inject_query(&mut self, entry: PeerId, source: PeerId, sample: Profile) -> Option<QueryId> {
        if !self.peers.contains_key(&entry) {
            return None;
        }
        let id = self.next_query;
        self.next_query += 1;
        let sample = Arc::new(sample);
        let query = Arc::new(Query::new(id, Arc::clone(&sample), &self.cfg.query).expect("config validated"));
        let oracle = brute_force_top_k(&sample, self.peers.values().map(|p| (p.id, &*p.profile)), query.k);
        let flood = self.cfg.workload.flood_baseline.then(|| {
            let graph: BTreeMap<PeerId, (SharedProfile, Vec<PeerId>)> = self
                .peers
                .values()
                .map(|p| (p.id, (Arc::clone(&p.profile), p.gossip.neighbours().into_iter().collect())))
                .collect();
            global_flood(entry, &sample, query.theta, query.k, &graph)
        });
        let op = QueryOp {
            query,
            entry,
            sampled_from: source,
            cycle: self.now(),
            oracle,
            radius: self.cfg.dht.probe_radius,
            pending_sets: 0,
            found: Vec::new(),
            descriptors: Vec::new(),
            hits: Vec::new(),
            acks: BTreeSet::new(),
            sent_to_reps: BTreeSet::new(),
            cost: QueryCost::default(),
            contacted: BTreeSet::new(),
            incomplete_lookups: 0,
            flood,
        };
        self.queries.insert(id, op);
        self.with_peer(entry, |s, p| s.start_search(p, id));
        Some(id)
    }

    fn start_search(&mut self, p: &mut Peer, query: QueryId) {
        let Some(op) = self.queries.get_mut(&query) else { return };
        let plan = probe_plan(&self.scheme, &op.query.sample, op.radius);
        op.pending_sets = plan.len();
        for set in plan {
            self.start_lookup(p, set.target, Arc::from(set.keys), Purpose::Search { query }, Some(query));
        }
    }

    fn search_set_done(&mut self, p: &mut Peer, query: QueryId, result: &LookupResult, found: Vec<Arc<DescriptorRecord>>) {
        let max_radius = self.cfg.query.max_probe_radius;
        let Some(op) = self.queries.get_mut(&query) else { return };
        op.pending_sets -= 1;
        op.found.extend(found);
        op.cost.dht_hops += result.rounds as u64;
        if !result.complete {
            op.incomplete_lookups += 1;
        }
        if op.pending_sets > 0 {
            return;
        }
        let ranked = rank_records(&op.query.sample, op.found.iter().cloned(), usize::MAX);
        op.cost.comparisons += ranked.len() as u64;
        if ranked.len() < op.query.m && op.radius < max_radius {
            op.radius += 1;
            self.start_search(p, query);
            return;
        }
        op.descriptors = ranked
            .iter()
            .take(op.query.k.max(op.query.m))
            .map(|(r, s)| Descriptor { representative: r.representative, descriptor: Arc::clone(&r.descriptor), score: *s })
            .collect();
        let reps: Vec<PeerId> = ranked.iter().take(op.query.m).map(|(r, _)| r.representative).collect();
        let q = Arc::clone(&op.query);
        op.sent_to_reps.extend(reps.iter().copied());
        for rep in reps {
            let fwd = QueryFwd { query: Arc::clone(&q), origin: p.id, ttl: q.ttl, first_hop: true, visited: vec![rep] };
            if rep == p.id {
                self.on_query_fwd(p, fwd);
            } else {
                self.send(p.id, rep, Some(q.id), Payload::QueryFwd(fwd));
            }
        }
    }

    fn on_query_fwd(&mut self, p: &mut Peer, fwd: QueryFwd) {
        let q = &fwd.query;
        if p.seen_queries.contains_key(&q.id) {
            return;
        }
        let now = self.now();
        p.seen_queries.insert(q.id, now + 2 * (q.ttl.max(1) as u64));
        let score = similarity(&q.sample, &p.profile);
        let mut comparisons = 1;
        if fwd.first_hop || score >= q.theta {
            if fwd.origin == p.id {
                if let Some(op) = self.queries.get_mut(&q.id) {
                    if fwd.first_hop {
                        op.acks.insert(p.id);
                    }
                    op.hits.push(Match { peer: p.id, profile: Arc::clone(&p.profile), score });
                }
            } else {
                let hit = Payload::QueryHit { query: q.id, profile: Arc::clone(&p.profile), score, ack: fwd.first_hop };
                self.send(p.id, fwd.origin, Some(q.id), hit);
            }
        }
        if fwd.ttl > 0 {
            let candidates: Vec<ForwardCandidate<'_>> = p
                .gossip
                .similar_view()
                .iter()
                .map(|s| ForwardCandidate {
                    peer: s.entry.peer,
                    profile: &s.entry.profile,
                    community: p.communities.get(&s.entry.peer).copied(),
                })
                .collect();
            let mut visited: BTreeSet<PeerId> = fwd.visited.iter().copied().collect();
            visited.insert(p.id);
            let (picks, spent) = select_forwards(
                &candidates,
                p.election.community(),
                &q.sample,
                &visited,
                q.fanout,
                self.cfg.query.forward,
            );
            comparisons += spent;
            visited.extend(picks.iter().copied());
            let visited: Vec<PeerId> = visited.into_iter().collect();
            for t in picks {
                let next = QueryFwd {
                    query: Arc::clone(q),
                    origin: fwd.origin,
                    ttl: fwd.ttl - 1,
                    first_hop: false,
                    visited: visited.clone(),
                };
                self.send(p.id, t, Some(q.id), Payload::QueryFwd(next));
            }
        }
        if let Some(op) = self.queries.get_mut(&q.id) {
            op.cost.comparisons += comparisons;
        }
    }

    fn finalize(&self, op: QueryOp) -> QueryRecord {
        let q = &op.query;
        let matches = rank_matches(op.hits, q.theta, q.k);
        let result = QueryResult {
            matches,
            community_descriptors: op.descriptors,
            cost: QueryCost { peers_contacted: op.contacted.len() as u64, ..op.cost },
            flags: ResultFlags {
                unreachable_representatives: op.sent_to_reps.difference(&op.acks).count() as u32,
                probe_radius: op.radius,
                incomplete_lookups: op.incomplete_lookups,
            },
        };
        let scored = result.scored();
        let recall = recall_at_k(&scored, &op.oracle);
        let (flood, efficiency) = match &op.flood {
            Some(f) => (
                Some(FloodRecord { cost: f.cost, recall: recall_at_k(&f.scored(), &op.oracle), matches: f.scored() }),
                Some(efficiency_report(&result, f, &op.oracle)),
            ),
            None => (None, None),
        };
        QueryRecord {
            query_id: q.id,
            cycle: op.cycle,
            entry: op.entry,
            sampled_from: op.sampled_from,
            k: q.k,
            theta: q.theta,
            oracle: op.oracle,
            matches: scored,
            descriptors: result.community_descriptors.iter().map(|d| (d.representative, d.score)).collect(),
            recall,
            cost: result.cost,
            flags: result.flags,
            flood,
            efficiency,
        }
    }

    // ---- metrics -----------------------------------------------------------

    fn refresh_neighbour_oracles(&mut self) {
        let fresh = self.oracle_cache.as_ref().is_some_and(|(v, _)| *v == self.membership);
        if !fresh {
            let pop: Vec<(PeerId, SharedProfile)> =
                self.peers.values().map(|p| (p.id, Arc::clone(&p.profile))).collect();
            let k = self.cfg.gossip.similar_capacity;
            let tops = self.exec.map(&pop, |(id, prof)| {
                brute_force_top_k(prof, pop.iter().filter(|(o, _)| o != id).map(|(o, pr)| (*o, &**pr)), k)
            });
            let map = pop.iter().map(|(id, _)| *id).zip(tops).collect();
            self.oracle_cache = Some((self.membership, map));
        }
    }

    fn oracle_communities(&mut self) -> usize {
        if let Some((v, n)) = self.communities_cache {
            if v == self.membership {
                return n;
            }
        }
        let pop: Vec<SharedProfile> = self.peers.values().map(|p| Arc::clone(&p.profile)).collect();
        let n = community_count(&pop, self.cfg.election.tau_adopt, self.exec);
        self.communities_cache = Some((self.membership, n));
        n
    }

    fn frame(&mut self, cycle: u64) -> MetricsFrame {
        let mean_view_quality = {
            self.refresh_neighbour_oracles();
            let oracles = &self.oracle_cache.as_ref().expect("just refreshed").1;
            let total: f64 = oracles
                .iter()
                .map(|(id, o)| match self.peers.get(id) {
                    Some(p) => view_quality(p.gossip.similar_ids(), o),
                    None => 0.0,
                })
                .sum();
            if oracles.is_empty() { 1.0 } else { total / oracles.len() as f64 }
        };
        let n_communities_oracle = self.oracle_communities();
        let now = cycle;
        let mut indexed = BTreeSet::new();
        let mut stored = 0;
        for p in self.peers.values() {
            indexed.extend(p.dht.store.representatives());
            stored += p.dht.store.len();
        }
        MetricsFrame {
            cycle,
            live_peers: self.peers.len(),
            mean_view_quality,
            n_representatives: self.peers.values().filter(|p| p.election.is_representative()).count(),
            n_settled_representatives: self
                .peers
                .values()
                .filter(|p| p.election.is_settled_representative(now))
                .count(),
            n_communities_oracle,
            indexed_representatives: indexed.len(),
            stored_records: stored,
            invariant_violations: self.violations,
            messages: self.bus.kinds.clone(),
        }
    }
}

fn poisson(rng: &mut ChaCha8Rng, rate: f64) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Connected components of the graph linking profiles with similarity at
/// least `tau`.
pub fn community_count(pop: &[SharedProfile], tau: f64, exec: Exec) -> usize {
    let n = pop.len();
    let edges: Vec<Vec<usize>> =
        exec.map_range(n, |i| (i + 1..n).filter(|&j| similarity(&pop[i], &pop[j]) >= tau).collect());
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (i, js) in edges.iter().enumerate() {
        for &j in js {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}
