use serde::{Deserialize, Serialize};

use crate::dht::DhtConfig;
use crate::election::ElectionConfig;
use crate::error::{Error, Result};
use crate::gossip::GossipConfig;
use crate::profile::{
    assign_profiles, PlantedClusters, PlantedSpec, Profile, Taxonomy, ZipfAssignment, DEFAULT_DECAY,
};
use crate::query::QueryConfig;

/// Full description of one run. A run is a pure function of this value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_peers: usize,
    pub seed: u64,
    pub cycles: u64,
    /// Event-time units per cycle.
    pub cycle_length: u64,
    pub message_delay: (u64, u64),
    /// Emit a metrics frame every this many cycles.
    pub metrics_interval: u64,
    pub bootstrap: Bootstrap,
    pub churn: ChurnConfig,
    pub dataset: DatasetConfig,
    pub gossip: GossipConfig,
    pub election: ElectionConfig,
    pub dht: DhtConfig,
    pub query: QueryConfig,
    pub workload: WorkloadConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_peers: 500,
            seed: 1,
            cycles: 100,
            cycle_length: 10,
            message_delay: (1, 5),
            metrics_interval: 1,
            bootstrap: Bootstrap::Random,
            churn: ChurnConfig::default(),
            dataset: DatasetConfig::default(),
            gossip: GossipConfig::default(),
            election: ElectionConfig::default(),
            dht: DhtConfig::default(),
            query: QueryConfig::default(),
            workload: WorkloadConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_peers == 0 {
            return bad("n_peers must be at least 1".into());
        }
        if self.cycle_length == 0 {
            return bad("cycle_length must be positive".into());
        }
        let (lo, hi) = self.message_delay;
        if lo == 0 || lo > hi {
            return bad(format!("message_delay ({lo}, {hi}) must satisfy 1 <= min <= max"));
        }
        if self.metrics_interval == 0 {
            return bad("metrics_interval must be positive".into());
        }
        self.churn.validate().or_else(bad)?;
        self.dataset.validate(self.n_peers).or_else(bad)?;
        self.gossip.validate().or_else(bad)?;
        self.election.validate().or_else(bad)?;
        self.dht.validate().or_else(bad)?;
        self.query.validate().or_else(bad)?;
        self.workload.validate(self.cycles).or_else(bad)?;
        Ok(())
    }

    /// Parses and validates a TOML spec. Omitted fields take their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("every config field is representable in TOML")
    }

    /// Event-time units after which an unanswered RPC counts as failed.
    pub fn rpc_timeout(&self) -> u64 {
        2 * self.message_delay.1 + 1
    }

    /// Random-view entries a joining peer is seeded with.
    pub fn bootstrap_contacts(&self) -> usize {
        self.gossip.random_capacity.div_ceil(2)
    }
}

/// How the initial population's random views are seeded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bootstrap {
    /// Uniformly random existing peers.
    #[default]
    Random,
    /// Each peer knows its successors on a ring of ids.
    Ring,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChurnConfig {
    /// Poisson mean of joins per cycle.
    pub join_rate: f64,
    /// Poisson mean of leaves per cycle.
    pub leave_rate: f64,
}

impl ChurnConfig {
    pub fn validate(&self) -> Result<(), String> {
        let ok = |r: f64| r.is_finite() && r >= 0.0;
        if !ok(self.join_rate) || !ok(self.leave_rate) {
            return Err("churn rates must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn is_static(&self) -> bool {
        self.join_rate == 0.0 && self.leave_rate == 0.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// Random taxonomy, Zipf-ranked leaves.
    #[default]
    Zipf,
    /// Well-separated planted communities.
    Planted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub labels: usize,
    pub branching: (usize, usize),
    pub zipf_exponent: f64,
    pub labels_per_peer: usize,
    pub decay: f64,
    /// Planted datasets only.
    pub clusters: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Zipf,
            labels: 200,
            branching: (2, 5),
            zipf_exponent: 1.0,
            labels_per_peer: 3,
            decay: DEFAULT_DECAY,
            clusters: 5,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self, n_peers: usize) -> Result<(), String> {
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(format!("decay must lie in (0, 1], got {}", self.decay));
        }
        if self.labels_per_peer == 0 {
            return Err("labels_per_peer must be at least 1".into());
        }
        if self.kind == DatasetKind::Planted && (self.clusters == 0 || self.clusters > n_peers) {
            return Err(format!("planted datasets need 1 <= clusters <= n_peers, got {}", self.clusters));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub n_queries: usize,
    /// First cycle at which queries may be injected.
    pub warmup: u64,
    /// Also resolve each query by global flooding and report both.
    pub flood_baseline: bool,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig { n_queries: 0, warmup: 60, flood_baseline: false }
    }
}

impl WorkloadConfig {
    pub fn validate(&self, cycles: u64) -> Result<(), String> {
        if self.n_queries > 0 && self.warmup >= cycles {
            return Err(format!("warmup ({}) must end before the last cycle ({cycles})", self.warmup));
        }
        Ok(())
    }
}

/// Taxonomy, the Zipf law used for fresh and perturbed profiles, and the
/// initial population's profiles.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub taxonomy: Taxonomy,
    pub zipf: ZipfAssignment,
    pub decay: f64,
    pub labels_per_peer: usize,
    pub profiles: Vec<Profile>,
    /// Planted cluster of each initial profile.
    pub clusters: Option<Vec<usize>>,
}

impl Dataset {
    pub fn generate(cfg: &DatasetConfig, n_peers: usize, seed: u64) -> Result<Self> {
        cfg.validate(n_peers).map_err(Error::Parameter)?;
        match cfg.kind {
            DatasetKind::Zipf => {
                let taxonomy = Taxonomy::generate(seed, cfg.labels, cfg.branching)?;
                let zipf = ZipfAssignment::over_leaves(&taxonomy, cfg.zipf_exponent, seed)?;
                // Small taxonomies cap the draw at the number of leaves.
                let per = cfg.labels_per_peer.min(zipf.len());
                let profiles = assign_profiles(n_peers, &taxonomy, &zipf, per, cfg.decay, seed)?;
                Ok(Dataset {
                    taxonomy,
                    zipf,
                    decay: cfg.decay,
                    labels_per_peer: per,
                    profiles,
                    clusters: None,
                })
            }
            DatasetKind::Planted => {
                let mut spec = PlantedSpec::new(cfg.clusters, n_peers.div_ceil(cfg.clusters), seed);
                spec.decay = cfg.decay;
                let mut planted = PlantedClusters::generate(&spec)?;
                planted.profiles.truncate(n_peers);
                planted.cluster_of.truncate(n_peers);
                let zipf = ZipfAssignment::over_leaves(&planted.taxonomy, cfg.zipf_exponent, seed)?;
                Ok(Dataset {
                    taxonomy: planted.taxonomy,
                    zipf,
                    decay: cfg.decay,
                    labels_per_peer: cfg.labels_per_peer,
                    profiles: planted.profiles,
                    clusters: Some(planted.cluster_of),
                })
            }
        }
    }

    /// Uses externally supplied profiles; `zipf` ranks the taxonomy's leaves.
    pub fn from_parts(taxonomy: Taxonomy, profiles: Vec<Profile>, cfg: &DatasetConfig, seed: u64) -> Result<Self> {
        if profiles.is_empty() {
            return Err(Error::param("dataset needs at least one profile"));
        }
        let zipf = ZipfAssignment::over_leaves(&taxonomy, cfg.zipf_exponent, seed)?;
        Ok(Dataset {
            taxonomy,
            zipf,
            decay: cfg.decay,
            labels_per_peer: cfg.labels_per_peer,
            profiles,
            clusters: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut cfg = SimConfig::default();
        cfg.churn.join_rate = 0.5;
        cfg.dataset.kind = DatasetKind::Planted;
        let back = SimConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(SimConfig::from_toml("n_peers = 0").is_err());
        assert!(SimConfig::from_toml("message_delay = [5, 1]").is_err());
        assert!(SimConfig::from_toml("no_such_field = 1").is_err());
        assert!(SimConfig::from_toml("[churn]\nleave_rate = -1.0").is_err());
        assert_eq!(SimConfig::from_toml("seed = 9").unwrap().seed, 9);
    }
}
