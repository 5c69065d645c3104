use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{expand_profile, Profile, Taxonomy, TaxonomyNode};
use crate::error::{Error, Result};
use crate::ids::LabelId;

/// Well-separated synthetic communities.
///
/// The taxonomy is `root -> topic_j -> leaves`. Every peer of cluster `j`
/// carries all `core_labels` core leaves of topic `j`, each with a weight
/// drawn from `[0.25, 1.0]`, so a cluster is one continuous cloud rather
/// than a union of sub-groups. When `pool_labels > 0` each peer also gets
/// one pool leaf of its topic with weight in `[0.3, 1.0]`. With ancestor
/// decay 0.5 intra-cluster cosine stays above 0.6 and inter-cluster cosine
/// below 0.2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub clusters: usize,
    pub per_cluster: usize,
    pub core_labels: usize,
    pub pool_labels: usize,
    pub decay: f64,
    pub seed: u64,
}

impl PlantedSpec {
    pub fn new(clusters: usize, per_cluster: usize, seed: u64) -> Self {
        PlantedSpec { clusters, per_cluster, core_labels: 3, pool_labels: 0, decay: 0.5, seed }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedClusters {
    pub taxonomy: Taxonomy,
    pub profiles: Vec<Profile>,
    /// Cluster index of each profile.
    pub cluster_of: Vec<usize>,
}

impl PlantedClusters {
    pub fn generate(spec: &PlantedSpec) -> Result<Self> {
        if spec.clusters == 0 || spec.per_cluster == 0 || spec.core_labels == 0 {
            return Err(Error::param("planted clusters need non-zero sizes"));
        }
        let mut nodes = vec![TaxonomyNode { id: 0, parent: None, name: "r".into() }];
        let mut core = Vec::new();
        let mut pool = Vec::new();
        for j in 0..spec.clusters {
            let topic = nodes.len() as LabelId;
            nodes.push(TaxonomyNode { id: topic, parent: Some(0), name: format!("t{j}") });
            let mut c = Vec::new();
            let mut p = Vec::new();
            for i in 0..spec.core_labels + spec.pool_labels {
                let id = nodes.len() as LabelId;
                nodes.push(TaxonomyNode { id, parent: Some(topic), name: format!("t{j}.{i}") });
                if i < spec.core_labels {
                    c.push(id);
                } else {
                    p.push(id);
                }
            }
            core.push(c);
            pool.push(p);
        }
        let taxonomy = Taxonomy::from_nodes(nodes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut profiles = Vec::with_capacity(spec.clusters * spec.per_cluster);
        let mut cluster_of = Vec::with_capacity(spec.clusters * spec.per_cluster);
        // Interleave clusters so peer ids carry no cluster structure.
        for _ in 0..spec.per_cluster {
            for j in 0..spec.clusters {
                let mut labels: Vec<(LabelId, f64)> =
                    core[j].iter().map(|&l| (l, rng.random_range(0.25..=1.0))).collect();
                if !pool[j].is_empty() {
                    let extra = pool[j][rng.random_range(0..pool[j].len())];
                    labels.push((extra, rng.random_range(0.3..=1.0)));
                }
                profiles.push(expand_profile(&labels, &taxonomy, spec.decay)?);
                cluster_of.push(j);
            }
        }
        Ok(PlantedClusters { taxonomy, profiles, cluster_of })
    }
}
