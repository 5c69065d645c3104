//! Profiles, the label taxonomy they live on, and the similarity measure that
//! every layer ranks by.
//!
//! A [`Profile`] is a sparse, strictly positive weight vector over taxonomy
//! labels. Peer profiles are built by [`expand_profile`]: each chosen leaf
//! pushes a geometrically decaying share of its weight to every ancestor, so
//! labels that sit close in the tree produce overlapping vectors. Similarity
//! is plain cosine over those vectors.

mod format;
mod planted;
mod taxonomy;
mod zipf;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ids::{LabelId, PeerId};

pub use format::{read_profiles, read_taxonomy, write_profiles, write_taxonomy};
pub use planted::{PlantedClusters, PlantedSpec};
pub use taxonomy::{Taxonomy, TaxonomyNode};
pub use zipf::{assign_profiles, perturb_profile, ZipfAssignment};

/// Ancestor decay used when no other value is configured.
pub const DEFAULT_DECAY: f64 = 0.5;

/// Sparse non-negative weight vector, sorted by label, with a cached norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(LabelId, f64)>", into = "Vec<(LabelId, f64)>")]
pub struct Profile {
    weights: Vec<(LabelId, f64)>,
    norm: f64,
}

impl Profile {
    /// Builds a profile, summing repeated labels. Every weight must be finite
    /// and strictly positive, and at least one entry is required.
    pub fn new(weights: impl IntoIterator<Item = (LabelId, f64)>) -> Result<Self> {
        let mut acc: BTreeMap<LabelId, f64> = BTreeMap::new();
        for (label, w) in weights {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::param(format!("label {label} has non-positive weight {w}")));
            }
            *acc.entry(label).or_insert(0.0) += w;
        }
        if acc.is_empty() {
            return Err(Error::param("profile must have at least one label"));
        }
        Ok(Self::from_sorted(acc.into_iter().collect()))
    }

    fn from_sorted(weights: Vec<(LabelId, f64)>) -> Self {
        let norm = weights.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        Profile { weights, norm }
    }

    /// Single-label profile with weight 1.
    pub fn singleton(label: LabelId) -> Self {
        Self::from_sorted(vec![(label, 1.0)])
    }

    pub fn weights(&self) -> &[(LabelId, f64)] {
        &self.weights
    }

    pub fn labels(&self) -> impl Iterator<Item = LabelId> + '_ {
        self.weights.iter().map(|&(l, _)| l)
    }

    pub fn weight(&self, label: LabelId) -> Option<f64> {
        self.weights
            .binary_search_by_key(&label, |&(l, _)| l)
            .ok()
            .map(|i| self.weights[i].1)
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `alpha * self`. Panics unless `alpha` is finite and positive.
    pub fn scaled(&self, alpha: f64) -> Profile {
        assert!(alpha.is_finite() && alpha > 0.0, "scale factor must be positive");
        Self::from_sorted(self.weights.iter().map(|&(l, w)| (l, w * alpha)).collect())
    }

    /// Unit-norm copy.
    pub fn normalized(&self) -> Profile {
        let n = self.norm;
        Self::from_sorted(self.weights.iter().map(|&(l, w)| (l, w / n)).collect())
    }

    /// Dot product over the shared support, summed in ascending label order.
    pub fn dot(&self, other: &Profile) -> f64 {
        let (small, large) = if self.len() <= other.len() {
            (&self.weights, &other.weights)
        } else {
            (&other.weights, &self.weights)
        };
        let mut j = 0;
        let mut sum = 0.0;
        for &(label, w) in small {
            while j < large.len() && large[j].0 < label {
                j += 1;
            }
            if j == large.len() {
                break;
            }
            if large[j].0 == label {
                sum += w * large[j].1;
            }
        }
        sum
    }
}

impl TryFrom<Vec<(LabelId, f64)>> for Profile {
    type Error = Error;

    fn try_from(v: Vec<(LabelId, f64)>) -> Result<Self> {
        Profile::new(v)
    }
}

impl From<Profile> for Vec<(LabelId, f64)> {
    fn from(p: Profile) -> Self {
        p.weights
    }
}

/// Cosine similarity. Symmetric bit-for-bit: the shared support is always
/// visited in ascending label order, whichever side is iterated.
pub fn similarity(p: &Profile, q: &Profile) -> f64 {
    let s = p.dot(q) / (p.norm * q.norm);
    s.clamp(0.0, 1.0)
}

/// Spreads each `(label, weight)` onto the label and its ancestors with
/// weight `w * decay^distance`, then normalizes to unit length.
pub fn expand_profile(labels: &[(LabelId, f64)], taxonomy: &Taxonomy, decay: f64) -> Result<Profile> {
    if labels.is_empty() {
        return Err(Error::param("cannot expand an empty label list"));
    }
    if !(decay > 0.0 && decay <= 1.0) {
        return Err(Error::param(format!("decay must lie in (0, 1], got {decay}")));
    }
    let mut acc: BTreeMap<LabelId, f64> = BTreeMap::new();
    for &(label, w) in labels {
        if !taxonomy.contains(label) {
            return Err(Error::param(format!("unknown label id {label}")));
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::param(format!("label {label} has non-positive weight {w}")));
        }
        for (d, anc) in taxonomy.ancestors(label) {
            *acc.entry(anc).or_insert(0.0) += w * decay.powi(d as i32);
        }
    }
    Ok(Profile::from_sorted(acc.into_iter().collect()).normalized())
}

/// Descending score, then ascending peer id.
pub fn rank_order(a: &(PeerId, f64), b: &(PeerId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Exact top-k by similarity to `sample`.
pub fn brute_force_top_k<'a, I>(sample: &Profile, population: I, k: usize) -> Vec<(PeerId, f64)>
where
    I: IntoIterator<Item = (PeerId, &'a Profile)>,
{
    let scored: Vec<(PeerId, f64)> =
        population.into_iter().map(|(id, p)| (id, similarity(sample, p))).collect();
    top_k_of(scored, k)
}

/// Sorts `(id, score)` pairs by [`rank_order`] and keeps the best `k`.
pub fn top_k_of(mut scored: Vec<(PeerId, f64)>, k: usize) -> Vec<(PeerId, f64)> {
    if k == 0 {
        return Vec::new();
    }
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_by(rank_order);
    scored
}

/// Top-k for many samples against one population.
pub fn brute_force_top_k_many(
    samples: &[&Profile],
    population: &[(PeerId, &Profile)],
    k: usize,
    exec: Exec,
) -> Vec<Vec<(PeerId, f64)>> {
    exec.map(samples, |s| brute_force_top_k(s, population.iter().copied(), k))
}
