use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{expand_profile, Profile, Taxonomy};
use crate::error::{Error, Result};
use crate::ids::LabelId;

/// Zipf law over a ranked label list: rank `r` (1-based) is drawn with
/// probability `r^-s / H(N, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZipfAssignment {
    exponent: f64,
    ranked: Vec<LabelId>,
    weights: Vec<f64>,
    cdf: Vec<f64>,
}

impl ZipfAssignment {
    pub fn new(exponent: f64, ranked_labels: Vec<LabelId>) -> Result<Self> {
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(Error::param(format!("zipf exponent must be positive, got {exponent}")));
        }
        if ranked_labels.is_empty() {
            return Err(Error::param("zipf assignment needs at least one label"));
        }
        let weights: Vec<f64> =
            (1..=ranked_labels.len()).map(|r| (r as f64).powf(-exponent)).collect();
        let total: f64 = weights.iter().sum();
        let mut run = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                run += w / total;
                run
            })
            .collect();
        Ok(ZipfAssignment { exponent, ranked: ranked_labels, weights, cdf })
    }

    /// Ranks the taxonomy's leaves in a seeded random order.
    pub fn over_leaves(taxonomy: &Taxonomy, exponent: f64, seed: u64) -> Result<Self> {
        let mut leaves = taxonomy.leaves();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a17_f00d);
        leaves.shuffle(&mut rng);
        Self::new(exponent, leaves)
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn ranked_labels(&self) -> &[LabelId] {
        &self.ranked
    }

    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    /// Probability of 1-based `rank`.
    pub fn probability(&self, rank: usize) -> f64 {
        assert!(rank >= 1 && rank <= self.ranked.len(), "rank out of range");
        let total: f64 = self.weights.iter().sum();
        self.weights[rank - 1] / total
    }

    /// Draws a 1-based rank.
    pub fn sample_rank<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.ranked.len() - 1) + 1
    }

    pub fn sample_label<R: Rng + ?Sized>(&self, rng: &mut R) -> LabelId {
        self.ranked[self.sample_rank(rng) - 1]
    }

    /// `count` distinct labels, drawn one at a time from the Zipf law
    /// renormalized over the labels not yet taken and not in `exclude`.
    pub fn sample_distinct<R: Rng + ?Sized>(
        &self,
        count: usize,
        exclude: &[LabelId],
        rng: &mut R,
    ) -> Result<Vec<LabelId>> {
        let mut w = self.weights.clone();
        for (i, l) in self.ranked.iter().enumerate() {
            if exclude.contains(l) {
                w[i] = 0.0;
            }
        }
        let available = w.iter().filter(|&&x| x > 0.0).count();
        if available < count {
            return Err(Error::param(format!(
                "cannot draw {count} distinct labels from {available} available"
            )));
        }
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let total: f64 = w.iter().sum();
            let target = rng.random::<f64>() * total;
            let mut run = 0.0;
            let mut pick = None;
            for (i, &x) in w.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                run += x;
                pick = Some(i);
                if target < run {
                    break;
                }
            }
            let i = pick.expect("at least one label available");
            w[i] = 0.0;
            out.push(self.ranked[i]);
        }
        Ok(out)
    }
}

/// One expanded profile per peer. Each peer draws `labels_per_peer` distinct
/// Zipf-ranked leaves (weight 1 each) which are then expanded with `decay`.
pub fn assign_profiles(
    n_peers: usize,
    taxonomy: &Taxonomy,
    zipf: &ZipfAssignment,
    labels_per_peer: usize,
    decay: f64,
    seed: u64,
) -> Result<Vec<Profile>> {
    if n_peers == 0 {
        return Err(Error::param("n_peers must be at least 1"));
    }
    if labels_per_peer == 0 {
        return Err(Error::param("labels_per_peer must be at least 1"));
    }
    if zipf.len() < labels_per_peer {
        return Err(Error::param(format!(
            "taxonomy offers {} leaves, fewer than labels_per_peer = {labels_per_peer}",
            zipf.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_peers)
        .map(|_| {
            let labels = zipf.sample_distinct(labels_per_peer, &[], &mut rng)?;
            let weighted: Vec<_> = labels.into_iter().map(|l| (l, 1.0)).collect();
            expand_profile(&weighted, taxonomy, decay)
        })
        .collect()
}

/// Replaces one leaf of `profile` by a fresh Zipf draw and re-expands.
///
/// Leaf weights of an expanded profile are proportional to the original leaf
/// weights, so the rebuilt profile keeps the relative weighting. Returns a
/// copy when no alternative leaf exists.
pub fn perturb_profile<R: Rng + ?Sized>(
    profile: &Profile,
    taxonomy: &Taxonomy,
    zipf: &ZipfAssignment,
    decay: f64,
    rng: &mut R,
) -> Result<Profile> {
    let leaves: Vec<(LabelId, f64)> =
        profile.weights().iter().copied().filter(|&(l, _)| taxonomy.is_leaf(l)).collect();
    if leaves.is_empty() {
        return Ok(profile.clone());
    }
    let current: Vec<LabelId> = leaves.iter().map(|&(l, _)| l).collect();
    let Ok(fresh) = zipf.sample_distinct(1, &current, rng) else {
        return Ok(profile.clone());
    };
    let slot = rng.random_range(0..leaves.len());
    let mut labels = leaves;
    labels[slot].0 = fresh[0];
    expand_profile(&labels, taxonomy, decay)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_probability_harmonic() {
        let z = ZipfAssignment::new(1.0, vec![10, 11, 12, 13, 14]).unwrap();
        let h5: f64 = 1.0 + 0.5 + 1.0 / 3.0 + 0.25 + 0.2;
        assert!((h5 - 2.2833).abs() < 1e-4);
        assert!((z.probability(1) - 1.0 / h5).abs() < 1e-12);
        assert!((z.probability(1) - 0.4380).abs() < 1e-4);
        let total: f64 = (1..=5).map(|r| z.probability(r)).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empirical_rank_one_frequency() {
        let z = ZipfAssignment::new(1.0, vec![0, 1, 2, 3, 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 100_000;
        let hits = (0..n).filter(|_| z.sample_rank(&mut rng) == 1).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.4380).abs() < 0.01, "observed {freq}");
    }

    #[test]
    fn distinct_draws() {
        let z = ZipfAssignment::new(1.0, (0..20).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut d = z.sample_distinct(5, &[0, 1], &mut rng).unwrap();
            assert!(!d.contains(&0) && !d.contains(&1));
            d.sort();
            d.dedup();
            assert_eq!(d.len(), 5);
        }
        assert!(z.sample_distinct(19, &[0, 1], &mut rng).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ZipfAssignment::new(0.0, vec![1]).is_err());
        assert!(ZipfAssignment::new(1.0, vec![]).is_err());
        let t = Taxonomy::generate(1, 5, (4, 4)).unwrap();
        let z = ZipfAssignment::over_leaves(&t, 1.0, 1).unwrap();
        assert_eq!(z.len(), 4);
        assert!(assign_profiles(3, &t, &z, 5, 0.5, 1).is_err());
        assert!(assign_profiles(0, &t, &z, 1, 0.5, 1).is_err());
        assert!(assign_profiles(3, &t, &z, 0, 0.5, 1).is_err());
    }

    #[test]
    fn single_leaf_forces_support() {
        // root -> one leaf: the only leaf gets picked every time.
        let t = Taxonomy::generate(1, 2, (1, 1)).unwrap();
        let z = ZipfAssignment::over_leaves(&t, 1e-6, 1).unwrap();
        let ps = assign_profiles(10, &t, &z, 1, 0.5, 4).unwrap();
        for p in ps {
            assert!(p.weight(1).is_some());
        }
    }

    #[test]
    fn full_scale_assignment() {
        let t = Taxonomy::generate(7, 200, (2, 5)).unwrap();
        let z = ZipfAssignment::over_leaves(&t, 1.0, 7).unwrap();
        let ps = assign_profiles(5000, &t, &z, 3, 0.5, 11).unwrap();
        assert_eq!(ps.len(), 5000);
        let again = assign_profiles(5000, &t, &z, 3, 0.5, 11).unwrap();
        assert_eq!(ps, again);
        for p in &ps {
            assert!((p.norm() - 1.0).abs() < 1e-9);
            assert_eq!(p.labels().filter(|&l| t.is_leaf(l)).count(), 3);
        }
    }

    #[test]
    fn perturbation_swaps_one_leaf() {
        let t = Taxonomy::generate(7, 200, (2, 5)).unwrap();
        let z = ZipfAssignment::over_leaves(&t, 1.0, 7).unwrap();
        let ps = assign_profiles(20, &t, &z, 3, 0.5, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in &ps {
            let q = perturb_profile(p, &t, &z, 0.5, &mut rng).unwrap();
            let lp: Vec<_> = p.labels().filter(|&l| t.is_leaf(l)).collect();
            let lq: Vec<_> = q.labels().filter(|&l| t.is_leaf(l)).collect();
            assert_eq!(lq.len(), 3);
            assert_eq!(lp.iter().filter(|l| lq.contains(l)).count(), 2);
        }
    }
}
