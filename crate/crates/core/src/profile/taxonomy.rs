use std::collections::{HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::LabelId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyNode {
    pub id: LabelId,
    pub parent: Option<LabelId>,
    pub name: String,
}

/// Rooted label tree. Ids are dense: node `i` has id `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    nodes: Vec<TaxonomyNode>,
    children: Vec<Vec<LabelId>>,
    depth: Vec<u32>,
    root: LabelId,
}

impl Taxonomy {
    /// Validates and indexes a node list.
    pub fn from_nodes(nodes: Vec<TaxonomyNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::param("taxonomy must have at least one node"));
        }
        let n = nodes.len();
        let mut names = HashSet::with_capacity(n);
        let mut root = None;
        let mut children = vec![Vec::new(); n];
        for (i, node) in nodes.iter().enumerate() {
            if node.id as usize != i {
                return Err(Error::param(format!(
                    "label ids must be dense and ordered: position {i} holds id {}",
                    node.id
                )));
            }
            if node.name.is_empty() || node.name.chars().any(char::is_whitespace) {
                return Err(Error::param(format!("label {i} has an empty or whitespace name")));
            }
            if !names.insert(node.name.as_str()) {
                return Err(Error::param(format!("duplicate label name {:?}", node.name)));
            }
            match node.parent {
                None if root.is_some() => {
                    return Err(Error::param("taxonomy has more than one root"));
                }
                None => root = Some(node.id),
                Some(p) if p as usize >= n => {
                    return Err(Error::param(format!("label {i} has unknown parent {p}")));
                }
                Some(p) if p == node.id => {
                    return Err(Error::param(format!("label {i} is its own parent")));
                }
                Some(p) => children[p as usize].push(node.id),
            }
        }
        let root = root.ok_or_else(|| Error::param("taxonomy has no root"))?;

        // BFS from the root; anything unreached sits on a cycle.
        let mut depth = vec![u32::MAX; n];
        depth[root as usize] = 0;
        let mut queue = VecDeque::from([root]);
        let mut seen = 1;
        while let Some(id) = queue.pop_front() {
            for &c in &children[id as usize] {
                depth[c as usize] = depth[id as usize] + 1;
                seen += 1;
                queue.push_back(c);
            }
        }
        if seen != n {
            return Err(Error::param("taxonomy contains a cycle"));
        }
        Ok(Taxonomy { nodes, children, depth, root })
    }

    /// Random tree grown breadth-first: each expanded node receives a uniform
    /// number of children in `branching`, until `n_labels` nodes exist.
    pub fn generate(seed: u64, n_labels: usize, branching: (usize, usize)) -> Result<Self> {
        let (lo, hi) = branching;
        if n_labels == 0 {
            return Err(Error::param("n_labels must be at least 1"));
        }
        if lo == 0 || lo > hi {
            return Err(Error::param(format!("invalid branching range ({lo}, {hi})")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nodes = vec![TaxonomyNode { id: 0, parent: None, name: "r".to_string() }];
        let mut frontier = VecDeque::from([0 as LabelId]);
        while nodes.len() < n_labels {
            let parent = frontier.pop_front().expect("frontier never drains before n_labels");
            let fan = rng.random_range(lo..=hi);
            for c in 0..fan {
                if nodes.len() == n_labels {
                    break;
                }
                let id = nodes.len() as LabelId;
                let name = format!("{}.{c}", nodes[parent as usize].name);
                nodes.push(TaxonomyNode { id, parent: Some(parent), name });
                frontier.push_back(id);
            }
        }
        Taxonomy::from_nodes(nodes)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> LabelId {
        self.root
    }

    pub fn nodes(&self) -> &[TaxonomyNode] {
        &self.nodes
    }

    pub fn contains(&self, id: LabelId) -> bool {
        (id as usize) < self.nodes.len()
    }

    pub fn parent(&self, id: LabelId) -> Option<LabelId> {
        self.nodes[id as usize].parent
    }

    pub fn name(&self, id: LabelId) -> &str {
        &self.nodes[id as usize].name
    }

    pub fn children(&self, id: LabelId) -> &[LabelId] {
        &self.children[id as usize]
    }

    pub fn depth(&self, id: LabelId) -> u32 {
        self.depth[id as usize]
    }

    pub fn max_depth(&self) -> u32 {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn is_leaf(&self, id: LabelId) -> bool {
        self.children[id as usize].is_empty()
    }

    /// Leaves in ascending id order. A single-node tree's root is a leaf.
    pub fn leaves(&self) -> Vec<LabelId> {
        (0..self.nodes.len() as LabelId).filter(|&i| self.is_leaf(i)).collect()
    }

    /// `id` followed by its ancestors up to the root, paired with distance.
    pub fn ancestors(&self, id: LabelId) -> impl Iterator<Item = (u32, LabelId)> + '_ {
        let mut cur = Some(id);
        let mut d = 0;
        std::iter::from_fn(move || {
            let here = cur?;
            cur = self.nodes[here as usize].parent;
            let out = (d, here);
            d += 1;
            Some(out)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: LabelId, parent: Option<LabelId>) -> TaxonomyNode {
        TaxonomyNode { id, parent, name: format!("n{id}") }
    }

    #[test]
    fn single_node_tree() {
        let t = Taxonomy::generate(1, 1, (2, 3)).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.root(), 0);
        assert_eq!(t.leaves(), vec![0]);
        assert_eq!(t.max_depth(), 0);
    }

    #[test]
    fn two_hundred_labels() {
        let t = Taxonomy::generate(7, 200, (2, 5)).unwrap();
        assert_eq!(t.len(), 200);
        assert!(t.max_depth() >= 2);
        for n in t.nodes() {
            if let Some(p) = n.parent {
                assert!(t.children(p).contains(&n.id));
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = Taxonomy::generate(7, 200, (2, 5)).unwrap();
        let b = Taxonomy::generate(7, 200, (2, 5)).unwrap();
        assert_eq!(a, b);
        let c = Taxonomy::generate(8, 200, (2, 5)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_branching() {
        assert!(Taxonomy::generate(1, 10, (0, 3)).is_err());
        assert!(Taxonomy::generate(1, 10, (4, 3)).is_err());
        assert!(Taxonomy::generate(1, 0, (1, 3)).is_err());
    }

    #[test]
    fn validation() {
        assert!(Taxonomy::from_nodes(vec![node(0, None), node(1, None)]).is_err());
        assert!(Taxonomy::from_nodes(vec![node(0, Some(1)), node(1, Some(0))]).is_err());
        // root 0, and 1 <-> 2 form a detached cycle
        assert!(Taxonomy::from_nodes(vec![node(0, None), node(1, Some(2)), node(2, Some(1))]).is_err());
        assert!(Taxonomy::from_nodes(vec![node(0, None), node(1, Some(9))]).is_err());
        let mut dup = vec![node(0, None), node(1, Some(0))];
        dup[1].name = "n0".into();
        assert!(Taxonomy::from_nodes(dup).is_err());
        assert!(Taxonomy::from_nodes(vec![node(1, None)]).is_err());
    }

    #[test]
    fn ancestors_walk_to_root() {
        let t = Taxonomy::from_nodes(vec![node(0, None), node(1, Some(0)), node(2, Some(1))]).unwrap();
        let a: Vec<_> = t.ancestors(2).collect();
        assert_eq!(a, vec![(0, 2), (1, 1), (2, 0)]);
        assert_eq!(t.depth(2), 2);
    }
}
