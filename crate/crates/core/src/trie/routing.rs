use serde::{Deserialize, Serialize};

use super::{NodeId, Trie};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Rule for choosing a child at each node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoutingPolicy {
    /// Read input entries left to right as bits: 0 steps left, 1 steps right.
    /// Routing stops when the bits run out or the needed child is absent.
    BitConsume,
    /// Read `x[feature_index]` of the current node: strictly below the
    /// threshold steps left, otherwise right. Stops at a leaf.
    FeatureThreshold { threshold: f64 },
}

impl RoutingPolicy {
    pub fn threshold() -> RoutingPolicy {
        RoutingPolicy::FeatureThreshold {
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RoutingPolicy::BitConsume => "bits",
            RoutingPolicy::FeatureThreshold { .. } => "threshold",
        }
    }
}

/// Nodes visited from the root to the node that serves the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutePath {
    pub visited: Vec<NodeId>,
}

impl RoutePath {
    pub fn terminal(&self) -> NodeId {
        *self.visited.last().expect("route paths are never empty")
    }
}

impl Trie {
    pub fn route(&self, x: &[f64], policy: &RoutingPolicy) -> Result<RoutePath> {
        let root = self
            .root()
            .ok_or_else(|| Error::Structure("cannot route through an empty trie".into()))?;
        let mut visited = vec![root];
        let mut node = root;
        match *policy {
            RoutingPolicy::BitConsume => {
                if let Some(v) = x.iter().find(|&&v| v != 0.0 && v != 1.0) {
                    return Err(Error::contract(format!(
                        "bit routing needs 0/1 inputs, got {v}"
                    )));
                }
                for &bit in x {
                    let n = self.node(node);
                    let next = if bit == 0.0 { n.left } else { n.right };
                    match next {
                        Some(child) => {
                            visited.push(child);
                            node = child;
                        }
                        None => break,
                    }
                }
            }
            RoutingPolicy::FeatureThreshold { threshold } => {
                if !threshold.is_finite() {
                    return Err(Error::contract("routing threshold must be finite"));
                }
                loop {
                    let n = self.node(node);
                    if n.is_leaf() {
                        break;
                    }
                    let f = *x.get(n.feature_index).ok_or_else(|| {
                        Error::contract(format!(
                            "node {node} reads feature {} of a {}-wide input",
                            n.feature_index,
                            x.len()
                        ))
                    })?;
                    let next = if f < threshold { n.left } else { n.right };
                    match next {
                        Some(child) => {
                            visited.push(child);
                            node = child;
                        }
                        None => break,
                    }
                }
            }
        }
        Ok(RoutePath { visited })
    }

    /// Terminal node of [`Trie::route`].
    pub fn leaf_of(&self, x: &[f64], policy: &RoutingPolicy) -> Result<NodeId> {
        self.route(x, policy).map(|p| p.terminal())
    }
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use super::*;
    use crate::nn::Network;
    use crate::trie::{build_trie, FeatureAssignment};

    fn trie(depth: usize) -> Trie {
        Trie::build_with(depth, 0, |_| Network::mini_nn(2, 2))
    }

    #[test]
    fn bit_route_walks_left_then_right() {
        let t = trie(3);
        let root = t.root().unwrap();
        let left = t.node(root).left.unwrap();
        let lr = t.node(left).right.unwrap();
        let path = t.route(&[0.0, 1.0], &RoutingPolicy::BitConsume).unwrap();
        assert_eq!(path.visited, vec![root, left, lr]);
        assert!(t.is_leaf(lr));
        assert_eq!(
            t.leaf_of(&[0.0, 1.0], &RoutingPolicy::BitConsume).unwrap(),
            lr
        );
    }

    #[test]
    fn xor_inputs_reach_distinct_leaves() {
        let t = trie(3);
        let leaves: BTreeSet<NodeId> = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]
            .iter()
            .map(|x| t.leaf_of(x, &RoutingPolicy::BitConsume).unwrap())
            .collect();
        assert_eq!(leaves.len(), 4);
        assert!(leaves.iter().all(|&l| t.is_leaf(l)));
    }

    #[test]
    fn single_node_paths() {
        let t = trie(1);
        for policy in [RoutingPolicy::BitConsume, RoutingPolicy::threshold()] {
            assert_eq!(
                t.route(&[1.0, 0.0], &policy).unwrap().visited,
                vec![NodeId(0)]
            );
        }
    }

    #[test]
    fn bits_exhausted_stop_at_internal_node() {
        let t = trie(5);
        let path = t.route(&[1.0, 1.0], &RoutingPolicy::BitConsume).unwrap();
        assert_eq!(path.visited.len(), 3);
        assert!(!t.is_leaf(path.terminal()));
    }

    #[test]
    fn threshold_routing() {
        let mut t = build_trie(3, 2, 3, 0);
        let all_zero: BTreeMap<_, _> = (0..t.len()).map(|i| (NodeId(i), 0)).collect();
        t.assign_feature_indices(&FeatureAssignment::Explicit(all_zero))
            .unwrap();
        let th = RoutingPolicy::threshold();
        let rightmost = {
            let mut n = t.root().unwrap();
            while let Some(r) = t.node(n).right {
                n = r;
            }
            n
        };
        assert_eq!(t.leaf_of(&[0.9, 0.1, 0.1], &th).unwrap(), rightmost);
        // Equality goes right.
        assert_eq!(t.leaf_of(&[0.5, 0.0, 0.0], &th).unwrap(), rightmost);
        let leftmost = t.leaf_of(&[0.49, 1.0, 1.0], &th).unwrap();
        assert_eq!(leftmost, NodeId(2));
    }

    #[test]
    fn out_of_range_feature_is_a_contract_error() {
        let mut t = trie(3);
        let fives: BTreeMap<_, _> = (0..t.len()).map(|i| (NodeId(i), 5)).collect();
        t.assign_feature_indices(&FeatureAssignment::Explicit(fives))
            .unwrap();
        assert!(t.route(&[0.0; 10], &RoutingPolicy::threshold()).is_ok());
        assert!(matches!(
            t.route(&[0.0; 3], &RoutingPolicy::threshold()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn empty_trie_is_a_structural_error() {
        assert!(matches!(
            Trie::empty().route(&[0.0], &RoutingPolicy::BitConsume),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn non_binary_bits_are_rejected() {
        assert!(trie(3)
            .route(&[0.5, 1.0], &RoutingPolicy::BitConsume)
            .is_err());
    }
}
