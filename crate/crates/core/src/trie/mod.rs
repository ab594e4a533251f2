//! Arena-backed binary trie whose nodes each own a [`Network`].
//!
//! Nodes live in a flat `Vec` and refer to their children by [`NodeId`]; there
//! are no parent links, so a trie is a plain value that can be moved across
//! threads. Balanced builds store nodes in pre-order, so the root is id 0 and
//! the left subtree occupies the ids directly after it.

mod routing;
mod snapshot;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Layer, Network};
use crate::seed::node_seed;

pub use routing::{RoutePath, RoutingPolicy, DEFAULT_THRESHOLD};
pub use snapshot::{SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrieNode {
    pub left: Option<NodeId>,
    pub right: Option<NodeId>,
    pub net: Network,
    /// Feature read by threshold routing at this node.
    pub feature_index: usize,
}

impl TrieNode {
    pub fn new(net: Network) -> TrieNode {
        TrieNode {
            left: None,
            right: None,
            net,
            feature_index: 0,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.left.is_none() && self.right.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trie {
    nodes: Vec<TrieNode>,
    root: Option<NodeId>,
    declared_depth: usize,
}

/// How [`Trie::assign_feature_indices`] picks each node's feature.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureAssignment {
    /// `feature_index = node depth mod input_dim` (root at depth 0).
    DepthCycling { input_dim: usize },
    /// An explicit index for every node.
    Explicit(BTreeMap<NodeId, usize>),
}

/// Shape summary. `height` counts nodes on the longest root-to-leaf path, so
/// a single node has height 1 and a balanced build of depth d has height d.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralStats {
    pub node_count: usize,
    pub leaf_count: usize,
    pub height: usize,
    /// Subtree heights differ by at most one at every node.
    pub is_balanced: bool,
}

/// Per-node cost model `t ≈ N × L × C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub neurons: usize,
    pub layers: usize,
    pub per_neuron_cost: f64,
}

impl CostModel {
    pub fn new(neurons: usize, layers: usize, per_neuron_cost: f64) -> Result<CostModel> {
        if neurons == 0 || layers == 0 || !(per_neuron_cost >= 0.0 && per_neuron_cost.is_finite()) {
            return Err(Error::contract(format!(
                "cost model needs N, L ≥ 1 and finite C ≥ 0 (got {neurons}, {layers}, {per_neuron_cost})"
            )));
        }
        Ok(CostModel {
            neurons,
            layers,
            per_neuron_cost,
        })
    }

    /// Counts neurons as the output units of every parameterized layer, and
    /// layers as the number of parameterized layers. MiniNN(2, 20) gives N=21, L=2.
    pub fn for_network(net: &Network, per_neuron_cost: f64) -> Result<CostModel> {
        let mut width = net.input_width();
        let (mut neurons, mut layers) = (0, 0);
        for layer in net.layers() {
            width = layer.output_width(width).unwrap_or(0);
            if layer.param_count() > 0 {
                let units = match layer {
                    Layer::ComplexDense(_) => width / 2,
                    _ => width,
                };
                neurons += units;
                layers += 1;
            }
        }
        CostModel::new(neurons, layers, per_neuron_cost)
    }

    pub fn node_cost(&self) -> f64 {
        self.neurons as f64 * self.layers as f64 * self.per_neuron_cost
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub t_node: f64,
    pub per_inference: f64,
}

/// Balanced trie of `2^depth − 1` freshly initialized `MiniNN(input_size, hidden_size)` nodes.
pub fn build_trie(input_size: usize, hidden_size: usize, depth: usize, seed: u64) -> Trie {
    Trie::build_with(depth, seed, |s| {
        Network::mini_nn(input_size, hidden_size).initialized(s)
    })
}

impl Trie {
    pub fn empty() -> Trie {
        Trie {
            nodes: Vec::new(),
            root: None,
            declared_depth: 0,
        }
    }

    /// Balanced build; `make` receives the node's derived seed.
    /// Depth 0 yields the empty trie.
    pub fn build_with(depth: usize, seed: u64, mut make: impl FnMut(u64) -> Network) -> Trie {
        fn grow(
            nodes: &mut Vec<TrieNode>,
            remaining: usize,
            code: u64,
            seed: u64,
            make: &mut dyn FnMut(u64) -> Network,
        ) -> Option<NodeId> {
            if remaining == 0 {
                return None;
            }
            let id = NodeId(nodes.len());
            nodes.push(TrieNode::new(make(node_seed(seed, code))));
            let left = grow(nodes, remaining - 1, 2 * code, seed, make);
            let right = grow(nodes, remaining - 1, 2 * code + 1, seed, make);
            nodes[id.0].left = left;
            nodes[id.0].right = right;
            Some(id)
        }
        assert!(depth < 64, "trie depth {depth} too large");
        let mut nodes = Vec::with_capacity((1usize << depth) - 1);
        let root = grow(&mut nodes, depth, 1, seed, &mut make);
        Trie {
            nodes,
            root,
            declared_depth: depth,
        }
    }

    /// Assembles a trie from explicit nodes, checking that they form a rooted
    /// binary tree that uses every arena entry exactly once.
    pub fn from_nodes(nodes: Vec<TrieNode>, root: Option<NodeId>) -> Result<Trie> {
        let Some(root_id) = root else {
            if nodes.is_empty() {
                return Ok(Trie::empty());
            }
            return Err(Error::Structure("nodes without a root".into()));
        };
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![root_id];
        while let Some(id) = stack.pop() {
            let slot = seen
                .get_mut(id.0)
                .ok_or_else(|| Error::Structure(format!("node id {id} out of range")))?;
            if *slot {
                return Err(Error::Structure(format!("node {id} reached twice")));
            }
            *slot = true;
            let n = &nodes[id.0];
            if n.left.is_some() && n.left == n.right {
                return Err(Error::Structure(format!(
                    "node {id} has identical children"
                )));
            }
            stack.extend(n.right);
            stack.extend(n.left);
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(Error::Structure(format!("node n{orphan} is unreachable")));
        }
        let mut trie = Trie {
            nodes,
            root,
            declared_depth: 0,
        };
        trie.declared_depth = trie.stats().height;
        Ok(trie)
    }

    pub fn root(&self) -> Option<NodeId> {
        self.root
    }

    pub fn declared_depth(&self) -> usize {
        self.declared_depth
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &TrieNode {
        &self.nodes[id.0]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut TrieNode {
        &mut self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[TrieNode] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [TrieNode] {
        &mut self.nodes
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id.0].is_leaf()
    }

    /// Pre-order listing: node, left subtree, right subtree.
    pub fn traverse(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack: Vec<NodeId> = self.root.into_iter().collect();
        while let Some(id) = stack.pop() {
            out.push(id);
            let n = &self.nodes[id.0];
            stack.extend(n.right);
            stack.extend(n.left);
        }
        out
    }

    /// Edge distance from the root for every node.
    pub fn node_depths(&self) -> Vec<usize> {
        let mut depth = vec![0; self.nodes.len()];
        for id in self.traverse() {
            let n = &self.nodes[id.0];
            for child in [n.left, n.right].into_iter().flatten() {
                depth[child.0] = depth[id.0] + 1;
            }
        }
        depth
    }

    pub fn assign_feature_indices(&mut self, strategy: &FeatureAssignment) -> Result<()> {
        match strategy {
            FeatureAssignment::DepthCycling { input_dim } => {
                if *input_dim == 0 {
                    return Err(Error::contract("input_dim must be at least 1"));
                }
                let depths = self.node_depths();
                for (node, d) in self.nodes.iter_mut().zip(depths) {
                    node.feature_index = d % input_dim;
                }
            }
            FeatureAssignment::Explicit(map) => {
                if let Some(missing) = (0..self.nodes.len())
                    .map(NodeId)
                    .find(|id| !map.contains_key(id))
                {
                    return Err(Error::contract(format!(
                        "no feature index given for node {missing}"
                    )));
                }
                for (i, node) in self.nodes.iter_mut().enumerate() {
                    node.feature_index = map[&NodeId(i)];
                }
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> StructuralStats {
        // Returns (height, balanced) of the subtree at `id`.
        fn walk(nodes: &[TrieNode], id: Option<NodeId>) -> (usize, bool) {
            let Some(id) = id else { return (0, true) };
            let n = &nodes[id.0];
            let (hl, bl) = walk(nodes, n.left);
            let (hr, br) = walk(nodes, n.right);
            (1 + hl.max(hr), bl && br && hl.abs_diff(hr) <= 1)
        }
        let (height, is_balanced) = walk(&self.nodes, self.root);
        StructuralStats {
            node_count: self.nodes.len(),
            leaf_count: self.nodes.iter().filter(|n| n.is_leaf()).count(),
            height,
            is_balanced,
        }
    }

    /// `t_node = N·L·C`; one inference walks at most `height` nodes, so
    /// `per_inference = height · t_node` (the longest path for unbalanced tries).
    pub fn estimate_cost(&self, cm: &CostModel) -> CostEstimate {
        let t_node = cm.node_cost();
        CostEstimate {
            t_node,
            per_inference: self.stats().height as f64 * t_node,
        }
    }

    /// Element-wise mean of the Infer-mode outputs of every node on the route.
    pub fn aggregate_path_inference(&self, x: &[f64], policy: &RoutingPolicy) -> Result<Vec<f64>> {
        let path = self.route(x, policy)?;
        let mut sum: Option<Vec<f64>> = None;
        for id in &path.visited {
            let y = self.node(*id).net.predict(x)?;
            match &mut sum {
                None => sum = Some(y),
                Some(s) if s.len() == y.len() => s.iter_mut().zip(&y).for_each(|(a, b)| *a += b),
                Some(s) => {
                    return Err(Error::contract(format!(
                        "node {id} outputs width {} but the path so far has width {}",
                        y.len(),
                        s.len()
                    )))
                }
            }
        }
        let n = path.visited.len() as f64;
        Ok(sum.unwrap_or_default().into_iter().map(|v| v / n).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Network {
        Network::mini_nn(2, 2)
    }

    fn chain3() -> Trie {
        let mut a = TrieNode::new(tiny());
        let mut b = TrieNode::new(tiny());
        let c = TrieNode::new(tiny());
        a.right = Some(NodeId(1));
        b.right = Some(NodeId(2));
        Trie::from_nodes(vec![a, b, c], Some(NodeId(0))).unwrap()
    }

    #[test]
    fn balanced_sizes() {
        let t = build_trie(2, 4, 3, 1);
        assert_eq!(t.len(), 7);
        assert_eq!(
            t.stats(),
            StructuralStats {
                node_count: 7,
                leaf_count: 4,
                height: 3,
                is_balanced: true
            }
        );
        let one = build_trie(2, 4, 1, 1);
        assert_eq!(
            one.stats(),
            StructuralStats {
                node_count: 1,
                leaf_count: 1,
                height: 1,
                is_balanced: true
            }
        );
        assert!(one.is_leaf(one.root().unwrap()));
    }

    #[test]
    fn depth_zero_is_empty() {
        let t = build_trie(2, 4, 0, 1);
        assert!(t.is_empty());
        assert_eq!(t.root(), None);
        assert!(t.traverse().is_empty());
    }

    #[test]
    fn chain_is_unbalanced() {
        assert_eq!(
            chain3().stats(),
            StructuralStats {
                node_count: 3,
                leaf_count: 1,
                height: 3,
                is_balanced: false
            }
        );
    }

    #[test]
    fn preorder_traversal() {
        let t = build_trie(2, 2, 2, 0);
        assert_eq!(t.traverse(), vec![NodeId(0), NodeId(1), NodeId(2)]);
        let t = build_trie(2, 2, 3, 0);
        let order = t.traverse();
        assert_eq!(order.len(), 7);
        assert_eq!(order[0], t.root().unwrap());
        let left = t.node(t.root().unwrap()).left.unwrap();
        let left_subtree = [
            left,
            t.node(left).left.unwrap(),
            t.node(left).right.unwrap(),
        ];
        assert_eq!(&order[1..4], &left_subtree);
    }

    #[test]
    fn node_seeds_survive_deepening() {
        let shallow = build_trie(2, 3, 2, 9);
        let deep = build_trie(2, 3, 4, 9);
        let root = |t: &Trie| t.node(t.root().unwrap()).net.params_flat();
        let right = |t: &Trie| {
            t.node(t.node(t.root().unwrap()).right.unwrap())
                .net
                .params_flat()
        };
        assert_eq!(root(&shallow), root(&deep));
        assert_eq!(right(&shallow), right(&deep));
        assert_ne!(root(&deep), right(&deep));
    }

    #[test]
    fn from_nodes_rejects_cycles_and_orphans() {
        let mut a = TrieNode::new(tiny());
        a.left = Some(NodeId(0));
        assert!(Trie::from_nodes(vec![a], Some(NodeId(0))).is_err());
        let orphan = vec![TrieNode::new(tiny()), TrieNode::new(tiny())];
        assert!(Trie::from_nodes(orphan, Some(NodeId(0))).is_err());
        let mut shared = TrieNode::new(tiny());
        shared.left = Some(NodeId(1));
        shared.right = Some(NodeId(1));
        assert!(Trie::from_nodes(vec![shared, TrieNode::new(tiny())], Some(NodeId(0))).is_err());
    }

    #[test]
    fn depth_cycling_features() {
        let mut t = build_trie(2, 2, 3, 0);
        t.assign_feature_indices(&FeatureAssignment::DepthCycling { input_dim: 2 })
            .unwrap();
        let depths = t.node_depths();
        for (n, d) in t.nodes().iter().zip(depths) {
            assert_eq!(n.feature_index, [0, 1, 0][d]);
        }
        assert!(t
            .assign_feature_indices(&FeatureAssignment::DepthCycling { input_dim: 0 })
            .is_err());
    }

    #[test]
    fn explicit_features_need_every_node() {
        let mut t = build_trie(2, 2, 2, 0);
        let mut map: BTreeMap<NodeId, usize> = (0..3).map(|i| (NodeId(i), 5)).collect();
        t.assign_feature_indices(&FeatureAssignment::Explicit(map.clone()))
            .unwrap();
        assert!(t.nodes().iter().all(|n| n.feature_index == 5));
        map.remove(&NodeId(2));
        assert!(matches!(
            t.assign_feature_indices(&FeatureAssignment::Explicit(map)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn cost_estimates() {
        let cm = CostModel::for_network(&Network::mini_nn(2, 20), 1.0).unwrap();
        assert_eq!((cm.neurons, cm.layers), (21, 2));
        let t = build_trie(2, 20, 3, 0);
        assert_eq!(
            t.estimate_cost(&cm),
            CostEstimate {
                t_node: 42.0,
                per_inference: 126.0
            }
        );
        let free = CostModel::new(21, 2, 0.0).unwrap();
        assert_eq!(
            t.estimate_cost(&free),
            CostEstimate {
                t_node: 0.0,
                per_inference: 0.0
            }
        );
        let ten = CostModel::new(10, 1, 1.0).unwrap();
        assert_eq!(chain3().estimate_cost(&ten).per_inference, 30.0);
        assert!(CostModel::new(0, 1, 1.0).is_err());
    }

    #[test]
    fn aggregation_over_paths() {
        let t = Trie::build_with(3, 0, |_| tiny());
        let policy = RoutingPolicy::BitConsume;
        assert_eq!(
            t.aggregate_path_inference(&[0.0, 1.0], &policy).unwrap(),
            vec![0.5]
        );

        let single = build_trie(2, 5, 1, 4);
        let x = [0.25, 0.75];
        let direct = single.node(single.root().unwrap()).net.predict(&x).unwrap();
        let th = RoutingPolicy::FeatureThreshold { threshold: 0.5 };
        assert_eq!(single.aggregate_path_inference(&x, &th).unwrap(), direct);
    }

    #[test]
    fn aggregation_is_the_path_mean() {
        use crate::matrix::Matrix;
        use crate::nn::{Activation, Dense, LossKind};
        // Constant-output nets: sigmoid(b) with zero weights.
        let constant = |p: f64| {
            let b = (p / (1.0 - p)).ln();
            Network::new(
                2,
                vec![
                    Layer::Dense(Dense {
                        weight: Matrix::zeros(1, 2),
                        bias: vec![b],
                    }),
                    Layer::Activation(Activation::Sigmoid),
                ],
                LossKind::Bce,
            )
            .unwrap()
        };
        let mut root = TrieNode::new(constant(0.2));
        root.left = Some(NodeId(1));
        let t =
            Trie::from_nodes(vec![root, TrieNode::new(constant(0.6))], Some(NodeId(0))).unwrap();
        let y = t.aggregate_path_inference(&[0.0], &RoutingPolicy::BitConsume);
        assert!(y.is_err(), "width-1 input does not fit a width-2 network");
        let y = t
            .aggregate_path_inference(&[0.0, 0.0], &RoutingPolicy::BitConsume)
            .unwrap();
        assert!((y[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn aggregation_rejects_mixed_widths() {
        let mut root = TrieNode::new(tiny());
        root.left = Some(NodeId(1));
        let wide = Network::new(2, vec![Layer::dense(2, 3)], crate::nn::LossKind::Mse).unwrap();
        let t = Trie::from_nodes(vec![root, TrieNode::new(wide)], Some(NodeId(0))).unwrap();
        assert!(matches!(
            t.aggregate_path_inference(&[0.0, 1.0], &RoutingPolicy::BitConsume),
            Err(Error::Contract(_))
        ));
    }
}
