//! Per-platform propagation trees rooted at the claim, the GCN adjacency
//! operator, and breadth-first structural statistics.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::dataset::{EngagementNode, Platform, ROOT_PARENT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("engagement {id} belongs to claim {found_claim}/{found_platform}, expected {claim}/{platform}")]
    Foreign {
        id: String,
        claim: String,
        platform: Platform,
        found_claim: String,
        found_platform: Platform,
    },
    #[error("engagement {id} has unresolvable parent {parent}")]
    UnresolvedParent { id: String, parent: String },
    #[error("duplicate engagement id {0}")]
    DuplicateNode(String),
    #[error("cyclic parent chain through engagement {0}")]
    Cycle(String),
}

/// A claim-rooted reply/repost tree on one platform.
///
/// Node 0 is the claim; node `i + 1` is `engagements()[i]`. Engagements are
/// ordered by `(timestamp, id)` with missing timestamps first.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationTree {
    platform: Platform,
    claim_id: String,
    engagements: Vec<EngagementNode>,
    parents: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub depth: usize,
    pub width: usize,
}

/// Builds the tree for one claim on one platform.
pub fn build_tree(
    claim_id: &str,
    platform: Platform,
    engagements: &[EngagementNode],
) -> Result<PropagationTree, GraphError> {
    for e in engagements {
        if e.claim_id != claim_id || e.platform != platform {
            return Err(GraphError::Foreign {
                id: e.id.clone(),
                claim: claim_id.to_string(),
                platform,
                found_claim: e.claim_id.clone(),
                found_platform: e.platform,
            });
        }
    }
    let mut sorted: Vec<EngagementNode> = engagements.to_vec();
    sorted.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));

    let mut index: HashMap<&str, usize> = HashMap::with_capacity(sorted.len());
    for (i, e) in sorted.iter().enumerate() {
        if index.insert(e.id.as_str(), i + 1).is_some() {
            return Err(GraphError::DuplicateNode(e.id.clone()));
        }
    }
    let mut parents = Vec::with_capacity(sorted.len() + 1);
    parents.push(None);
    for e in &sorted {
        let p = if e.parent_id == ROOT_PARENT {
            0
        } else {
            *index
                .get(e.parent_id.as_str())
                .ok_or_else(|| GraphError::UnresolvedParent {
                    id: e.id.clone(),
                    parent: e.parent_id.clone(),
                })?
        };
        parents.push(Some(p));
    }

    // Every chain must terminate at the root.
    let n = parents.len();
    let mut reaches_root = vec![false; n];
    reaches_root[0] = true;
    let mut on_chain = vec![false; n];
    for start in 1..n {
        let mut chain = Vec::new();
        let mut cur = start;
        while !reaches_root[cur] {
            if on_chain[cur] {
                return Err(GraphError::Cycle(sorted[cur - 1].id.clone()));
            }
            on_chain[cur] = true;
            chain.push(cur);
            cur = parents[cur].expect("non-root node has a parent");
        }
        for c in chain {
            reaches_root[c] = true;
            on_chain[c] = false;
        }
    }

    Ok(PropagationTree {
        platform,
        claim_id: claim_id.to_string(),
        engagements: sorted,
        parents,
    })
}

impl PropagationTree {
    pub fn platform(&self) -> Platform {
        self.platform
    }

    pub fn claim_id(&self) -> &str {
        &self.claim_id
    }

    pub fn engagements(&self) -> &[EngagementNode] {
        &self.engagements
    }

    /// Number of nodes including the claim root (`M_k + 1`).
    pub fn node_count(&self) -> usize {
        self.parents.len()
    }

    pub fn edge_count(&self) -> usize {
        self.parents.len() - 1
    }

    pub fn node_ids(&self) -> Vec<&str> {
        std::iter::once(self.claim_id.as_str())
            .chain(self.engagements.iter().map(|e| e.id.as_str()))
            .collect()
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parents[node]
    }

    /// `(parent, child)` index pairs, one per non-root node.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.parents
            .iter()
            .enumerate()
            .filter_map(|(child, p)| p.map(|p| (p, child)))
            .collect()
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.node_count()];
        for (p, c) in self.edges() {
            out[p].push(c);
        }
        out
    }

    /// Depth of every node from a breadth-first walk (root depth 0).
    pub fn depths(&self) -> Vec<usize> {
        let children = self.children();
        let mut depth = vec![usize::MAX; self.node_count()];
        depth[0] = 0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            for &v in &children[u] {
                depth[v] = depth[u] + 1;
                queue.push_back(v);
            }
        }
        depth
    }

    /// Maximum number of nodes sharing one depth.
    pub fn tree_width(&self) -> usize {
        level_sizes(&self.depths()).into_iter().max().unwrap_or(1)
    }

    pub fn stats(&self) -> TreeStats {
        let depths = self.depths();
        let levels = level_sizes(&depths);
        TreeStats {
            node_count: self.node_count(),
            edge_count: self.edge_count(),
            depth: levels.len() - 1,
            width: levels.into_iter().max().unwrap_or(1),
        }
    }

    /// Same tree restricted to a reordering of its engagements; used to check
    /// order-independence of everything computed from a tree.
    pub fn permuted(&self, order: &[usize]) -> PropagationTree {
        debug_assert_eq!(order.len(), self.engagements.len());
        // new position of old node index
        let mut new_of_old = vec![0usize; self.node_count()];
        for (new_pos, &old) in order.iter().enumerate() {
            new_of_old[old + 1] = new_pos + 1;
        }
        let engagements: Vec<_> = order.iter().map(|&i| self.engagements[i].clone()).collect();
        let mut parents = vec![None; self.node_count()];
        for (new_pos, &old) in order.iter().enumerate() {
            parents[new_pos + 1] = self.parents[old + 1].map(|p| new_of_old[p]);
        }
        PropagationTree {
            platform: self.platform,
            claim_id: self.claim_id.clone(),
            engagements,
            parents,
        }
    }

    /// `D^{-1/2} (A + I) D^{-1/2}` over the undirected tree edges.
    pub fn normalized_adjacency(&self) -> Tensor {
        let n = self.node_count();
        let mut a = Tensor::identity(n);
        for (p, c) in self.edges() {
            a.set(p, c, 1.0);
            a.set(c, p, 1.0);
        }
        let degree: Vec<f64> = (0..n).map(|i| a.row_slice(i).iter().sum()).collect();
        for i in 0..n {
            for j in 0..n {
                let v = a.get(i, j);
                if v != 0.0 {
                    a.set(i, j, v / (degree[i] * degree[j]).sqrt());
                }
            }
        }
        a
    }
}

fn level_sizes(depths: &[usize]) -> Vec<usize> {
    let max = depths.iter().copied().max().unwrap_or(0);
    let mut sizes = vec![0usize; max + 1];
    for &d in depths {
        sizes[d] += 1;
    }
    sizes
}
