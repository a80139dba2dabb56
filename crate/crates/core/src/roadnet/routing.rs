//! Shortest-path routing with a deterministic node-id tie-break.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use super::{NodeId, RoadNetwork, RoadnetError};

/// Relative tolerance under which two path lengths count as equal.
const TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    node: NodeId,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl RoadNetwork {
    /// Shortest path by metric length from `from` to `to`, inclusive.
    ///
    /// Among equal-length shortest paths the lexicographically smallest node
    /// sequence wins.
    pub fn route(&self, from: NodeId, to: NodeId) -> Result<Vec<NodeId>, RoadnetError> {
        for n in [from, to] {
            if !self.is_road_node(n) {
                return Err(RoadnetError::NotRoutable(n));
            }
        }
        if from == to {
            return Ok(vec![from]);
        }
        let dist = self.distances_to(to, from);
        let Some(&total) = dist.get(&from) else {
            return Err(RoadnetError::Unreachable { from, to });
        };

        let mut path = vec![from];
        let mut current = from;
        while current != to {
            let here = dist[&current];
            let eps = TIE_EPSILON * total.max(1.0);
            // adjacency is sorted by target id, so the first match is the smallest
            let next = self
                .edges_from(current)
                .iter()
                .filter_map(|e| dist.get(&e.to).map(|d| (e, *d)))
                .find(|(e, d)| e.length + d <= here + eps)
                .map(|(e, _)| e.to)
                .ok_or(RoadnetError::Unreachable { from, to })?;
            path.push(next);
            current = next;
        }
        Ok(path)
    }

    /// Sum of edge lengths along a node path.
    pub fn path_length(&self, path: &[NodeId]) -> Option<f64> {
        path.windows(2)
            .map(|w| self.edge(w[0], w[1]).map(|e| e.length))
            .sum()
    }

    /// Reverse Dijkstra from `target`; stops once `source` and everything as
    /// close as it are settled.
    fn distances_to(&self, target: NodeId, source: NodeId) -> BTreeMap<NodeId, f64> {
        let mut settled: BTreeMap<NodeId, f64> = BTreeMap::new();
        let mut best: BTreeMap<NodeId, f64> = BTreeMap::new();
        let mut heap = BinaryHeap::new();
        best.insert(target, 0.0);
        heap.push(Entry { dist: 0.0, node: target });
        let mut limit = f64::INFINITY;
        while let Some(Entry { dist, node }) = heap.pop() {
            if dist > limit {
                break;
            }
            if settled.contains_key(&node) {
                continue;
            }
            settled.insert(node, dist);
            if node == source {
                limit = dist * (1.0 + TIE_EPSILON) + TIE_EPSILON;
            }
            for &(pred, w) in self.incoming(node) {
                let candidate = dist + w;
                if settled.contains_key(&pred) {
                    continue;
                }
                if best.get(&pred).is_none_or(|&d| candidate < d) {
                    best.insert(pred, candidate);
                    heap.push(Entry { dist: candidate, node: pred });
                }
            }
        }
        settled
    }
}
