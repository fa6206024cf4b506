use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::net::RoadNetwork;

/// Undirected simple graph with string labels, the view the dominating-set
/// routines work on. Labels order ties (lexicographic selection).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    labels: Vec<String>,
    adj: Vec<Vec<usize>>,
}

impl AdjacencyGraph {
    /// Build from an edge list. Duplicate edges are merged, self loops ignored.
    pub fn new(labels: Vec<String>, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); labels.len()];
        for &(a, b) in edges {
            if a != b && !adj[a].contains(&b) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Self { labels, adj }
    }

    pub fn from_network(net: &RoadNetwork) -> Self {
        let labels = net.ids().iter().map(|id| id.to_string()).collect();
        let edges: Vec<_> = (0..net.len())
            .flat_map(|v| net.neighbor_indices(v).map(move |u| (v, u)))
            .filter(|(v, u)| v < u)
            .collect();
        Self::new(labels, &edges)
    }

    /// Grid graph with `row-col` labels, without any road geometry.
    pub fn grid(rows: usize, cols: usize) -> Self {
        let labels = (1..=rows)
            .flat_map(|r| (1..=cols).map(move |c| format!("{r}-{c}")))
            .collect();
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    edges.push((v, v + 1));
                }
                if r + 1 < rows {
                    edges.push((v, v + cols));
                }
            }
        }
        Self::new(labels, &edges)
    }

    /// Random connected graph on `n` vertices with maximum degree
    /// `max_degree`: a random spanning tree plus `extra` attempted chords.
    pub fn random_connected(n: usize, max_degree: usize, extra: usize, seed: u64) -> Self {
        assert!(max_degree >= 2 || n <= 2, "a connected graph needs degree >= 2");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<String> = (0..n).map(|i| format!("v{i:02}")).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut degree = vec![0usize; n];
        let mut edges = Vec::new();
        for i in 1..n {
            let open: Vec<usize> = order[..i]
                .iter()
                .copied()
                .filter(|&u| degree[u] < max_degree)
                .collect();
            let u = open[rng.random_range(0..open.len())];
            let v = order[i];
            edges.push((u, v));
            degree[u] += 1;
            degree[v] += 1;
        }
        for _ in 0..extra {
            if n < 2 {
                break;
            }
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b || degree[a] >= max_degree || degree[b] >= max_degree {
                continue;
            }
            if edges.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a)) {
                continue;
            }
            edges.push((a, b));
            degree[a] += 1;
            degree[b] += 1;
        }
        Self::new(labels, &edges)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        if self.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &u in &self.adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Definition-style scan: every vertex outside `set` has a neighbor in it.
    pub fn is_dominating(&self, in_set: &[bool]) -> bool {
        (0..self.len()).all(|v| in_set[v] || self.adj[v].iter().any(|&u| in_set[u]))
    }

    /// The integer-program constraints `sum_{u in NB_v} x_u + x_v <= |NB_v|`
    /// for every v, where `leaf[v]` is x_v = 1 (v is not a center).
    pub fn leaf_constraints_hold(&self, leaf: &[bool]) -> bool {
        (0..self.len()).all(|v| {
            let sum = self.adj[v].iter().filter(|&&u| leaf[u]).count() + usize::from(leaf[v]);
            sum <= self.degree(v)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_graph_matches_network_graph() {
        let net = crate::net::make_grid(3, 4, 100.0, 100.0, 1).unwrap();
        assert_eq!(AdjacencyGraph::from_network(&net), AdjacencyGraph::grid(3, 4));
    }

    proptest! {
        #[test]
        fn random_graphs_are_connected_and_bounded(n in 1usize..16, extra in 0usize..20, seed in any::<u64>()) {
            let g = AdjacencyGraph::random_connected(n, 4, extra, seed);
            prop_assert_eq!(g.len(), n);
            prop_assert!(g.is_connected());
            prop_assert!(g.max_degree() <= 4);
        }

        /// The leaf-constraint form and the dominating-set definition agree
        /// on every 0/1 assignment.
        #[test]
        fn leaf_constraints_equal_domination(n in 1usize..12, extra in 0usize..10, seed in any::<u64>(), bits in any::<u32>()) {
            let g = AdjacencyGraph::random_connected(n, 4, extra, seed);
            let center: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
            let leaf: Vec<bool> = center.iter().map(|c| !c).collect();
            prop_assert_eq!(g.is_dominating(&center), g.leaf_constraints_hold(&leaf));
        }
    }
}
