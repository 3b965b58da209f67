//! Simulated round-synchronous communication between agents.
//!
//! Agents only see the true trajectories of their graph neighbours. Every
//! other entry in a view is refreshed by averaging the previous round's
//! estimates held across the closed neighbourhood. Termination flags spread
//! by flooding, one hop per round.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::planner::AgentView;

/// Attempts made to draw a connected random graph before giving up.
pub const RANDOM_GRAPH_RETRIES: usize = 1000;

/// How the topology is chosen in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSpec {
    Complete,
    /// Undirected 0-based edge list.
    Edges(Vec<(usize, usize)>),
    /// Erdős–Rényi `G(n, p)` redrawn until connected.
    Random { n: Option<usize>, p: f64, seed: u64 },
}

impl GraphSpec {
    pub fn build(&self, agents: usize) -> Result<CommGraph> {
        match self {
            GraphSpec::Complete => CommGraph::complete(agents),
            GraphSpec::Edges(edges) => CommGraph::from_edges(agents, edges),
            GraphSpec::Random { n, p, seed } => {
                if let Some(n) = n {
                    if *n != agents {
                        return Err(Error::Config(format!("random graph for {n} agents used with {agents} agents")));
                    }
                }
                CommGraph::random(agents, *p, *seed)
            }
        }
    }
}

/// Undirected connected communication topology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    neighbours: Vec<Vec<usize>>,
    diameter: usize,
}

impl CommGraph {
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("graph needs at least one vertex".into()));
        }
        let mut neighbours = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Config(format!("edge ({a}, {b}) outside {n} vertices")));
            }
            if a == b {
                return Err(Error::Config(format!("self-loop at vertex {a}")));
            }
            if !neighbours[a].contains(&b) {
                neighbours[a].push(b);
                neighbours[b].push(a);
            }
        }
        neighbours.iter_mut().for_each(|n| n.sort_unstable());
        let diameter = diameter(&neighbours).ok_or(Error::Disconnected)?;
        Ok(Self { neighbours, diameter })
    }

    pub fn complete(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        Self::from_edges(n, &edges)
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|a| (a - 1, a)).collect();
        Self::from_edges(n, &edges)
    }

    /// Seeded Erdős–Rényi graph; redraws from the same stream until connected.
    pub fn random(n: usize, p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("edge probability {p} outside [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..RANDOM_GRAPH_RETRIES {
            let mut edges = Vec::new();
            for a in 0..n {
                for b in a + 1..n {
                    if rng.random_bool(p) {
                        edges.push((a, b));
                    }
                }
            }
            match Self::from_edges(n, &edges) {
                Ok(g) => return Ok(g),
                Err(Error::Disconnected) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::Config(format!(
            "no connected G({n}, {p}) graph after {RANDOM_GRAPH_RETRIES} draws"
        )))
    }

    pub fn len(&self) -> usize {
        self.neighbours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbours.is_empty()
    }

    pub fn neighbours(&self, j: usize) -> &[usize] {
        &self.neighbours[j]
    }

    /// Longest shortest path between any two vertices.
    pub fn diameter(&self) -> usize {
        self.diameter
    }

    /// Edges with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, ns) in self.neighbours.iter().enumerate() {
            out.extend(ns.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    fn closed(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(j).chain(self.neighbours[j].iter().copied())
    }

    fn is_closed_neighbour(&self, j: usize, l: usize) -> bool {
        j == l || self.neighbours[j].binary_search(&l).is_ok()
    }
}

fn bfs(neighbours: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; neighbours.len()];
    dist[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].unwrap_or(0);
        for &w in &neighbours[v] {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// `None` when the graph is disconnected.
fn diameter(neighbours: &[Vec<usize>]) -> Option<usize> {
    let mut best = 0;
    for s in 0..neighbours.len() {
        for d in bfs(neighbours, s) {
            best = best.max(d?);
        }
    }
    Some(best)
}

/// One estimate exchange. Neighbour (and own) entries become the true current
/// trajectories; all others become the mean of the pre-exchange estimates
/// across the closed neighbourhood. Advances every view's round counter.
pub fn exchange<const N: usize, const M: usize>(
    graph: &CommGraph,
    views: &[AgentView<N, M>],
) -> Result<Vec<AgentView<N, M>>> {
    let n = graph.len();
    if views.len() != n {
        return Err(Error::Config(format!("{} views for a graph of {n} agents", views.len())));
    }
    let truth: Vec<&Trajectory<N, M>> = views.iter().map(|v| v.own()).collect();
    let mut out = Vec::with_capacity(n);
    for (j, view) in views.iter().enumerate() {
        let mut estimates = Vec::with_capacity(n);
        for l in 0..n {
            if graph.is_closed_neighbour(j, l) {
                estimates.push(truth[l].clone());
            } else {
                estimates.push(Trajectory::average(graph.closed(j).map(|k| &views[k].estimates()[l]))?);
            }
        }
        out.push(view.with_estimates(estimates, view.round() + 1));
    }
    Ok(out)
}

/// One flooding round: each agent unions its neighbours' previous flag sets
/// into its own. Returns, per agent, whether it now holds every flag.
pub fn flood_termination<const N: usize, const M: usize>(
    graph: &CommGraph,
    views: &mut [AgentView<N, M>],
) -> Vec<bool> {
    let before: Vec<Vec<bool>> = views.iter().map(|v| v.flags().to_vec()).collect();
    let merged = flood_flags(graph, &before);
    for (v, f) in views.iter_mut().zip(merged) {
        v.set_flags(f);
    }
    views.iter().map(|v| v.holds_all_flags()).collect()
}

/// Flag-set union over closed neighbourhoods, reading only `flags`.
pub fn flood_flags(graph: &CommGraph, flags: &[Vec<bool>]) -> Vec<Vec<bool>> {
    (0..graph.len())
        .map(|j| {
            let mut f = flags[j].clone();
            for &k in graph.neighbours(j) {
                for (a, b) in f.iter_mut().zip(&flags[k]) {
                    *a |= *b;
                }
            }
            f
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph_from_edges() {
        let g = CommGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(g.diameter(), 2);
        assert_eq!(g.neighbours(1), &[0, 2]);
        assert_eq!(g.edges(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn single_vertex() {
        let g = CommGraph::from_edges(1, &[]).unwrap();
        assert_eq!(g.diameter(), 0);
        assert!(g.neighbours(0).is_empty());
    }

    #[test]
    fn invalid_graphs() {
        assert_eq!(CommGraph::from_edges(3, &[(0, 1)]), Err(Error::Disconnected));
        assert!(CommGraph::from_edges(2, &[(0, 0)]).is_err());
        assert!(CommGraph::from_edges(2, &[(0, 2)]).is_err());
        assert!(CommGraph::random(4, 1.5, 0).is_err());
        assert!(CommGraph::random(5, 0.0, 0).is_err());
    }

    #[test]
    fn random_graph_is_deterministic() {
        let a = CommGraph::random(10, 0.4, 17).unwrap();
        let b = CommGraph::random(10, 0.4, 17).unwrap();
        assert_eq!(a.edges(), b.edges());
        let c = CommGraph::random(10, 0.4, 18).unwrap();
        assert_ne!(a.edges(), c.edges());
    }

    #[test]
    fn diameters() {
        assert_eq!(CommGraph::complete(6).unwrap().diameter(), 1);
        assert_eq!(CommGraph::path(10).unwrap().diameter(), 9);
        let star = CommGraph::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        assert_eq!(star.diameter(), 2);
    }

    #[test]
    fn flooding_on_paths_and_complete_graphs() {
        let rounds_to_stop = |g: &CommGraph| {
            let n = g.len();
            let mut flags: Vec<Vec<bool>> = (0..n).map(|j| (0..n).map(|l| l == j).collect()).collect();
            let mut round = 0;
            while !flags.iter().all(|f| f.iter().all(|&b| b)) {
                flags = flood_flags(g, &flags);
                round += 1;
            }
            round
        };
        assert_eq!(rounds_to_stop(&CommGraph::path(10).unwrap()), 9);
        assert_eq!(rounds_to_stop(&CommGraph::complete(7).unwrap()), 1);
        let g = CommGraph::random(9, 0.3, 4).unwrap();
        assert_eq!(rounds_to_stop(&g), g.diameter());
    }

    #[test]
    fn spec_builds() {
        assert_eq!(GraphSpec::Complete.build(4).unwrap().diameter(), 1);
        assert!(GraphSpec::Random { n: Some(3), p: 0.5, seed: 1 }.build(4).is_err());
        assert!(GraphSpec::Edges(vec![(0, 1)]).build(2).is_ok());
    }
}
