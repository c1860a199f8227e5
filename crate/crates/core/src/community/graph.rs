use std::collections::BTreeMap;

use crate::network::{FlowNetwork, FlowWeight};

use super::CommunityError;

/// Directed weighted graph with labelled nodes.
///
/// Parallel edges are merged; self-loops are allowed (they appear after
/// aggregation). Adjacency lists are sorted by neighbour index.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    labels: Vec<String>,
    out_adj: Vec<Vec<(usize, f64)>>,
    in_adj: Vec<Vec<(usize, f64)>>,
    out_strength: Vec<f64>,
    in_strength: Vec<f64>,
    total: f64,
}

impl WeightedDigraph {
    /// Builds a graph from `(from, to, weight)` triples. Zero weights are
    /// ignored; negative or non-finite weights are rejected.
    pub fn new(labels: Vec<String>, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self, CommunityError> {
        let n = labels.len();
        let mut raw: Vec<(usize, usize, f64)> = Vec::new();
        for (u, v, w) in edges {
            if u >= n || v >= n {
                return Err(CommunityError::NodeOutOfRange { node: u.max(v), n });
            }
            if !w.is_finite() || w < 0.0 {
                return Err(CommunityError::BadWeight(w));
            }
            if w > 0.0 {
                raw.push((u, v, w));
            }
        }
        // canonical order so duplicate merging does not depend on input order
        raw.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(raw.len());
        for (u, v, w) in raw {
            match merged.last_mut() {
                Some(last) if last.0 == u && last.1 == v => last.2 += w,
                _ => merged.push((u, v, w)),
            }
        }
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for &(u, v, w) in &merged {
            out_adj[u].push((v, w));
            in_adj[v].push((u, w));
        }
        for l in &mut in_adj {
            l.sort_by_key(|x| x.0);
        }
        let out_strength: Vec<f64> = out_adj.iter().map(|l| l.iter().map(|x| x.1).sum()).collect();
        let in_strength: Vec<f64> = in_adj.iter().map(|l| l.iter().map(|x| x.1).sum()).collect();
        let total = merged.iter().map(|x| x.2).sum();
        Ok(Self { labels, out_adj, in_adj, out_strength, in_strength, total })
    }

    /// Graph over the network's nodes weighted by `weight`; with `symmetrize`
    /// each pair gets `w_ij + w_ji` in both directions.
    pub fn from_flow_network(net: &FlowNetwork, weight: FlowWeight, symmetrize: bool) -> Self {
        let labels: Vec<String> = net.nodes.iter().map(|c| c.to_string()).collect();
        let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let mut edges = Vec::new();
        for e in &net.edges {
            let (Some(&u), Some(&v)) = (index.get(e.origin.as_str()), index.get(e.destination.as_str())) else {
                continue;
            };
            let w = e.weight(weight);
            edges.push((u, v, w));
            if symmetrize {
                edges.push((v, u, w));
            }
        }
        Self::new(labels, edges).expect("flow weights are finite and non-negative")
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Sum of all edge weights.
    pub fn total_weight(&self) -> f64 {
        self.total
    }

    pub fn out_strength(&self, i: usize) -> f64 {
        self.out_strength[i]
    }

    pub fn in_strength(&self, i: usize) -> f64 {
        self.in_strength[i]
    }

    pub fn out_edges(&self, i: usize) -> &[(usize, f64)] {
        &self.out_adj[i]
    }

    pub fn in_edges(&self, i: usize) -> &[(usize, f64)] {
        &self.in_adj[i]
    }

    /// All edges as `(from, to, weight)`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.out_adj.iter().enumerate().flat_map(|(u, l)| l.iter().map(move |&(v, w)| (u, v, w)))
    }

    /// Weight of edge `u -> v` (0 when absent).
    pub fn weight(&self, u: usize, v: usize) -> f64 {
        self.out_adj[u].binary_search_by_key(&v, |x| x.0).map_or(0.0, |k| self.out_adj[u][k].1)
    }

    /// Sub-graph on `nodes` keeping only edges with both ends inside.
    /// Node `k` of the result is `nodes[k]`.
    pub fn induced(&self, nodes: &[usize]) -> Self {
        let pos: BTreeMap<usize, usize> = nodes.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let labels = nodes.iter().map(|&i| self.labels[i].clone()).collect();
        let edges = nodes.iter().enumerate().flat_map(|(k, &i)| {
            let pos = &pos;
            self.out_adj[i].iter().filter_map(move |&(j, w)| pos.get(&j).map(|&kj| (k, kj, w)))
        });
        Self::new(labels, edges.collect::<Vec<_>>()).expect("weights already validated")
    }

    /// Same graph with nodes reordered: node `k` of the result is `order[k]`.
    pub(crate) fn permuted(&self, order: &[usize]) -> Self {
        self.induced(order)
    }

    /// Collapses each community to a node; internal weight becomes a self-loop.
    pub(crate) fn aggregate(&self, assignment: &[usize], n_comm: usize) -> Self {
        let labels = (0..n_comm).map(|c| c.to_string()).collect();
        let edges = self.edges().map(|(u, v, w)| (assignment[u], assignment[v], w)).collect::<Vec<_>>();
        Self::new(labels, edges).expect("weights already validated")
    }
}

/// Directed modularity with a strength-preserving null model:
///
/// `Q = (1/W) Σ_ij [w_ij - s_i^out s_j^in / W] δ(c_i, c_j)`.
///
/// Labels in `assignment` may be arbitrary integers.
pub fn modularity(graph: &WeightedDigraph, assignment: &[usize]) -> Result<f64, CommunityError> {
    if assignment.len() != graph.node_count() {
        return Err(CommunityError::AssignmentLength { expected: graph.node_count(), got: assignment.len() });
    }
    let w = graph.total_weight();
    if !(w > 0.0) {
        return Err(CommunityError::ZeroWeight);
    }
    let mut internal: BTreeMap<usize, f64> = BTreeMap::new();
    let mut s_out: BTreeMap<usize, f64> = BTreeMap::new();
    let mut s_in: BTreeMap<usize, f64> = BTreeMap::new();
    for (u, v, x) in graph.edges() {
        if assignment[u] == assignment[v] {
            *internal.entry(assignment[u]).or_default() += x;
        }
    }
    for (i, &c) in assignment.iter().enumerate() {
        *s_out.entry(c).or_default() += graph.out_strength(i);
        *s_in.entry(c).or_default() += graph.in_strength(i);
    }
    let mut q = 0.0;
    for (c, so) in &s_out {
        let wc = internal.get(c).copied().unwrap_or(0.0);
        q += wc / w - so * s_in[c] / (w * w);
    }
    Ok(q)
}
