//! Modularity maximization.
//!
//! One run alternates two phases until modularity stops increasing:
//!
//! * a Louvain sweep: nodes, visited in seeded random order, move to the
//!   neighbouring community with the best positive gain; communities are
//!   then collapsed into nodes and the sweep repeats on the smaller graph;
//! * a refinement pass on the original nodes: single-node relocations
//!   (including splitting a node off into a new community), a split attempt
//!   for every community, and greedy pairwise merges.
//!
//! Several runs with independent random streams are made and the best
//! partition kept; the trivial one-community partition (Q = 0) is always a
//! candidate. Gains within [`GAIN_EPS`] of each other count as ties and
//! resolve to the lowest community id.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::{modularity, WeightedDigraph};
use super::CommunityError;

/// Smallest modularity gain treated as an improvement.
pub const GAIN_EPS: f64 = 1e-12;

pub const DEFAULT_RESTARTS: usize = 20;

/// Community assignment with its modularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Community of each node; ids are `0..k`, numbered by first appearance.
    pub assignment: Vec<usize>,
    pub q: f64,
}

impl Partition {
    pub fn community_count(&self) -> usize {
        self.assignment.iter().max().map_or(0, |m| m + 1)
    }

    /// Node indices of each community, in id order.
    pub fn communities(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.community_count()];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub seed: u64,
    pub restarts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { seed: 0, restarts: DEFAULT_RESTARTS }
    }
}

/// Renumbers community ids to `0..k` by first appearance.
pub fn compact_labels(assignment: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = assignment
        .iter()
        .map(|c| {
            let next = map.len();
            *map.entry(*c).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Highest-modularity partition found over `config.restarts` runs.
///
/// The result only depends on the graph (node labels and weights), the seed
/// and the number of restarts: nodes are processed in label order
/// internally, so the input order of nodes does not matter. A graph without
/// edges yields the one-community partition with `q = 0`.
pub fn optimize_partition(graph: &WeightedDigraph, config: &OptimizerConfig) -> Result<Partition, CommunityError> {
    let n = graph.node_count();
    if n == 0 {
        return Err(CommunityError::EmptyGraph);
    }
    if !(graph.total_weight() > 0.0) {
        return Ok(Partition { assignment: vec![0; n], q: 0.0 });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| graph.labels()[a].cmp(&graph.labels()[b]).then(a.cmp(&b)));
    let canon = graph.permuted(&order);

    let runs: Vec<(f64, Vec<usize>)> = (0..config.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(r as u64);
            let a = single_run(&canon, &mut rng);
            (modularity(&canon, &a).expect("positive weight"), a)
        })
        .collect();
    let q_max = runs.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let (q_best, best) = runs.into_iter().find(|r| r.0 >= q_max - GAIN_EPS).expect("at least one run");

    let mut assignment = vec![0; n];
    if q_best > 0.0 {
        for (k, &i) in order.iter().enumerate() {
            assignment[i] = best[k];
        }
    }
    let (assignment, _) = compact_labels(&assignment);
    let q = modularity(graph, &assignment)?;
    Ok(Partition { assignment, q })
}

fn single_run(g: &WeightedDigraph, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = g.node_count();
    let mut assign: Vec<usize> = (0..n).collect();
    louvain(g, &mut assign, rng);
    let mut q = modularity(g, &assign).expect("positive weight");
    loop {
        refine(g, &mut assign, rng);
        louvain(g, &mut assign, rng);
        let q2 = modularity(g, &assign).expect("positive weight");
        if q2 <= q + GAIN_EPS {
            break;
        }
        q = q2;
    }
    compact_labels(&assign).0
}

/// Multi-level local moving starting from `assign`.
fn louvain(g: &WeightedDigraph, assign: &mut Vec<usize>, rng: &mut ChaCha8Rng) {
    let (a, k) = compact_labels(assign);
    *assign = a;
    let mut level = g.aggregate(assign, k);
    loop {
        let m = level.node_count();
        let mut mover = Mover::new(&level, (0..m).collect());
        let nodes: Vec<usize> = (0..m).collect();
        if !mover.sweep(&nodes, rng, false, |_| true) {
            break;
        }
        let (comm, k2) = compact_labels(&mover.comm);
        for a in assign.iter_mut() {
            *a = comm[*a];
        }
        if k2 == m {
            break;
        }
        level = level.aggregate(&comm, k2);
    }
}

fn refine(g: &WeightedDigraph, assign: &mut Vec<usize>, rng: &mut ChaCha8Rng) {
    let n = g.node_count();
    let all: Vec<usize> = (0..n).collect();
    loop {
        let mut improved = false;
        let (a, _) = compact_labels(assign);
        let mut mover = Mover::new(g, a);
        improved |= mover.sweep(&all, rng, true, |_| true);
        improved |= split_pass(&mut mover, rng);
        improved |= mover.merge_greedy(|_| true);
        *assign = mover.comm;
        if !improved {
            break;
        }
    }
}

/// Tries to break up each community by re-running local moves on its
/// members from singletons, judged by full-graph modularity.
fn split_pass(mover: &mut Mover<'_>, rng: &mut ChaCha8Rng) -> bool {
    let n = mover.g.node_count();
    let mut improved = false;
    let (a, k) = compact_labels(&mover.comm);
    mover.comm = a;
    for c in 0..k {
        let members: Vec<usize> = (0..n).filter(|&i| mover.comm[i] == c).collect();
        if members.len() < 2 {
            continue;
        }
        let before = mover.comm.clone();
        let q_before = modularity(mover.g, &before).expect("positive weight");
        for (k, &i) in members.iter().enumerate() {
            mover.comm[i] = n + k;
        }
        mover.recompute();
        mover.sweep(&members, rng, false, |x| x >= n);
        mover.merge_greedy(|x| x >= n);
        let q_after = modularity(mover.g, &mover.comm).expect("positive weight");
        if q_after > q_before + GAIN_EPS {
            improved = true;
        } else {
            mover.comm = before;
        }
        mover.recompute();
    }
    improved
}

/// Incremental modularity bookkeeping over community ids `0..2n`.
struct Mover<'a> {
    g: &'a WeightedDigraph,
    w: f64,
    comm: Vec<usize>,
    tot_out: Vec<f64>,
    tot_in: Vec<f64>,
    size: Vec<usize>,
    link_out: Vec<f64>,
    link_in: Vec<f64>,
    touched: Vec<usize>,
}

impl<'a> Mover<'a> {
    fn new(g: &'a WeightedDigraph, comm: Vec<usize>) -> Self {
        let cap = 2 * g.node_count().max(1);
        let mut m = Self {
            g,
            w: g.total_weight(),
            comm,
            tot_out: vec![0.0; cap],
            tot_in: vec![0.0; cap],
            size: vec![0; cap],
            link_out: vec![0.0; cap],
            link_in: vec![0.0; cap],
            touched: Vec::new(),
        };
        m.recompute();
        m
    }

    fn recompute(&mut self) {
        self.tot_out.iter_mut().for_each(|x| *x = 0.0);
        self.tot_in.iter_mut().for_each(|x| *x = 0.0);
        self.size.iter_mut().for_each(|x| *x = 0);
        for (i, &c) in self.comm.iter().enumerate() {
            self.tot_out[c] += self.g.out_strength(i);
            self.tot_in[c] += self.g.in_strength(i);
            self.size[c] += 1;
        }
    }

    /// Gain of inserting the (currently detached) node `i` into `c`.
    fn gain(&self, i: usize, c: usize) -> f64 {
        (self.link_out[c] + self.link_in[c]) / self.w
            - (self.g.out_strength(i) * self.tot_in[c] + self.g.in_strength(i) * self.tot_out[c]) / (self.w * self.w)
    }

    fn gather_links(&mut self, i: usize) {
        for &c in &self.touched {
            self.link_out[c] = 0.0;
            self.link_in[c] = 0.0;
        }
        self.touched.clear();
        for &(j, w) in self.g.out_edges(i) {
            if j != i {
                let c = self.comm[j];
                if self.link_out[c] == 0.0 && self.link_in[c] == 0.0 {
                    self.touched.push(c);
                }
                self.link_out[c] += w;
            }
        }
        for &(j, w) in self.g.in_edges(i) {
            if j != i {
                let c = self.comm[j];
                if self.link_out[c] == 0.0 && self.link_in[c] == 0.0 {
                    self.touched.push(c);
                }
                self.link_in[c] += w;
            }
        }
        self.touched.sort_unstable();
        self.touched.dedup();
    }

    fn detach(&mut self, i: usize) {
        let c = self.comm[i];
        self.tot_out[c] -= self.g.out_strength(i);
        self.tot_in[c] -= self.g.in_strength(i);
        self.size[c] -= 1;
    }

    fn attach(&mut self, i: usize, c: usize) {
        self.comm[i] = c;
        self.tot_out[c] += self.g.out_strength(i);
        self.tot_in[c] += self.g.in_strength(i);
        self.size[c] += 1;
    }

    /// Repeated passes of best-gain single-node moves over `nodes` until a
    /// pass makes no strict improvement. Only communities accepted by
    /// `allowed` are targets; with `allow_new` a node may also start a new
    /// community. Returns whether anything improved.
    fn sweep(&mut self, nodes: &[usize], rng: &mut ChaCha8Rng, allow_new: bool, allowed: impl Fn(usize) -> bool) -> bool {
        let mut any = false;
        let mut order = nodes.to_vec();
        loop {
            self.recompute();
            order.shuffle(rng);
            let mut moved = false;
            for &i in &order {
                self.gather_links(i);
                let c_old = self.comm[i];
                self.detach(i);
                let stay = self.gain(i, c_old);
                let mut best: Option<(usize, f64)> = None;
                let mut consider = |c: usize, g: f64| {
                    if g > stay + GAIN_EPS && best.map_or(true, |(_, bg)| g > bg + GAIN_EPS) {
                        best = Some((c, g));
                    }
                };
                for &c in &self.touched {
                    if c != c_old && allowed(c) {
                        consider(c, self.gain(i, c));
                    }
                }
                if allow_new && self.size[c_old] > 0 {
                    if let Some(e) = (0..self.size.len()).find(|&c| self.size[c] == 0 && allowed(c)) {
                        consider(e, 0.0);
                    }
                }
                match best {
                    Some((c, _)) => {
                        self.attach(i, c);
                        moved = true;
                    }
                    None => self.attach(i, c_old),
                }
            }
            if !moved {
                break;
            }
            any = true;
        }
        self.recompute();
        any
    }

    /// Merges the best pair of communities while the gain is positive.
    fn merge_greedy(&mut self, allowed: impl Fn(usize) -> bool) -> bool {
        let mut any = false;
        loop {
            self.recompute();
            let mut between: std::collections::BTreeMap<(usize, usize), f64> = std::collections::BTreeMap::new();
            for (u, v, w) in self.g.edges() {
                let (a, b) = (self.comm[u], self.comm[v]);
                if a != b && allowed(a) && allowed(b) {
                    *between.entry((a.min(b), a.max(b))).or_default() += w;
                }
            }
            let mut best: Option<((usize, usize), f64)> = None;
            for (&(a, b), &w_ab) in &between {
                let g = w_ab / self.w - (self.tot_out[a] * self.tot_in[b] + self.tot_out[b] * self.tot_in[a]) / (self.w * self.w);
                if g > GAIN_EPS && best.map_or(true, |(_, bg)| g > bg + GAIN_EPS) {
                    best = Some(((a, b), g));
                }
            }
            let Some(((a, b), _)) = best else { break };
            for c in self.comm.iter_mut() {
                if *c == b {
                    *c = a;
                }
            }
            any = true;
        }
        self.recompute();
        any
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::community::exhaustive::{best_partition_by_enumeration, same_grouping};
    use proptest::prelude::*;
    use rand::Rng;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i:02}")).collect()
    }

    fn cfg(seed: u64) -> OptimizerConfig {
        OptimizerConfig { seed, restarts: 20 }
    }

    #[test]
    fn single_node() {
        let g = WeightedDigraph::new(labels(1), []).unwrap();
        let p = optimize_partition(&g, &cfg(0)).unwrap();
        assert_eq!(p, Partition { assignment: vec![0], q: 0.0 });
        let g = WeightedDigraph::new(labels(1), [(0, 0, 2.0)]).unwrap();
        let p = optimize_partition(&g, &cfg(0)).unwrap();
        assert_eq!(p.assignment, vec![0]);
        assert!(p.q.abs() < 1e-15);
    }

    #[test]
    fn disconnected_three_cycles() {
        let edges = vec![(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0), (3, 4, 1.0), (4, 5, 1.0), (5, 3, 1.0)];
        let g = WeightedDigraph::new(labels(6), edges.clone()).unwrap();
        let p = optimize_partition(&g, &cfg(3)).unwrap();
        assert_eq!(p.assignment, vec![0, 0, 0, 1, 1, 1]);
        let (q_best, _, count) = best_partition_by_enumeration(6, &edges);
        assert_eq!(count, 203);
        assert!((p.q - q_best).abs() < 1e-12);
        assert!((p.q - 0.5).abs() < 1e-15);
    }

    fn planted_blocks(blocks: usize, size: usize, intra: f64, inter: f64) -> (Vec<(usize, usize, f64)>, Vec<usize>) {
        let n = blocks * size;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    edges.push((i, j, if i / size == j / size { intra } else { inter }));
                }
            }
        }
        (edges, (0..n).map(|i| i / size).collect())
    }

    #[test]
    fn recovers_planted_four_blocks() {
        let (edges, planted) = planted_blocks(4, 5, 10.0, 0.1);
        let g = WeightedDigraph::new(labels(20), edges).unwrap();
        let p = optimize_partition(&g, &cfg(7)).unwrap();
        assert_eq!(p.assignment, planted);
        // no single-node move improves on the planted partition
        let q_planted = modularity(&g, &planted).unwrap();
        for i in 0..20 {
            for c in 0..5 {
                let mut a = planted.clone();
                a[i] = c;
                assert!(modularity(&g, &a).unwrap() <= q_planted + 1e-15);
            }
        }
    }

    #[test]
    fn structureless_graph_stays_whole() {
        let (edges, _) = planted_blocks(1, 4, 1.0, 0.0);
        let g = WeightedDigraph::new(labels(4), edges).unwrap();
        let p = optimize_partition(&g, &cfg(1)).unwrap();
        assert_eq!(p.community_count(), 1);
        assert_eq!(p.q, 0.0);
    }

    #[test]
    fn empty_graph_is_an_error() {
        let g = WeightedDigraph::new(vec![], []).unwrap();
        assert!(matches!(optimize_partition(&g, &cfg(0)), Err(CommunityError::EmptyGraph)));
    }

    fn random_graph(n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize, f64)> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random_bool(0.35) {
                    edges.push((i, j, rng.random_range(0.1..5.0)));
                }
            }
        }
        edges
    }

    #[test]
    fn matches_enumeration_on_small_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for case in 0..25 {
            let n = 5 + case % 4;
            let edges = random_graph(n, &mut rng);
            let g = WeightedDigraph::new(labels(n), edges.clone()).unwrap();
            if g.total_weight() == 0.0 {
                continue;
            }
            let p = optimize_partition(&g, &cfg(case as u64)).unwrap();
            let (q_best, _, _) = best_partition_by_enumeration(n, &edges);
            assert!((p.q - q_best.max(0.0)).abs() < 1e-12, "case {case}: {} vs {}", p.q, q_best);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let edges = random_graph(14, &mut rng);
        let g = WeightedDigraph::new(labels(14), edges).unwrap();
        assert_eq!(optimize_partition(&g, &cfg(42)).unwrap(), optimize_partition(&g, &cfg(42)).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn invariant_under_node_permutation_and_scaling(seed in any::<u64>(), scale in 0.001f64..1000.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 12;
            let edges = random_graph(n, &mut rng);
            let names = labels(n);
            let g = WeightedDigraph::new(names.clone(), edges.clone()).unwrap();
            prop_assume!(g.total_weight() > 0.0);
            let p = optimize_partition(&g, &cfg(11)).unwrap();
            prop_assert!(p.q >= 0.0);

            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            // node k of the permuted graph is original node perm[k]
            let mut inv = vec![0; n];
            for (k, &i) in perm.iter().enumerate() {
                inv[i] = k;
            }
            let pg = WeightedDigraph::new(
                perm.iter().map(|&i| names[i].clone()).collect(),
                edges.iter().map(|&(u, v, w)| (inv[u], inv[v], w)),
            ).unwrap();
            let pp = optimize_partition(&pg, &cfg(11)).unwrap();
            let back: Vec<usize> = (0..n).map(|i| pp.assignment[inv[i]]).collect();
            prop_assert!(same_grouping(&p.assignment, &back));

            let sg = WeightedDigraph::new(names, edges.iter().map(|&(u, v, w)| (u, v, w * scale))).unwrap();
            let sp = optimize_partition(&sg, &cfg(11)).unwrap();
            prop_assert_eq!(&sp.assignment, &p.assignment);
        }
    }
}
