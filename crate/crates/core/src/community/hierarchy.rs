use serde::{Deserialize, Serialize};

use super::graph::{modularity, WeightedDigraph};
use super::optimize::{optimize_partition, OptimizerConfig, Partition};
use super::CommunityError;

pub const DEFAULT_MAX_LEVELS: usize = 3;

/// A community is only re-partitioned when it has at least this many nodes.
pub const MIN_SPLIT_SIZE: usize = 3;

/// A sub-partition is adopted only if its modularity on the sub-network exceeds this.
pub const MIN_SPLIT_Q: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyLevel {
    /// Assignment over the full network; `q` is full-network modularity.
    pub partition: Partition,
    /// `parent[c]` is the community at the previous level that community `c`
    /// came from. At level 1 every entry is 0 (the whole network).
    pub parent: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionHierarchy {
    pub levels: Vec<HierarchyLevel>,
}

impl PartitionHierarchy {
    /// Community of `node` at each level, level 1 first.
    pub fn path(&self, node: usize) -> Vec<usize> {
        self.levels.iter().map(|l| l.partition.assignment[node]).collect()
    }

    /// True when every level refines the one above it.
    pub fn is_nested(&self) -> bool {
        self.levels.windows(2).all(|w| {
            let (a, b) = (&w[0].partition.assignment, &w[1].partition.assignment);
            (0..a.len()).all(|i| (0..a.len()).all(|j| b[i] != b[j] || a[i] == a[j]))
        })
    }
}

fn mix(seed: u64, level: usize, community: usize) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed ^ ((level as u64) << 48) ^ (community as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Level 1 partitions the whole graph; each further level re-partitions
/// every community of the previous level on its internal edges only.
/// Communities that do not split are carried down unchanged, so the result
/// always has exactly `max_levels` levels.
pub fn hierarchical_partition(
    graph: &WeightedDigraph,
    max_levels: usize,
    config: &OptimizerConfig,
) -> Result<PartitionHierarchy, CommunityError> {
    if max_levels == 0 {
        return Err(CommunityError::ZeroLevels);
    }
    let n = graph.node_count();
    let full_q = |a: &[usize]| -> Result<f64, CommunityError> {
        if graph.total_weight() > 0.0 {
            modularity(graph, a)
        } else {
            Ok(0.0)
        }
    };
    let first = optimize_partition(graph, config)?;
    let k = first.community_count();
    let mut levels = vec![HierarchyLevel { partition: first, parent: vec![0; k] }];
    for level in 2..=max_levels {
        let prev = &levels.last().expect("level 1 exists").partition;
        let mut assignment = vec![0; n];
        let mut parent = Vec::new();
        for (c, members) in prev.communities().into_iter().enumerate() {
            let split = if members.len() >= MIN_SPLIT_SIZE {
                let sub = graph.induced(&members);
                if sub.total_weight() > 0.0 {
                    let cfg = OptimizerConfig { seed: mix(config.seed, level, c), restarts: config.restarts };
                    let p = optimize_partition(&sub, &cfg)?;
                    (p.q > MIN_SPLIT_Q && p.community_count() > 1).then_some(p)
                } else {
                    None
                }
            } else {
                None
            };
            match split {
                Some(p) => {
                    let base = parent.len();
                    for (k, &i) in members.iter().enumerate() {
                        assignment[i] = base + p.assignment[k];
                    }
                    parent.extend(std::iter::repeat(c).take(p.community_count()));
                }
                None => {
                    for &i in &members {
                        assignment[i] = parent.len();
                    }
                    parent.push(c);
                }
            }
        }
        let q = full_q(&assignment)?;
        levels.push(HierarchyLevel { partition: Partition { assignment, q }, parent });
    }
    Ok(PartitionHierarchy { levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i:02}")).collect()
    }

    /// `supers` groups of `subs` blocks of `size` nodes, complete digraph
    /// with weights by relation.
    fn nested(supers: usize, subs: usize, size: usize, w_sub: f64, w_super: f64, w_out: f64) -> WeightedDigraph {
        let n = supers * subs * size;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = if i / size == j / size {
                    w_sub
                } else if i / (size * subs) == j / (size * subs) {
                    w_super
                } else {
                    w_out
                };
                edges.push((i, j, w));
            }
        }
        WeightedDigraph::new(labels(n), edges).unwrap()
    }

    fn cfg() -> OptimizerConfig {
        OptimizerConfig { seed: 2024, restarts: 20 }
    }

    #[test]
    fn structureless_communities_carry_down() {
        // two uniform complete 4-node digraphs joined weakly
        let g = nested(2, 1, 4, 1.0, 0.0, 0.01);
        let h = hierarchical_partition(&g, 3, &cfg()).unwrap();
        assert_eq!(h.levels.len(), 3);
        assert_eq!(h.levels[0].partition.assignment, vec![0, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(h.levels[1].partition, h.levels[0].partition);
        assert_eq!(h.levels[2].partition, h.levels[0].partition);
        assert_eq!(h.levels[1].parent, vec![0, 1]);
        assert!(h.is_nested());
    }

    #[test]
    fn nested_blocks_resolve_level_by_level() {
        let g = nested(2, 2, 4, 10.0, 5.0, 0.01);
        let h = hierarchical_partition(&g, 3, &cfg()).unwrap();
        let l1: Vec<usize> = (0..16).map(|i| i / 8).collect();
        let l2: Vec<usize> = (0..16).map(|i| i / 4).collect();
        assert_eq!(h.levels[0].partition.assignment, l1);
        assert_eq!(h.levels[1].partition.assignment, l2);
        assert_eq!(h.levels[2].partition.assignment, l2);
        assert_eq!(h.levels[1].parent, vec![0, 0, 1, 1]);
        assert!(h.is_nested());
        // level 1 is the modularity optimum, so the finer split scores lower
        assert!(h.levels[1].partition.q < h.levels[0].partition.q);
    }

    /// With sub-block links of 1 against 10 inside, four blocks already beat
    /// two super-blocks on the full network, so level 1 goes straight to four.
    #[test]
    fn weak_super_structure_is_skipped_by_modularity() {
        let g = nested(2, 2, 4, 10.0, 1.0, 0.01);
        let four: Vec<usize> = (0..16).map(|i| i / 4).collect();
        let two: Vec<usize> = (0..16).map(|i| i / 8).collect();
        assert!(modularity(&g, &four).unwrap() > modularity(&g, &two).unwrap());
        let h = hierarchical_partition(&g, 2, &cfg()).unwrap();
        assert_eq!(h.levels[0].partition.assignment, four);
    }

    #[test]
    fn one_level_and_zero_levels() {
        let g = nested(2, 1, 3, 1.0, 0.0, 0.1);
        assert_eq!(hierarchical_partition(&g, 1, &cfg()).unwrap().levels.len(), 1);
        assert!(matches!(hierarchical_partition(&g, 0, &cfg()), Err(CommunityError::ZeroLevels)));
    }
}
