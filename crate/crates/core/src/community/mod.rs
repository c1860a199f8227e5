//! Mobility regions: directed modularity and its hierarchical optimization.

pub mod exhaustive;
mod graph;
mod hierarchy;
mod optimize;

pub use graph::{modularity, WeightedDigraph};
pub use hierarchy::{hierarchical_partition, HierarchyLevel, PartitionHierarchy, DEFAULT_MAX_LEVELS, MIN_SPLIT_Q, MIN_SPLIT_SIZE};
pub use optimize::{compact_labels, optimize_partition, OptimizerConfig, Partition, DEFAULT_RESTARTS, GAIN_EPS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CommunityError {
    #[error("graph has no edge weight; modularity is undefined")]
    ZeroWeight,
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("edge weight {0} is negative or not finite")]
    BadWeight(f64),
    #[error("node {node} out of range for {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("assignment has {got} entries for {expected} nodes")]
    AssignmentLength { expected: usize, got: usize },
    #[error("a hierarchy needs at least one level")]
    ZeroLevels,
}
