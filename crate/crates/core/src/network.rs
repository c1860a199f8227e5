//! Directed country-to-country flow network.
//!
//! Edge (i, j) counts the distinct residents of i seen at least once in j.
//! After [`normalize_and_filter`] each edge also carries an estimated number
//! of travellers, the raw count divided by the origin's penetration.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::country::CountryCode;
use crate::numeric::exact_sum;
use crate::residence::{CountryStats, UserProfile};

pub const DEFAULT_MIN_OUTGOING: u64 = 500;
pub const DEFAULT_TOP_K: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowEdge {
    pub origin: CountryCode,
    pub destination: CountryCode,
    /// Distinct users.
    pub raw_weight: u64,
    /// Estimated people; equals `raw_weight` until the network is normalized.
    pub est_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowWeight {
    Raw,
    #[default]
    Est,
}

impl FlowEdge {
    pub fn weight(&self, mode: FlowWeight) -> f64 {
        match mode {
            FlowWeight::Raw => self.raw_weight as f64,
            FlowWeight::Est => self.est_weight,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowNetwork {
    pub nodes: BTreeSet<CountryCode>,
    /// Edges sorted by (origin, destination); no self-loops.
    pub edges: Vec<FlowEdge>,
    /// Distinct mobile residents per country, taken before any filtering.
    pub outgoing_population: BTreeMap<CountryCode, u64>,
    /// Origin penetration used for `est_weight`, present once normalized.
    pub penetration: BTreeMap<CountryCode, f64>,
    pub normalized: bool,
}

impl FlowNetwork {
    /// Assembles a network from raw (origin, destination, users) triples.
    /// Self-loops are dropped and duplicate pairs summed.
    pub fn from_raw_edges(edges: impl IntoIterator<Item = (CountryCode, CountryCode, u64)>) -> Self {
        let mut map: BTreeMap<(CountryCode, CountryCode), u64> = BTreeMap::new();
        let mut nodes = BTreeSet::new();
        for (o, d, w) in edges {
            nodes.insert(o.clone());
            nodes.insert(d.clone());
            if o != d && w > 0 {
                *map.entry((o, d)).or_default() += w;
            }
        }
        let edges = map
            .into_iter()
            .map(|((origin, destination), w)| FlowEdge { origin, destination, raw_weight: w, est_weight: w as f64 })
            .collect();
        Self { nodes, edges, ..Default::default() }
    }

    pub fn edge(&self, origin: &CountryCode, destination: &CountryCode) -> Option<&FlowEdge> {
        self.edges
            .binary_search_by(|e| (&e.origin, &e.destination).cmp(&(origin, destination)))
            .ok()
            .map(|i| &self.edges[i])
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("country {0} survived filtering with non-positive penetration")]
    ZeroPenetration(CountryCode),
}

/// Edge (i, j) = number of users residing in i with at least one event in j.
pub fn build_flow_network(profiles: &[UserProfile]) -> FlowNetwork {
    let mut edges: BTreeMap<(CountryCode, CountryCode), u64> = BTreeMap::new();
    let mut nodes = BTreeSet::new();
    let mut outgoing: BTreeMap<CountryCode, u64> = BTreeMap::new();
    for p in profiles {
        nodes.insert(p.residence.clone());
        let mut mobile = false;
        for c in p.visited_abroad() {
            nodes.insert(c.clone());
            *edges.entry((p.residence.clone(), c.clone())).or_default() += 1;
            mobile = true;
        }
        if mobile {
            *outgoing.entry(p.residence.clone()).or_default() += 1;
        }
    }
    let edges = edges
        .into_iter()
        .map(|((origin, destination), w)| FlowEdge { origin, destination, raw_weight: w, est_weight: w as f64 })
        .collect();
    FlowNetwork { nodes, edges, outgoing_population: outgoing, ..Default::default() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkFilter {
    /// Minimum distinct mobile residents ("outgoing population").
    pub min_outgoing: u64,
    pub min_penetration: f64,
    /// Optional resident floor; zero disables it.
    pub min_residents: u64,
}

impl Default for NetworkFilter {
    fn default() -> Self {
        Self {
            min_outgoing: DEFAULT_MIN_OUTGOING,
            min_penetration: crate::residence::DEFAULT_MIN_PENETRATION,
            min_residents: 0,
        }
    }
}

/// Drops countries failing the filter together with their edges, then sets
/// `est_weight = raw_weight / penetration(origin)`.
///
/// Countries without usable census data count as failing the penetration test.
pub fn normalize_and_filter(
    network: &FlowNetwork,
    stats: &BTreeMap<CountryCode, CountryStats>,
    filter: &NetworkFilter,
) -> Result<FlowNetwork, NetworkError> {
    let keep: BTreeSet<CountryCode> = network
        .nodes
        .iter()
        .filter(|c| {
            let out = network.outgoing_population.get(*c).copied().unwrap_or(0);
            let Some(s) = stats.get(*c) else { return false };
            s.population.is_some_and(|p| p > 0)
                && out >= filter.min_outgoing
                && s.penetration >= filter.min_penetration
                && s.residents >= filter.min_residents
        })
        .cloned()
        .collect();
    let mut penetration = BTreeMap::new();
    for c in &keep {
        penetration.insert(c.clone(), stats[c].penetration);
    }
    let mut edges = Vec::new();
    for e in &network.edges {
        if !(keep.contains(&e.origin) && keep.contains(&e.destination)) {
            continue;
        }
        let pen = penetration[&e.origin];
        if !(pen > 0.0) {
            return Err(NetworkError::ZeroPenetration(e.origin.clone()));
        }
        edges.push(FlowEdge { est_weight: e.raw_weight as f64 / pen, ..e.clone() });
    }
    let outgoing_population = network.outgoing_population.iter().filter(|(c, _)| keep.contains(*c)).map(|(c, n)| (c.clone(), *n)).collect();
    Ok(FlowNetwork { nodes: keep, edges, outgoing_population, penetration, normalized: true })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Balance {
    pub inflow: f64,
    pub outflow: f64,
    /// inflow - outflow
    pub balance: f64,
}

/// Inflow, outflow and their difference per node. Sums are correctly
/// rounded, so they do not depend on edge order.
pub fn inflow_outflow_balance(network: &FlowNetwork, weight: FlowWeight) -> BTreeMap<CountryCode, Balance> {
    let mut inc: BTreeMap<&CountryCode, Vec<f64>> = network.nodes.iter().map(|c| (c, Vec::new())).collect();
    let mut out: BTreeMap<&CountryCode, Vec<f64>> = network.nodes.iter().map(|c| (c, Vec::new())).collect();
    for e in &network.edges {
        let w = e.weight(weight);
        inc.entry(&e.destination).or_default().push(w);
        out.entry(&e.origin).or_default().push(w);
    }
    inc.into_iter()
        .map(|(c, ins)| {
            let outs = out.remove(c).unwrap_or_default();
            let inflow = exact_sum(ins.iter().copied());
            let outflow = exact_sum(outs.iter().copied());
            let balance = exact_sum(ins.iter().copied().chain(outs.iter().map(|w| -w)));
            (c.clone(), Balance { inflow, outflow, balance })
        })
        .collect()
}

/// The `k` heaviest edges; ties by (origin, destination).
pub fn top_k_flows(network: &FlowNetwork, k: usize, weight: FlowWeight) -> Vec<FlowEdge> {
    let mut edges = network.edges.clone();
    edges.sort_by(|a, b| {
        b.weight(weight)
            .total_cmp(&a.weight(weight))
            .then_with(|| a.origin.cmp(&b.origin))
            .then_with(|| a.destination.cmp(&b.destination))
    });
    edges.truncate(k);
    edges
}
