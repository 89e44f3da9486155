//! Transformation networks: directed simple graphs over resources, their
//! canonical bitmask numbering, and structural analytics.
//!
//! A configuration is an edge subset of the complete non-loop edge set on `n`
//! nodes. Edge slots are numbered in row-major order of ordered pairs
//! `(src, dst)` with `src != dst`:
//!
//! ```text
//! (0,1), (0,2), ..., (0,n-1), (1,0), (1,2), ..., (n-1,n-2)
//! ```
//!
//! and bit `k` of a [`ConfigId`] is set iff slot `k` is present. Undirected
//! (reciprocal-closed) configurations number the unordered pairs `u < v` in
//! the same row-major order; each set bit expands to both `u->v` and `v->u`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Largest node count accepted by the exhaustive cycle search.
pub const MAX_CYCLE_SEARCH_NODES: usize = 8;

/// Largest number of edge slots a [`ConfigId`] can address.
pub const MAX_MASK_BITS: u32 = 63;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetworkError {
    #[error("a transformation network needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("node {node} out of range for a network of {node_count} nodes")]
    NodeOutOfRange { node: usize, node_count: usize },
    #[error("self-loop on node {0}: a rule must change its input")]
    SelfLoop(usize),
    #[error("config mask {mask} out of range for {slots} edge slots")]
    MaskOutOfRange { mask: u64, slots: u32 },
    #[error("{slots} edge slots do not fit a {max}-bit configuration mask")]
    TooManySlots { slots: u64, max: u32 },
    #[error("cycle search is exhaustive and limited to {max} nodes, got {node_count}")]
    TooLargeForCycleSearch { node_count: usize, max: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A resource, identified by its index in `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResourceId(pub usize);

impl ResourceId {
    pub fn index(self) -> usize {
        self.0
    }

    /// The `b`-bit binary rendering of the index when `node_count == 2^b`,
    /// e.g. `01` for resource 1 of 4.
    pub fn label(self, node_count: usize) -> Option<String> {
        if node_count < 2 || !node_count.is_power_of_two() || self.0 >= node_count {
            return None;
        }
        let bits = node_count.trailing_zeros() as usize;
        Some(format!("{:0width$b}", self.0, width = bits))
    }
}

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One directed conversion `input -> output`; also the single technology an
/// agent owns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransformationRule {
    pub input: ResourceId,
    pub output: ResourceId,
}

impl TransformationRule {
    pub fn new(input: usize, output: usize) -> Result<Self, NetworkError> {
        if input == output {
            return Err(NetworkError::SelfLoop(input));
        }
        Ok(Self {
            input: ResourceId(input),
            output: ResourceId(output),
        })
    }
}

impl fmt::Display for TransformationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.input, self.output)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Directedness {
    Directed,
    /// Reciprocal-closed: contains `u->v` iff it contains `v->u`.
    Undirected,
}

impl Directedness {
    pub fn is_directed(self) -> bool {
        matches!(self, Directedness::Directed)
    }

    pub fn from_directed_flag(directed: bool) -> Self {
        if directed {
            Directedness::Directed
        } else {
            Directedness::Undirected
        }
    }
}

/// Canonical configuration number; see the module docs for the bit layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConfigId(pub u64);

impl fmt::Display for ConfigId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A directed simple graph over `node_count` resources. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransformationNetwork {
    node_count: usize,
    // Sorted ascending, which is also the canonical slot order.
    edges: Vec<TransformationRule>,
    directedness: Directedness,
}

impl TransformationNetwork {
    /// Builds a network from `(src, dst)` pairs. Duplicates collapse. For
    /// [`Directedness::Undirected`] every pair is closed under reversal.
    pub fn new<I>(
        node_count: usize,
        pairs: I,
        directedness: Directedness,
    ) -> Result<Self, NetworkError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if node_count < 2 {
            return Err(NetworkError::TooFewNodes(node_count));
        }
        let mut edges = Vec::new();
        for (src, dst) in pairs {
            for node in [src, dst] {
                if node >= node_count {
                    return Err(NetworkError::NodeOutOfRange { node, node_count });
                }
            }
            edges.push(TransformationRule::new(src, dst)?);
            if !directedness.is_directed() {
                edges.push(TransformationRule::new(dst, src)?);
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self {
            node_count,
            edges,
            directedness,
        })
    }

    /// Every non-loop edge on `node_count` nodes.
    pub fn complete(node_count: usize, directedness: Directedness) -> Result<Self, NetworkError> {
        let pairs = (0..node_count)
            .flat_map(|s| (0..node_count).map(move |d| (s, d)))
            .filter(|(s, d)| s != d);
        Self::new(node_count, pairs, directedness)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[TransformationRule] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn directedness(&self) -> Directedness {
        self.directedness
    }

    pub fn contains(&self, src: usize, dst: usize) -> bool {
        TransformationRule::new(src, dst)
            .map(|rule| self.edges.binary_search(&rule).is_ok())
            .unwrap_or(false)
    }

    /// Edge density `|E| / (n(n-1))` as an exact `(numerator, denominator)`.
    pub fn density_ratio(&self) -> (usize, usize) {
        (self.edges.len(), self.node_count * (self.node_count - 1))
    }

    pub fn density(&self) -> f64 {
        let (num, den) = self.density_ratio();
        num as f64 / den as f64
    }

    fn successor_masks(&self) -> Vec<u64> {
        let mut succ = vec![0u64; self.node_count];
        for rule in &self.edges {
            succ[rule.input.0] |= 1 << rule.output.0;
        }
        succ
    }

    /// Number of distinct directed simple cycles of length >= 2, each counted
    /// once regardless of the vertex it is read from.
    pub fn count_simple_cycles(&self) -> Result<u64, NetworkError> {
        if self.node_count > MAX_CYCLE_SEARCH_NODES {
            return Err(NetworkError::TooLargeForCycleSearch {
                node_count: self.node_count,
                max: MAX_CYCLE_SEARCH_NODES,
            });
        }
        let succ = self.successor_masks();
        let mut total = 0;
        // Each cycle is found exactly once, from its smallest vertex, walking
        // only through larger vertices.
        for start in 0..self.node_count {
            let allowed = !((1u64 << (start + 1)) - 1);
            total += count_closing_paths(&succ, start, start, 1 << start, allowed);
        }
        Ok(total)
    }

    /// A topological order of the resources, or `None` if the network has a
    /// cycle (Kahn's algorithm).
    pub fn topological_order(&self) -> Option<Vec<ResourceId>> {
        let mut in_degree = vec![0usize; self.node_count];
        for rule in &self.edges {
            in_degree[rule.output.0] += 1;
        }
        let mut ready: Vec<usize> = (0..self.node_count).filter(|&v| in_degree[v] == 0).collect();
        let mut order = Vec::with_capacity(self.node_count);
        while let Some(v) = ready.pop() {
            order.push(ResourceId(v));
            for rule in self.edges.iter().filter(|r| r.input.0 == v) {
                let w = rule.output.0;
                in_degree[w] -= 1;
                if in_degree[w] == 0 {
                    ready.push(w);
                }
            }
        }
        (order.len() == self.node_count).then_some(order)
    }

    pub fn is_dag(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Resources no rule consumes.
    pub fn sinks(&self) -> Vec<ResourceId> {
        let succ = self.successor_masks();
        (0..self.node_count)
            .filter(|&v| succ[v] == 0)
            .map(ResourceId)
            .collect()
    }

    /// Renders the edge-list text format.
    pub fn to_edge_list(&self) -> String {
        self.to_string()
    }

    /// Parses the edge-list text format. Blank lines and `#` comments are
    /// ignored; errors carry 1-based line numbers.
    pub fn from_edge_list(text: &str) -> Result<Self, NetworkError> {
        let mut header: Option<(usize, Directedness)> = None;
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| NetworkError::Parse {
                line: line_no,
                message,
            };
            let Some((node_count, directedness)) = header else {
                header = Some(parse_header(line).map_err(parse_err)?);
                continue;
            };
            let mut fields = line.split_whitespace();
            let (Some(src), Some(dst), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(parse_err(format!("expected `src dst`, got `{line}`")));
            };
            let parse_node = |tok: &str| {
                tok.parse::<usize>()
                    .map_err(|_| parse_err(format!("`{tok}` is not a node index")))
            };
            let (src, dst) = (parse_node(src)?, parse_node(dst)?);
            if src == dst {
                return Err(parse_err(format!("self-loop on node {src}")));
            }
            if src >= node_count || dst >= node_count {
                return Err(parse_err(format!(
                    "edge {src} {dst} out of range for n={node_count}"
                )));
            }
            if directedness == Directedness::Undirected && src > dst {
                return Err(parse_err(format!(
                    "undirected edges are written once as `low high`, got `{src} {dst}`"
                )));
            }
            pairs.push((src, dst));
        }
        let Some((node_count, directedness)) = header else {
            return Err(NetworkError::Parse {
                line: text.lines().count().max(1),
                message: "missing `n=<count> directed=<bool>` header".into(),
            });
        };
        Self::new(node_count, pairs, directedness)
    }
}

fn parse_header(line: &str) -> Result<(usize, Directedness), String> {
    let mut node_count = None;
    let mut directed = None;
    for token in line.split_whitespace() {
        match token.split_once('=') {
            Some(("n", v)) => {
                let n: usize = v.parse().map_err(|_| format!("bad node count `{v}`"))?;
                if n < 2 {
                    return Err(format!("node count must be >= 2, got {n}"));
                }
                node_count = Some(n);
            }
            Some(("directed", v)) => {
                directed = Some(v.parse::<bool>().map_err(|_| format!("bad directed flag `{v}`"))?)
            }
            _ => return Err(format!("unexpected header token `{token}`")),
        }
    }
    match (node_count, directed) {
        (Some(n), Some(d)) => Ok((n, Directedness::from_directed_flag(d))),
        _ => Err("header must be `n=<count> directed=<bool>`".into()),
    }
}

fn count_closing_paths(succ: &[u64], start: usize, at: usize, visited: u64, allowed: u64) -> u64 {
    let mut found = 0;
    if visited != 1 << start && succ[at] & (1 << start) != 0 {
        found += 1;
    }
    let mut next = succ[at] & allowed & !visited;
    while next != 0 {
        let v = next.trailing_zeros() as usize;
        next &= next - 1;
        found += count_closing_paths(succ, start, v, visited | (1 << v), allowed);
    }
    found
}

impl fmt::Display for TransformationNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "n={} directed={}",
            self.node_count,
            self.directedness.is_directed()
        )?;
        for rule in &self.edges {
            if self.directedness.is_directed() || rule.input < rule.output {
                writeln!(f, "{} {}", rule.input, rule.output)?;
            }
        }
        Ok(())
    }
}

impl FromStr for TransformationNetwork {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_edge_list(s)
    }
}

/// The set of all edge configurations on `node_count` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfigSpace {
    pub node_count: usize,
    pub directedness: Directedness,
}

impl ConfigSpace {
    pub fn new(node_count: usize, directedness: Directedness) -> Result<Self, NetworkError> {
        if node_count < 2 {
            return Err(NetworkError::TooFewNodes(node_count));
        }
        Ok(Self {
            node_count,
            directedness,
        })
    }

    /// Number of independent edge slots: `n(n-1)` directed, `n(n-1)/2`
    /// undirected.
    pub fn slot_count(&self) -> u64 {
        let n = self.node_count as u64;
        match self.directedness {
            Directedness::Directed => n * (n - 1),
            Directedness::Undirected => n * (n - 1) / 2,
        }
    }

    /// Number of nonempty configurations, `2^slots - 1`. Exact up to 127
    /// slots.
    pub fn config_count(&self) -> Result<u128, NetworkError> {
        let slots = self.slot_count();
        if slots > 127 {
            return Err(NetworkError::TooManySlots { slots, max: 127 });
        }
        Ok((1u128 << slots) - 1)
    }

    fn mask_bits(&self) -> Result<u32, NetworkError> {
        let slots = self.slot_count();
        if slots > MAX_MASK_BITS as u64 {
            return Err(NetworkError::TooManySlots {
                slots,
                max: MAX_MASK_BITS,
            });
        }
        Ok(slots as u32)
    }

    /// One past the largest valid mask.
    pub fn mask_end(&self) -> Result<u64, NetworkError> {
        Ok(1u64 << self.mask_bits()?)
    }

    /// The `(src, dst)` pair behind each slot, in bit order.
    pub fn slots(&self) -> Vec<(usize, usize)> {
        let n = self.node_count;
        match self.directedness {
            Directedness::Directed => (0..n)
                .flat_map(|s| (0..n).map(move |d| (s, d)))
                .filter(|(s, d)| s != d)
                .collect(),
            Directedness::Undirected => (0..n)
                .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
                .collect(),
        }
    }

    /// Every nonempty configuration in ascending mask order.
    pub fn configs(&self) -> Result<impl Iterator<Item = ConfigId>, NetworkError> {
        self.configs_in(1, self.mask_end()?)
    }

    /// Configurations with mask in `[start, end)`, clamped to the valid
    /// nonempty range. Workers may start anywhere.
    pub fn configs_in(
        &self,
        start: u64,
        end: u64,
    ) -> Result<impl Iterator<Item = ConfigId>, NetworkError> {
        let limit = self.mask_end()?;
        Ok((start.max(1)..end.min(limit)).map(ConfigId))
    }

    pub fn to_network(&self, id: ConfigId) -> Result<TransformationNetwork, NetworkError> {
        let bits = self.mask_bits()?;
        if id.0 >> bits != 0 {
            return Err(NetworkError::MaskOutOfRange {
                mask: id.0,
                slots: bits,
            });
        }
        let pairs = self
            .slots()
            .into_iter()
            .enumerate()
            .filter(|(k, _)| id.0 >> k & 1 == 1)
            .map(|(_, pair)| pair);
        TransformationNetwork::new(self.node_count, pairs, self.directedness)
    }

    /// Number of edges (directed rules) in configuration `id`.
    pub fn edge_count(&self, id: ConfigId) -> usize {
        let ones = id.0.count_ones() as usize;
        match self.directedness {
            Directedness::Directed => ones,
            Directedness::Undirected => 2 * ones,
        }
    }
}

/// Maps a configuration number to its network.
pub fn config_to_network(
    id: ConfigId,
    node_count: usize,
    directedness: Directedness,
) -> Result<TransformationNetwork, NetworkError> {
    ConfigSpace::new(node_count, directedness)?.to_network(id)
}

/// Inverse of [`config_to_network`].
pub fn network_to_config(net: &TransformationNetwork) -> Result<ConfigId, NetworkError> {
    let space = ConfigSpace::new(net.node_count(), net.directedness())?;
    space.mask_bits()?;
    let mask = space
        .slots()
        .into_iter()
        .enumerate()
        .filter(|(_, (s, d))| net.contains(*s, *d))
        .fold(0u64, |mask, (k, _)| mask | 1 << k);
    Ok(ConfigId(mask))
}
