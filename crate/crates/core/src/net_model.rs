//! Network instance construction: power-law router topology, hop distances,
//! content catalog with Zipf popularity and the per-node demand matrix.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default number of edges each new router brings to the preferential
/// attachment process.
pub const DEFAULT_M_ATTACH: usize = 2;

/// Default extra hops between the origin attachment router and the origin.
pub const DEFAULT_ORIGIN_PENALTY: u32 = 3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("graph is disconnected: node {to} unreachable from node {from}")]
    Disconnected { from: usize, to: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(usize, usize),
    #[error("node {node} out of range for {node_count} nodes")]
    NodeOutOfRange { node: usize, node_count: usize },
    #[error("edge list line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Undirected connected graph of content routers with precomputed hop counts
/// and the attachment point of the virtual origin server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    hop_matrix: Array2<u32>,
    origin_attach: usize,
    origin_penalty: u32,
}

impl Topology {
    /// Builds a topology from an edge list. When `origin_attach` is `None` the
    /// origin connects to the highest-degree router (lowest index on ties).
    pub fn from_edges(
        node_count: usize,
        edges: &[(usize, usize)],
        origin_attach: Option<usize>,
        origin_penalty: u32,
    ) -> Result<Self, ModelError> {
        if node_count == 0 {
            return Err(ModelError::InvalidParameter(
                "node_count must be positive".into(),
            ));
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            for node in [a, b] {
                if node >= node_count {
                    return Err(ModelError::NodeOutOfRange { node, node_count });
                }
            }
            if a == b {
                return Err(ModelError::SelfLoop(a));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        if let Some(w) = normalized.windows(2).find(|w| w[0] == w[1]) {
            return Err(ModelError::DuplicateEdge(w[0].0, w[0].1));
        }

        let mut adjacency = vec![Vec::new(); node_count];
        for &(a, b) in &normalized {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let hop_matrix = bfs_all_pairs(&adjacency)?;

        let origin_attach = match origin_attach {
            Some(node) if node >= node_count => {
                return Err(ModelError::NodeOutOfRange { node, node_count })
            }
            Some(node) => node,
            None => highest_degree(&adjacency),
        };

        Ok(Self {
            node_count,
            edges: normalized,
            adjacency,
            hop_matrix,
            origin_attach,
            origin_penalty,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Edges as `(low, high)` pairs in ascending order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn hop_matrix(&self) -> &Array2<u32> {
        &self.hop_matrix
    }

    #[inline]
    pub fn hops(&self, from: usize, to: usize) -> u32 {
        self.hop_matrix[[from, to]]
    }

    pub fn origin_attach(&self) -> usize {
        self.origin_attach
    }

    pub fn origin_penalty(&self) -> u32 {
        self.origin_penalty
    }

    /// Distance from `node` to the origin server: hops to the attachment
    /// router plus the origin penalty.
    #[inline]
    pub fn origin_hops(&self, node: usize) -> u32 {
        self.hop_matrix[[node, self.origin_attach]] + self.origin_penalty
    }

    /// Same graph with a different origin penalty.
    pub fn with_origin_penalty(&self, origin_penalty: u32) -> Self {
        Self {
            origin_penalty,
            ..self.clone()
        }
    }

    /// Deterministic shortest path from `from` to `to`, both endpoints
    /// included. Each step moves to the lowest-index neighbor one hop closer.
    pub fn shortest_path(&self, from: usize, to: usize) -> Vec<usize> {
        let mut path = vec![from];
        let mut current = from;
        while current != to {
            let remaining = self.hops(current, to);
            current = *self.adjacency[current]
                .iter()
                .find(|&&n| self.hops(n, to) + 1 == remaining)
                .expect("connected graph has a closer neighbor");
            path.push(current);
        }
        path
    }

    /// Writes the plain-text edge list: a `nodes N origin A penalty P` header
    /// followed by one `i j` line per edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<(), ModelError> {
        writeln!(
            out,
            "nodes {} origin {} penalty {}",
            self.node_count, self.origin_attach, self.origin_penalty
        )?;
        for &(a, b) in &self.edges {
            writeln!(out, "{a} {b}")?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(input: R) -> Result<Self, ModelError> {
        let mut lines = input.lines().enumerate();
        let (node_count, origin, penalty) = match lines.next() {
            Some((_, line)) => parse_header(&line?)?,
            None => {
                return Err(ModelError::Parse {
                    line: 1,
                    message: "missing header".into(),
                })
            }
        };
        let mut edges = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let parse_err = |message: String| ModelError::Parse {
                line: idx + 1,
                message,
            };
            let mut parts = trimmed.split_whitespace();
            let mut next = || -> Result<usize, ModelError> {
                let tok = parts
                    .next()
                    .ok_or_else(|| parse_err("expected two node indices".into()))?;
                tok.parse()
                    .map_err(|_| parse_err(format!("invalid node index {tok:?}")))
            };
            let a = next()?;
            let b = next()?;
            if parts.next().is_some() {
                return Err(parse_err("trailing tokens".into()));
            }
            edges.push((a, b));
        }
        Self::from_edges(node_count, &edges, Some(origin), penalty)
    }
}

fn parse_header(line: &str) -> Result<(usize, usize, u32), ModelError> {
    let err = |message: &str| ModelError::Parse {
        line: 1,
        message: message.to_string(),
    };
    let tokens: Vec<&str> = line.split_whitespace().collect();
    match tokens.as_slice() {
        ["nodes", n, "origin", a, "penalty", p] => Ok((
            n.parse().map_err(|_| err("invalid node count"))?,
            a.parse().map_err(|_| err("invalid origin index"))?,
            p.parse().map_err(|_| err("invalid penalty"))?,
        )),
        _ => Err(err("expected `nodes N origin A penalty P`")),
    }
}

fn highest_degree(adjacency: &[Vec<usize>]) -> usize {
    // max_by_key returns the last maximum, so scan manually for lowest index.
    let mut best = 0;
    for (node, list) in adjacency.iter().enumerate() {
        if list.len() > adjacency[best].len() {
            best = node;
        }
    }
    best
}

fn bfs_all_pairs(adjacency: &[Vec<usize>]) -> Result<Array2<u32>, ModelError> {
    let n = adjacency.len();
    let mut hops = Array2::from_elem((n, n), u32::MAX);
    let mut queue = VecDeque::with_capacity(n);
    for source in 0..n {
        hops[[source, source]] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let next = hops[[source, u]] + 1;
            for &v in &adjacency[u] {
                if hops[[source, v]] == u32::MAX {
                    hops[[source, v]] = next;
                    queue.push_back(v);
                }
            }
        }
        if let Some(to) = (0..n).find(|&v| hops[[source, v]] == u32::MAX) {
            return Err(ModelError::Disconnected { from: source, to });
        }
    }
    Ok(hops)
}

/// Shortest-path hop counts between every pair of routers, by breadth-first
/// search from each node.
pub fn all_pairs_hops(
    node_count: usize,
    edges: &[(usize, usize)],
) -> Result<Array2<u32>, ModelError> {
    let mut adjacency = vec![Vec::new(); node_count];
    for &(a, b) in edges {
        for node in [a, b] {
            if node >= node_count {
                return Err(ModelError::NodeOutOfRange { node, node_count });
            }
        }
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    bfs_all_pairs(&adjacency)
}

/// Preferential-attachment graph seeded with the single edge `{0, 1}`. Every
/// later router `v` links to `min(m_attach, v)` distinct existing routers,
/// each drawn with probability proportional to its current degree.
pub fn generate_power_law_topology(
    n: usize,
    m_attach: usize,
    seed: u64,
) -> Result<Topology, ModelError> {
    if m_attach < 1 {
        return Err(ModelError::InvalidParameter(
            "m_attach must be at least 1".into(),
        ));
    }
    if n < 2.max(m_attach + 1) {
        return Err(ModelError::InvalidParameter(format!(
            "node count {n} must be at least max(2, m_attach + 1) = {}",
            2.max(m_attach + 1)
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut degrees = vec![0usize; n];
    let mut edges = vec![(0, 1)];
    degrees[0] = 1;
    degrees[1] = 1;

    let mut chosen = Vec::with_capacity(m_attach);
    for v in 2..n {
        chosen.clear();
        let links = m_attach.min(v);
        let mut remaining_weight: usize = degrees[..v].iter().sum();
        for _ in 0..links {
            let mut draw = rng.random_range(0..remaining_weight);
            let target = (0..v)
                .filter(|u| !chosen.contains(u))
                .find(|&u| {
                    if draw < degrees[u] {
                        true
                    } else {
                        draw -= degrees[u];
                        false
                    }
                })
                .expect("draw falls inside the remaining weight");
            remaining_weight -= degrees[target];
            chosen.push(target);
        }
        for &u in &chosen {
            edges.push((u, v));
            degrees[u] += 1;
        }
        degrees[v] = links;
    }

    let expected: usize = 1 + (2..n).map(|v| m_attach.min(v)).sum::<usize>();
    assert_eq!(
        edges.len(),
        expected,
        "attachment rule fixes the edge count"
    );

    Topology::from_edges(n, &edges, None, DEFAULT_ORIGIN_PENALTY)
}

/// Zipf popularity `p_k ∝ k^(-alpha)` over ranks `1..=m`, normalized to one.
pub fn zipf_popularity(m: usize, alpha: f64) -> Result<Vec<f64>, ModelError> {
    if m == 0 {
        return Err(ModelError::InvalidParameter(
            "object count must be positive".into(),
        ));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(ModelError::InvalidParameter(format!(
            "alpha must be a finite nonnegative number, got {alpha}"
        )));
    }
    let weights: Vec<f64> = (1..=m).map(|k| (k as f64).powf(-alpha)).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Content objects, their sizes and rank-ordered popularity. Object ids are
/// zero-based internally; exported files use one-based ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    sizes: Vec<u64>,
    alpha: f64,
    popularity: Vec<f64>,
}

impl Catalog {
    /// Unit-size catalog of `m` objects with Zipf popularity.
    pub fn zipf(m: usize, alpha: f64) -> Result<Self, ModelError> {
        Self::with_sizes(vec![1; m], alpha)
    }

    pub fn with_sizes(sizes: Vec<u64>, alpha: f64) -> Result<Self, ModelError> {
        if let Some(k) = sizes.iter().position(|&s| s == 0) {
            return Err(ModelError::InvalidParameter(format!(
                "object {} has zero size",
                k + 1
            )));
        }
        let popularity = zipf_popularity(sizes.len(), alpha)?;
        Ok(Self {
            sizes,
            alpha,
            popularity,
        })
    }

    pub fn object_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    #[inline]
    pub fn size(&self, object: usize) -> u64 {
        self.sizes[object]
    }

    pub fn total_size(&self) -> u64 {
        self.sizes.iter().sum()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn popularity(&self) -> &[f64] {
        &self.popularity
    }

    /// CSV with header `object,size,popularity`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ModelError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["object", "size", "popularity"])?;
        for (k, (&size, &p)) in self.sizes.iter().zip(&self.popularity).enumerate() {
            writer.write_record([(k + 1).to_string(), size.to_string(), p.to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Request rates `q[i][k]` for object `k` at router `i`, per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandMatrix {
    rates: Array2<f64>,
}

impl DemandMatrix {
    pub fn new(rates: Array2<f64>) -> Result<Self, ModelError> {
        if rates.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
            return Err(ModelError::InvalidParameter(
                "demand rates must be finite and nonnegative".into(),
            ));
        }
        if !rates.iter().any(|&r| r > 0.0) {
            return Err(ModelError::InvalidParameter(
                "demand matrix needs at least one positive rate".into(),
            ));
        }
        Ok(Self { rates })
    }

    pub fn rates(&self) -> &Array2<f64> {
        &self.rates
    }

    #[inline]
    pub fn rate(&self, node: usize, object: usize) -> f64 {
        self.rates[[node, object]]
    }

    pub fn node_count(&self) -> usize {
        self.rates.nrows()
    }

    pub fn object_count(&self) -> usize {
        self.rates.ncols()
    }

    pub fn total(&self) -> f64 {
        self.rates.sum()
    }

    /// Multiplies every rate by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rates: &self.rates * factor,
        }
    }

    /// CSV with header `node,object,rate`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ModelError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["node", "object", "rate"])?;
        for ((i, k), rate) in self.rates.indexed_iter() {
            writer.write_record([i.to_string(), (k + 1).to_string(), rate.to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Spatially uniform demand: every router requests `per_node_rate` objects
/// per epoch, split across objects by popularity.
pub fn build_demand(
    topology: &Topology,
    catalog: &Catalog,
    per_node_rate: f64,
) -> Result<DemandMatrix, ModelError> {
    if !(per_node_rate > 0.0) || !per_node_rate.is_finite() {
        return Err(ModelError::InvalidParameter(format!(
            "per_node_rate must be positive, got {per_node_rate}"
        )));
    }
    let popularity = catalog.popularity();
    let rates = Array2::from_shape_fn((topology.node_count(), catalog.object_count()), |(_, k)| {
        per_node_rate * popularity[k]
    });
    DemandMatrix::new(rates)
}
