//! Request-driven simulation of caching switches.
//!
//! Every router owns a cache. A request is answered locally on a hit,
//! otherwise by the closest router holding the object or by the origin
//! server behind `origin_attach`. Leave-copy-everywhere schemes then insert
//! the object along the reply path; pinned caches never change between
//! placement directives.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{self, AnalyticsError, ControllerDecision, InstanceShell};
use crate::net_model::{self, Catalog, DemandMatrix, ModelError, Topology};
use crate::optimizer::{equal_budgets, Placement, SolveError, Supplier, Violation};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {}", format_issues(.0))]
    InvalidConfig(Vec<ConfigIssue>),
    #[error("placement rejected: {0:?}")]
    InfeasiblePlacement(Vec<Violation>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CachePolicy {
    /// Contents change only through placement directives.
    Pinned,
    Lru,
    Lfu,
}

#[derive(Debug, Clone)]
struct Entry {
    object: usize,
    size: u64,
    last_used: u64,
    frequency: u64,
}

/// One switch cache. Residents are kept in insertion order.
#[derive(Debug, Clone)]
pub struct CacheState {
    capacity: u64,
    used: u64,
    policy: CachePolicy,
    entries: Vec<Entry>,
}

impl CacheState {
    pub fn new(capacity: u64, policy: CachePolicy) -> Self {
        Self {
            capacity,
            used: 0,
            policy,
            entries: Vec::new(),
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn remaining(&self) -> u64 {
        self.capacity - self.used
    }

    pub fn policy(&self) -> CachePolicy {
        self.policy
    }

    pub fn contains(&self, object: usize) -> bool {
        self.entries.iter().any(|e| e.object == object)
    }

    pub fn residents(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.object)
    }

    /// Records an access to a resident object. Returns false if absent.
    pub fn touch(&mut self, object: usize, clock: u64) -> bool {
        match self.entries.iter_mut().find(|e| e.object == object) {
            Some(entry) => {
                entry.last_used = clock;
                entry.frequency += 1;
                true
            }
            None => false,
        }
    }

    /// Inserts `object`, evicting per policy until it fits. Pinned caches and
    /// objects larger than the whole cache are left untouched. Returns the
    /// evicted objects.
    pub fn insert(&mut self, object: usize, size: u64, clock: u64) -> Vec<usize> {
        if self.policy == CachePolicy::Pinned || size > self.capacity {
            return Vec::new();
        }
        if self.touch(object, clock) {
            return Vec::new();
        }
        let mut evicted = Vec::new();
        while self.capacity - self.used < size {
            let victim = self.victim().expect("nonempty cache while over capacity");
            let entry = self.entries.remove(victim);
            self.used -= entry.size;
            evicted.push(entry.object);
        }
        self.entries.push(Entry {
            object,
            size,
            last_used: clock,
            frequency: 1,
        });
        self.used += size;
        assert!(self.used <= self.capacity, "cache capacity exceeded");
        evicted
    }

    fn victim(&self) -> Option<usize> {
        let key = |e: &Entry| match self.policy {
            CachePolicy::Lfu => (e.frequency, e.last_used),
            _ => (0, e.last_used),
        };
        self.entries
            .iter()
            .enumerate()
            .min_by_key(|(_, e)| key(e))
            .map(|(idx, _)| idx)
    }

    fn pin(&mut self, capacity: u64, objects: &[usize], sizes: &[u64]) {
        self.capacity = capacity;
        self.policy = CachePolicy::Pinned;
        self.entries = objects
            .iter()
            .map(|&k| Entry {
                object: k,
                size: sizes[k],
                last_used: 0,
                frequency: 0,
            })
            .collect();
        self.used = objects.iter().map(|&k| sizes[k]).sum();
    }
}

/// Per-(node, object) counters: requests issued at the node, local hits and
/// total hops travelled to serve them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub requests: u64,
    pub hits: u64,
    pub hops: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TelemetryRecord {
    pub node: usize,
    /// One-based object rank.
    pub object: usize,
    pub request_count: u64,
    pub hit_count: u64,
    pub hops_accumulated: u64,
}

/// Request history collected by the switch monitors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TelemetryLog {
    counters: Array2<Counters>,
}

impl TelemetryLog {
    pub fn new(node_count: usize, object_count: usize) -> Self {
        Self {
            counters: Array2::from_elem((node_count, object_count), Counters::default()),
        }
    }

    /// Log whose request counts are `counts`, with no hits or hops.
    pub fn from_request_counts(counts: &Array2<u64>) -> Self {
        Self {
            counters: counts.mapv(|requests| Counters {
                requests,
                ..Counters::default()
            }),
        }
    }

    pub fn node_count(&self) -> usize {
        self.counters.nrows()
    }

    pub fn object_count(&self) -> usize {
        self.counters.ncols()
    }

    pub fn get(&self, node: usize, object: usize) -> Counters {
        self.counters[[node, object]]
    }

    pub fn record(&mut self, node: usize, object: usize, hit: bool, hops: u32) {
        let c = &mut self.counters[[node, object]];
        c.requests += 1;
        c.hits += u64::from(hit);
        c.hops += u64::from(hops);
    }

    pub fn merge(&mut self, other: &TelemetryLog) {
        for (mine, theirs) in self.counters.iter_mut().zip(other.counters.iter()) {
            mine.requests += theirs.requests;
            mine.hits += theirs.hits;
            mine.hops += theirs.hops;
        }
    }

    pub fn request_counts(&self) -> Array2<u64> {
        self.counters.mapv(|c| c.requests)
    }

    pub fn total_requests(&self) -> u64 {
        self.counters.iter().map(|c| c.requests).sum()
    }

    pub fn total_hits(&self) -> u64 {
        self.counters.iter().map(|c| c.hits).sum()
    }

    pub fn total_hops(&self) -> u64 {
        self.counters.iter().map(|c| c.hops).sum()
    }

    /// Records with at least one request, row-major.
    pub fn records(&self) -> impl Iterator<Item = TelemetryRecord> + '_ {
        self.counters
            .indexed_iter()
            .filter(|(_, c)| c.requests > 0)
            .map(|((node, k), c)| TelemetryRecord {
                node,
                object: k + 1,
                request_count: c.requests,
                hit_count: c.hits,
                hops_accumulated: c.hops,
            })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut writer = csv::Writer::from_writer(out);
        for record in self.records() {
            writer.serialize(record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// How one request was served.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestOutcome {
    pub hops: u32,
    pub hit: bool,
    pub supplier: Supplier,
}

/// Caches of every router plus the bookkeeping needed to serve requests.
#[derive(Debug, Clone)]
pub struct Network {
    topology: Arc<Topology>,
    catalog: Arc<Catalog>,
    caches: Vec<CacheState>,
    holders: Array2<bool>,
    c_sum: u64,
    telemetry: TelemetryLog,
    clock: u64,
}

impl Network {
    /// Empty caches with the given budgets and policy.
    pub fn new(
        topology: Arc<Topology>,
        catalog: Arc<Catalog>,
        budgets: &[u64],
        policy: CachePolicy,
    ) -> Self {
        assert_eq!(budgets.len(), topology.node_count());
        let (n, m) = (topology.node_count(), catalog.object_count());
        Self {
            caches: budgets
                .iter()
                .map(|&b| CacheState::new(b, policy))
                .collect(),
            holders: Array2::from_elem((n, m), false),
            c_sum: budgets.iter().sum(),
            telemetry: TelemetryLog::new(n, m),
            clock: 0,
            topology,
            catalog,
        }
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn caches(&self) -> &[CacheState] {
        &self.caches
    }

    pub fn c_sum(&self) -> u64 {
        self.c_sum
    }

    /// Telemetry accumulated since the network was built.
    pub fn telemetry(&self) -> &TelemetryLog {
        &self.telemetry
    }

    pub fn holds(&self, node: usize, object: usize) -> bool {
        self.holders[[node, object]]
    }

    /// Replaces every cache with the directed contents, pinned. Telemetry is
    /// kept.
    pub fn apply_placement(&mut self, placement: &Placement) -> Result<(), SimError> {
        let (n, m) = (self.topology.node_count(), self.catalog.object_count());
        if placement.node_count() != n
            || placement.object_count() != m
            || placement.budgets().len() != n
        {
            return Err(SimError::InfeasiblePlacement(vec![Violation::Shape {
                nodes: placement.node_count(),
                objects: placement.object_count(),
            }]));
        }
        let sizes = self.catalog.sizes();
        let mut violations = Vec::new();
        for node in 0..n {
            let used = placement.used(node, sizes);
            let budget = placement.budgets()[node];
            if used > budget {
                violations.push(Violation::Capacity { node, used, budget });
            }
        }
        let total: u64 = placement.budgets().iter().sum();
        if total != self.c_sum {
            violations.push(Violation::Pool {
                total,
                c_sum: self.c_sum,
            });
        }
        if !violations.is_empty() {
            return Err(SimError::InfeasiblePlacement(violations));
        }
        for (node, cache) in self.caches.iter_mut().enumerate() {
            cache.pin(
                placement.budgets()[node],
                &placement.objects_at(node),
                sizes,
            );
        }
        self.holders = placement.residency().clone();
        Ok(())
    }

    /// Closest supplier of `object` for `node`, using the same tie rules as
    /// the optimizer's nearest-copy assignment.
    pub fn nearest_supplier(&self, node: usize, object: usize) -> (Supplier, u32) {
        let mut best = Supplier::Origin;
        let mut best_dist = self.topology.origin_hops(node);
        for j in 0..self.topology.node_count() {
            if self.holders[[j, object]] {
                let d = self.topology.hops(node, j);
                if d < best_dist || (d == best_dist && best == Supplier::Origin) {
                    best = Supplier::Router(j);
                    best_dist = d;
                }
            }
        }
        (best, best_dist)
    }

    /// Serves one request issued at `node` and updates telemetry.
    pub fn handle_request(&mut self, node: usize, object: usize) -> RequestOutcome {
        self.clock += 1;
        let clock = self.clock;
        let (supplier, hops) = self.nearest_supplier(node, object);
        let hit = supplier == Supplier::Router(node);

        if let Supplier::Router(j) = supplier {
            self.caches[j].touch(object, clock);
        }
        if !hit {
            let source = match supplier {
                Supplier::Router(j) => j,
                Supplier::Origin => self.topology.origin_attach(),
            };
            let path = self.topology.shortest_path(node, source);
            let skip_source = matches!(supplier, Supplier::Router(_));
            let size = self.catalog.size(object);
            for (pos, &hop_node) in path.iter().enumerate().rev() {
                if skip_source && pos == path.len() - 1 {
                    continue;
                }
                let cache = &mut self.caches[hop_node];
                if cache.policy() == CachePolicy::Pinned {
                    continue;
                }
                for evicted in cache.insert(object, size, clock) {
                    self.holders[[hop_node, evicted]] = false;
                }
                if cache.contains(object) {
                    self.holders[[hop_node, object]] = true;
                }
            }
        }

        self.telemetry.record(node, object, hit, hops);
        RequestOutcome {
            hops,
            hit,
            supplier,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scheme {
    /// Controller-directed placement re-optimized every epoch.
    Optimized,
    LceLru,
    LceLfu,
    RandomStatic,
    NoCache,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Optimized,
        Scheme::LceLru,
        Scheme::LceLfu,
        Scheme::RandomStatic,
        Scheme::NoCache,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Optimized => "OPTIMIZED",
            Scheme::LceLru => "LCE_LRU",
            Scheme::LceLfu => "LCE_LFU",
            Scheme::RandomStatic => "RANDOM_STATIC",
            Scheme::NoCache => "NO_CACHE",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestMode {
    /// Requester uniform over routers, object drawn from the Zipf law.
    #[default]
    Iid,
    /// Fixed per-epoch request counts apportioned from the demand matrix and
    /// issued round-robin.
    Deterministic,
}

/// Configuration of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub scheme: Scheme,
    pub requests_per_epoch: u64,
    pub epochs: u32,
    pub warmup_epochs: u32,
    pub seed: u64,
    pub cache_fraction: f64,
    pub nodes: usize,
    pub objects: usize,
    pub alpha: f64,
    pub m_attach: usize,
    pub origin_penalty: u32,
    pub per_node_rate: f64,
    pub request_mode: RequestMode,
    /// Additive smoothing used by the controller's demand estimate.
    pub smoothing: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Optimized,
            requests_per_epoch: 10_000,
            epochs: 12,
            warmup_epochs: 2,
            seed: 1,
            cache_fraction: 0.05,
            nodes: 64,
            objects: 200,
            alpha: 0.8,
            m_attach: net_model::DEFAULT_M_ATTACH,
            origin_penalty: net_model::DEFAULT_ORIGIN_PENALTY,
            per_node_rate: 1.0,
            request_mode: RequestMode::Iid,
            smoothing: analytics::DEFAULT_SMOOTHING,
        }
    }
}

/// A configuration invariant violation, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl ConfigIssue {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), Vec<ConfigIssue>> {
        let mut issues = Vec::new();
        let mut check = |ok: bool, field: &str, message: String| {
            if !ok {
                issues.push(ConfigIssue::new(field, message));
            }
        };
        check(
            self.requests_per_epoch >= 1,
            "requests_per_epoch",
            "must be positive".into(),
        );
        check(self.epochs >= 1, "epochs", "must be positive".into());
        check(
            self.warmup_epochs < self.epochs,
            "warmup_epochs",
            format!(
                "must be smaller than epochs ({} >= {})",
                self.warmup_epochs, self.epochs
            ),
        );
        check(
            self.cache_fraction > 0.0 && self.cache_fraction <= 1.0,
            "cache_fraction",
            format!("must lie in (0, 1], got {}", self.cache_fraction),
        );
        check(
            self.scheme == Scheme::NoCache
                || self.cache_fraction * self.objects as f64 >= 1.0 - 1e-9,
            "cache_fraction",
            format!(
                "cache_fraction * objects must be at least 1 for scheme {} (got {})",
                self.scheme,
                self.cache_fraction * self.objects as f64
            ),
        );
        check(self.objects >= 1, "objects", "must be positive".into());
        check(self.m_attach >= 1, "m_attach", "must be at least 1".into());
        check(
            self.nodes >= 2.max(self.m_attach + 1),
            "nodes",
            format!(
                "must be at least max(2, m_attach + 1) = {}",
                2.max(self.m_attach + 1)
            ),
        );
        check(
            self.alpha >= 0.0 && self.alpha.is_finite(),
            "alpha",
            format!("must be finite and nonnegative, got {}", self.alpha),
        );
        check(
            self.per_node_rate > 0.0 && self.per_node_rate.is_finite(),
            "per_node_rate",
            format!("must be positive, got {}", self.per_node_rate),
        );
        check(
            self.smoothing >= 0.0 && self.smoothing.is_finite(),
            "smoothing",
            format!("must be finite and nonnegative, got {}", self.smoothing),
        );
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    /// Per-router cache size: `cache_fraction` of the total catalog size,
    /// rounded down.
    pub fn per_node_capacity(&self, catalog: &Catalog) -> u64 {
        if self.scheme == Scheme::NoCache {
            return 0;
        }
        (self.cache_fraction * catalog.total_size() as f64 + 1e-9).floor() as u64
    }
}

/// A simulated network instance built from a config.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: Arc<Topology>,
    pub catalog: Arc<Catalog>,
    pub demand: DemandMatrix,
    pub per_node_capacity: u64,
}

impl Scenario {
    pub fn from_config(config: &SimConfig) -> Result<Self, SimError> {
        config.validate().map_err(SimError::InvalidConfig)?;
        let topology =
            net_model::generate_power_law_topology(config.nodes, config.m_attach, config.seed)?
                .with_origin_penalty(config.origin_penalty);
        let catalog = Catalog::zipf(config.objects, config.alpha)?;
        let demand = net_model::build_demand(&topology, &catalog, config.per_node_rate)?;
        let per_node_capacity = config.per_node_capacity(&catalog);
        Ok(Self {
            topology: Arc::new(topology),
            catalog: Arc::new(catalog),
            demand,
            per_node_capacity,
        })
    }

    pub fn c_sum(&self) -> u64 {
        self.per_node_capacity * self.topology.node_count() as u64
    }
}

/// Source of requests for an epoch.
#[derive(Debug, Clone)]
pub enum Workload {
    Iid {
        node_count: usize,
        objects: WeightedIndex<f64>,
        requests: u64,
    },
    /// Fixed request order replayed every epoch.
    Schedule(Vec<(usize, usize)>),
}

impl Workload {
    pub fn iid(node_count: usize, popularity: &[f64], requests: u64) -> Self {
        Workload::Iid {
            node_count,
            objects: WeightedIndex::new(popularity).expect("popularity is a valid weight vector"),
            requests,
        }
    }

    /// Round-robin schedule: each pass issues one request for every
    /// `(node, object)` cell with requests left, in row-major order.
    pub fn from_counts(counts: &Array2<u64>) -> Self {
        let mut left = counts.clone();
        let total: u64 = counts.sum();
        let mut order = Vec::with_capacity(total as usize);
        while (order.len() as u64) < total {
            for ((i, k), c) in left.indexed_iter_mut() {
                if *c > 0 {
                    *c -= 1;
                    order.push((i, k));
                }
            }
        }
        Workload::Schedule(order)
    }

    pub fn from_config(config: &SimConfig, scenario: &Scenario) -> Self {
        match config.request_mode {
            RequestMode::Iid => Self::iid(
                scenario.topology.node_count(),
                scenario.catalog.popularity(),
                config.requests_per_epoch,
            ),
            RequestMode::Deterministic => {
                Self::from_counts(&apportion(&scenario.demand, config.requests_per_epoch))
            }
        }
    }

    pub fn requests(&self) -> u64 {
        match self {
            Workload::Iid { requests, .. } => *requests,
            Workload::Schedule(order) => order.len() as u64,
        }
    }
}

/// Splits `total` requests across cells in proportion to the demand rates
/// by the largest-remainder method; remainder ties go to the lower row-major
/// cell.
pub fn apportion(demand: &DemandMatrix, total: u64) -> Array2<u64> {
    let rates = demand.rates();
    let sum = demand.total();
    let quotas = rates.mapv(|q| q / sum * total as f64);
    let mut counts = quotas.mapv(|x| x.floor() as u64);
    let assigned: u64 = counts.sum();
    let mut remainders: Vec<((usize, usize), f64)> = quotas
        .indexed_iter()
        .map(|(idx, &x)| (idx, x - x.floor()))
        .collect();
    remainders.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for &(idx, _) in remainders
        .iter()
        .take(total.saturating_sub(assigned) as usize)
    {
        counts[idx] += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: u32,
    pub measured: bool,
    pub requests: u64,
    pub hits: u64,
    pub total_hops: u64,
    /// Total hops over total requests.
    pub avg_hops: f64,
    pub hit_ratio: f64,
    /// Hops weighted by object size over total requested size.
    pub size_weighted_avg_hops: f64,
}

#[derive(Debug, Clone)]
pub struct EpochOutcome {
    pub telemetry: TelemetryLog,
    pub metrics: EpochMetrics,
}

/// Issues one epoch of requests against `network`.
pub fn run_epoch<R: Rng>(network: &mut Network, workload: &Workload, rng: &mut R) -> EpochOutcome {
    let (n, m) = (
        network.topology.node_count(),
        network.catalog.object_count(),
    );
    let mut log = TelemetryLog::new(n, m);
    let mut weighted_hops = 0u64;
    let mut weighted_requests = 0u64;
    let mut serve = |network: &mut Network, node: usize, object: usize| {
        let outcome = network.handle_request(node, object);
        let size = network.catalog.size(object);
        log.record(node, object, outcome.hit, outcome.hops);
        weighted_hops += u64::from(outcome.hops) * size;
        weighted_requests += size;
    };
    match workload {
        Workload::Iid {
            node_count,
            objects,
            requests,
        } => {
            for _ in 0..*requests {
                let node = rng.random_range(0..*node_count);
                let object = objects.sample(rng);
                serve(network, node, object);
            }
        }
        Workload::Schedule(order) => {
            for &(node, object) in order {
                serve(network, node, object);
            }
        }
    }
    let requests = log.total_requests();
    let hits = log.total_hits();
    let total_hops = log.total_hops();
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    EpochOutcome {
        metrics: EpochMetrics {
            epoch: 0,
            measured: true,
            requests,
            hits,
            total_hops,
            avg_hops: ratio(total_hops, requests),
            hit_ratio: ratio(hits, requests),
            size_weighted_avg_hops: ratio(weighted_hops, weighted_requests),
        },
        telemetry: log,
    }
}

/// Random feasible placement: every router fills its budget with objects
/// drawn uniformly without replacement.
pub fn random_placement<R: Rng>(catalog: &Catalog, budgets: &[u64], rng: &mut R) -> Placement {
    let m = catalog.object_count();
    let mut x = Array2::from_elem((budgets.len(), m), false);
    let mut order: Vec<usize> = (0..m).collect();
    for (node, &budget) in budgets.iter().enumerate() {
        order.shuffle(rng);
        let mut left = budget;
        for &k in &order {
            if catalog.size(k) <= left {
                x[[node, k]] = true;
                left -= catalog.size(k);
            }
        }
    }
    Placement::new(x, budgets.to_vec())
}

/// Compact record of a controller decision kept in the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionSummary {
    pub epoch_index: u32,
    pub estimated_cost: f64,
    pub copies: usize,
    pub placement_digest: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub scheme: Scheme,
    pub seed: u64,
    pub cache_fraction: f64,
    pub alpha: f64,
    pub c_sum: u64,
    /// Every epoch, warmup included.
    pub epochs: Vec<EpochMetrics>,
    /// Total hops over total requests across measured epochs.
    pub avg_hops: f64,
    pub hit_ratio: f64,
    pub total_requests: u64,
    #[serde(skip)]
    pub decisions: Vec<ControllerDecision>,
}

impl MetricsReport {
    pub fn decision_summaries(&self) -> Vec<DecisionSummary> {
        self.decisions
            .iter()
            .map(|d| DecisionSummary {
                epoch_index: d.epoch_index,
                estimated_cost: d.estimated_cost,
                copies: d.placement.copy_count(),
                placement_digest: d.placement_digest(),
            })
            .collect()
    }
}

/// Header of the per-epoch metrics CSV.
pub const EPOCH_CSV_HEADER: [&str; 8] = [
    "scheme",
    "cache_fraction",
    "alpha",
    "seed",
    "epoch",
    "avg_hops",
    "hit_ratio",
    "requests",
];

/// One row per (scheme, cache_fraction, alpha, seed, epoch).
pub fn write_epochs_csv<'a, W: Write>(
    reports: impl IntoIterator<Item = &'a MetricsReport>,
    out: W,
) -> Result<(), SimError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(EPOCH_CSV_HEADER)?;
    for report in reports {
        for e in &report.epochs {
            writer.write_record([
                report.scheme.to_string(),
                report.cache_fraction.to_string(),
                report.alpha.to_string(),
                report.seed.to_string(),
                e.epoch.to_string(),
                e.avg_hops.to_string(),
                e.hit_ratio.to_string(),
                e.requests.to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Independent random streams derived from the run seed.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const PLACEMENT_STREAM: u64 = 1;
const REQUEST_STREAM: u64 = 2;

/// Builds the instance, runs warmup and measured epochs for the configured
/// scheme and aggregates measured epochs.
pub fn run_simulation(config: &SimConfig) -> Result<MetricsReport, SimError> {
    let scenario = Scenario::from_config(config)?;
    let n = scenario.topology.node_count();
    let c_sum = scenario.c_sum();
    let budgets = equal_budgets(n, c_sum);
    let workload = Workload::from_config(config, &scenario);
    let mut requests_rng = stream(config.seed, REQUEST_STREAM);

    let policy = match config.scheme {
        Scheme::LceLru => CachePolicy::Lru,
        Scheme::LceLfu => CachePolicy::Lfu,
        _ => CachePolicy::Pinned,
    };
    let mut network = Network::new(
        scenario.topology.clone(),
        scenario.catalog.clone(),
        &budgets,
        policy,
    );
    if config.scheme == Scheme::RandomStatic {
        let mut rng = stream(config.seed, PLACEMENT_STREAM);
        network.apply_placement(&random_placement(&scenario.catalog, &budgets, &mut rng))?;
    }

    let shell = InstanceShell {
        topology: scenario.topology.clone(),
        catalog: scenario.catalog.clone(),
        smoothing: config.smoothing,
    };
    let mut decisions = Vec::new();
    let mut epochs = Vec::with_capacity(config.epochs as usize);
    for epoch in 0..config.epochs {
        let outcome = run_epoch(&mut network, &workload, &mut requests_rng);
        epochs.push(EpochMetrics {
            epoch,
            measured: epoch >= config.warmup_epochs,
            ..outcome.metrics
        });
        // the controller takes over once the warmup period has been observed
        let next = epoch + 1;
        if config.scheme == Scheme::Optimized
            && next < config.epochs
            && next >= config.warmup_epochs
        {
            let decision = analytics::controller_epoch(network.telemetry(), &shell, c_sum, next)?;
            network.apply_placement(&decision.placement)?;
            decisions.push(decision);
        }
    }

    let measured: Vec<&EpochMetrics> = epochs.iter().filter(|e| e.measured).collect();
    let total_requests: u64 = measured.iter().map(|e| e.requests).sum();
    let total_hops: u64 = measured.iter().map(|e| e.total_hops).sum();
    let total_hits: u64 = measured.iter().map(|e| e.hits).sum();
    Ok(MetricsReport {
        scheme: config.scheme,
        seed: config.seed,
        cache_fraction: config.cache_fraction,
        alpha: config.alpha,
        c_sum,
        avg_hops: total_hops as f64 / total_requests as f64,
        hit_ratio: total_hits as f64 / total_requests as f64,
        total_requests,
        epochs,
        decisions,
    })
}
