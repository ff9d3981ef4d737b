//! Joint content placement and cache budget optimization.
//!
//! The objective is the demand-weighted fetch distance
//! `sum_i sum_k q[i][k] * S[k] * d(i, supplier(i, k))`, where each request is
//! served by exactly one router holding a copy or by the origin server. The
//! global cache pool `c_sum` is shared by all routers; solvers let per-router
//! budgets follow the capacity they actually use and park any slack on
//! router 0.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;
use serde::Serialize;
use thiserror::Error;

use crate::net_model::{Catalog, DemandMatrix, Topology};

/// Largest `N * M` accepted by [`exact_solve`].
pub const EXACT_MAX_CELLS: usize = 20;
/// Largest `c_sum` accepted by [`exact_solve`].
pub const EXACT_MAX_POOL: u64 = 6;

/// Relative tolerance (against the origin-only cost) below which two
/// objective values are treated as equal.
const COST_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("instance dimensions disagree: {0}")]
    Dimension(String),
    #[error("instance too large for exhaustive search: {cells} cells, pool {pool} (limits {EXACT_MAX_CELLS} cells, pool {EXACT_MAX_POOL})")]
    InstanceTooLarge { cells: usize, pool: u64 },
    #[error("placement is infeasible: {0:?}")]
    Infeasible(Vec<Violation>),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything a solver needs: network, catalog, demand and the global pool.
#[derive(Debug, Clone)]
pub struct Instance {
    topology: Arc<Topology>,
    catalog: Arc<Catalog>,
    demand: DemandMatrix,
    c_sum: u64,
}

impl Instance {
    pub fn new(
        topology: Arc<Topology>,
        catalog: Arc<Catalog>,
        demand: DemandMatrix,
        c_sum: u64,
    ) -> Result<Self, SolveError> {
        if demand.node_count() != topology.node_count() {
            return Err(SolveError::Dimension(format!(
                "demand has {} rows, topology has {} nodes",
                demand.node_count(),
                topology.node_count()
            )));
        }
        if demand.object_count() != catalog.object_count() {
            return Err(SolveError::Dimension(format!(
                "demand has {} columns, catalog has {} objects",
                demand.object_count(),
                catalog.object_count()
            )));
        }
        Ok(Self {
            topology,
            catalog,
            demand,
            c_sum,
        })
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn demand(&self) -> &DemandMatrix {
        &self.demand
    }

    pub fn c_sum(&self) -> u64 {
        self.c_sum
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn object_count(&self) -> usize {
        self.catalog.object_count()
    }

    pub fn with_c_sum(&self, c_sum: u64) -> Self {
        Self {
            c_sum,
            ..self.clone()
        }
    }

    pub fn with_demand(&self, demand: DemandMatrix) -> Result<Self, SolveError> {
        Self::new(
            self.topology.clone(),
            self.catalog.clone(),
            demand,
            self.c_sum,
        )
    }

    /// `sum q[i][k] * S[k]`, the normalizer turning raw cost into average
    /// response hops.
    pub fn total_weight(&self) -> f64 {
        let sizes = self.catalog.sizes();
        self.demand
            .rates()
            .indexed_iter()
            .map(|((_, k), &q)| q * sizes[k] as f64)
            .sum()
    }

    /// Raw objective divided by total weight.
    pub fn average_hops(&self, cost: f64) -> f64 {
        cost / self.total_weight()
    }

    /// Cost when every request goes to the origin.
    pub fn origin_only_cost(&self) -> f64 {
        let sizes = self.catalog.sizes();
        self.demand
            .rates()
            .indexed_iter()
            .map(|((i, k), &q)| q * sizes[k] as f64 * self.topology.origin_hops(i) as f64)
            .sum()
    }

    fn tolerance(&self) -> f64 {
        COST_TOL * self.origin_only_cost().max(f64::MIN_POSITIVE)
    }
}

/// Cache residency `x[i][k]` and per-router budgets `C_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Placement {
    #[serde(skip)]
    x: Array2<bool>,
    budgets: Vec<u64>,
}

impl Placement {
    /// No copies; budgets as given.
    pub fn empty(object_count: usize, budgets: Vec<u64>) -> Self {
        Self {
            x: Array2::from_elem((budgets.len(), object_count), false),
            budgets,
        }
    }

    /// No copies; `c_sum` split as evenly as possible, lower indices taking
    /// the remainder.
    pub fn equal_split(node_count: usize, object_count: usize, c_sum: u64) -> Self {
        Self::empty(object_count, equal_budgets(node_count, c_sum))
    }

    pub fn new(x: Array2<bool>, budgets: Vec<u64>) -> Self {
        Self { x, budgets }
    }

    /// Budgets follow used capacity; `c_sum - used` is added to router 0.
    /// Callers guarantee `used <= c_sum`.
    pub fn pooled(x: Array2<bool>, sizes: &[u64], c_sum: u64) -> Self {
        let mut budgets: Vec<u64> = x
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .zip(sizes)
                    .filter(|(&held, _)| held)
                    .map(|(_, &s)| s)
                    .sum()
            })
            .collect();
        let used: u64 = budgets.iter().sum();
        if let Some(first) = budgets.first_mut() {
            *first += c_sum - used;
        }
        Self { x, budgets }
    }

    pub fn residency(&self) -> &Array2<bool> {
        &self.x
    }

    #[inline]
    pub fn holds(&self, node: usize, object: usize) -> bool {
        self.x[[node, object]]
    }

    pub fn budgets(&self) -> &[u64] {
        &self.budgets
    }

    pub fn node_count(&self) -> usize {
        self.x.nrows()
    }

    pub fn object_count(&self) -> usize {
        self.x.ncols()
    }

    /// Capacity used at `node`.
    pub fn used(&self, node: usize, sizes: &[u64]) -> u64 {
        self.x
            .row(node)
            .iter()
            .zip(sizes)
            .filter(|(&held, _)| held)
            .map(|(_, &s)| s)
            .sum()
    }

    /// Objects resident at `node`, ascending.
    pub fn objects_at(&self, node: usize) -> Vec<usize> {
        self.x
            .row(node)
            .iter()
            .enumerate()
            .filter(|(_, &held)| held)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn copy_count(&self) -> usize {
        self.x.iter().filter(|&&b| b).count()
    }

    /// Resident copies as `node,object` rows (objects one-based).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SolveError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["node", "object"])?;
        for ((i, k), &held) in self.x.indexed_iter() {
            if held {
                writer.write_record([i.to_string(), (k + 1).to_string()])?;
            }
        }
        writer.flush()?;
        Ok(())
    }

    /// Budgets as `node,budget` rows.
    pub fn write_budgets_csv<W: Write>(&self, out: W) -> Result<(), SolveError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["node", "budget"])?;
        for (i, b) in self.budgets.iter().enumerate() {
            writer.write_record([i.to_string(), b.to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }
}

pub fn equal_budgets(node_count: usize, c_sum: u64) -> Vec<u64> {
    let n = node_count as u64;
    (0..n)
        .map(|i| c_sum / n + u64::from(i < c_sum % n))
        .collect()
}

/// Where router `i` downloads object `k` from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Supplier {
    Router(usize),
    Origin,
}

impl fmt::Display for Supplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Supplier::Router(j) => write!(f, "{j}"),
            Supplier::Origin => f.write_str("origin"),
        }
    }
}

/// Hop distance from `node` to `supplier`.
#[inline]
pub fn supplier_distance(topology: &Topology, node: usize, supplier: Supplier) -> u32 {
    match supplier {
        Supplier::Router(j) => topology.hops(node, j),
        Supplier::Origin => topology.origin_hops(node),
    }
}

/// The download map: one supplier per `(router, object)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    supplier: Array2<Supplier>,
}

impl Assignment {
    pub fn new(supplier: Array2<Supplier>) -> Self {
        Self { supplier }
    }

    #[inline]
    pub fn supplier(&self, node: usize, object: usize) -> Supplier {
        self.supplier[[node, object]]
    }

    pub fn suppliers(&self) -> &Array2<Supplier> {
        &self.supplier
    }
}

/// Each request goes to the closest router holding a copy; ties go to the
/// lowest router index and a router beats the origin at equal distance.
pub fn nearest_copy_assignment(placement: &Placement, instance: &Instance) -> Assignment {
    let topo = instance.topology();
    let (n, m) = (instance.node_count(), instance.object_count());
    let supplier = Array2::from_shape_fn((n, m), |(i, k)| {
        let mut best = Supplier::Origin;
        let mut best_dist = topo.origin_hops(i);
        for j in 0..n {
            if placement.holds(j, k) {
                let d = topo.hops(i, j);
                if d < best_dist || (d == best_dist && best == Supplier::Origin) {
                    best = Supplier::Router(j);
                    best_dist = d;
                }
            }
        }
        best
    });
    Assignment { supplier }
}

/// Raw objective in hop x size x rate units.
pub fn evaluate_objective(assignment: &Assignment, instance: &Instance) -> f64 {
    let topo = instance.topology();
    let sizes = instance.catalog().sizes();
    instance
        .demand()
        .rates()
        .indexed_iter()
        .map(|((i, k), &q)| {
            let d = supplier_distance(topo, i, assignment.supplier(i, k));
            q * d as f64 * sizes[k] as f64
        })
        .sum()
}

/// Objective of a placement under its nearest-copy assignment.
pub fn placement_cost(placement: &Placement, instance: &Instance) -> f64 {
    evaluate_objective(&nearest_copy_assignment(placement, instance), instance)
}

/// A violated constraint of the placement model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    /// Objects resident at `node` exceed its budget.
    Capacity { node: usize, used: u64, budget: u64 },
    /// Budgets do not add up to the pool.
    Pool { total: u64, c_sum: u64 },
    /// Placement shape does not match the instance.
    Shape { nodes: usize, objects: usize },
}

impl Violation {
    /// Index of the violated constraint: 1 and 2 concern the download map and
    /// hold by construction, 3 is per-router capacity, 4 is the conserved
    /// pool. Shape mismatches report 0.
    pub fn constraint(&self) -> u8 {
        match self {
            Violation::Capacity { .. } => 3,
            Violation::Pool { .. } => 4,
            Violation::Shape { .. } => 0,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Capacity { node, used, budget } => write!(
                f,
                "constraint 3: node {node} holds {used} size units over budget {budget}"
            ),
            Violation::Pool { total, c_sum } => {
                write!(f, "constraint 4: budgets sum to {total}, pool is {c_sum}")
            }
            Violation::Shape { nodes, objects } => {
                write!(
                    f,
                    "placement shape {nodes}x{objects} does not match instance"
                )
            }
        }
    }
}

/// Checks per-router capacity and pool conservation. The single-supplier and
/// supplier-holds-copy constraints are satisfied by every nearest-copy
/// assignment since the origin always holds every object.
pub fn check_feasibility(placement: &Placement, instance: &Instance) -> Result<(), Vec<Violation>> {
    let (n, m) = (instance.node_count(), instance.object_count());
    if placement.node_count() != n
        || placement.object_count() != m
        || placement.budgets().len() != n
    {
        return Err(vec![Violation::Shape {
            nodes: placement.node_count(),
            objects: placement.object_count(),
        }]);
    }
    let sizes = instance.catalog().sizes();
    let mut violations = Vec::new();
    for node in 0..n {
        let used = placement.used(node, sizes);
        let budget = placement.budgets()[node];
        if used > budget {
            violations.push(Violation::Capacity { node, used, budget });
        }
    }
    let total: u64 = placement.budgets().iter().sum();
    if total != instance.c_sum() {
        violations.push(Violation::Pool {
            total,
            c_sum: instance.c_sum(),
        });
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// A placement with its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub placement: Placement,
    pub cost: f64,
}

impl Solution {
    pub fn average_hops(&self, instance: &Instance) -> f64 {
        instance.average_hops(self.cost)
    }
}

/// Solver diagnostics for the greedy + local search pipeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveReport {
    pub greedy_steps: usize,
    /// Objective decrease of each greedy insertion, in order.
    pub gain_trace: Vec<f64>,
    pub greedy_cost: f64,
    pub local_search_moves: usize,
    pub final_cost: f64,
}

/// Exhaustive search over every placement fitting the pool. Subsets of
/// `(node, object)` cells are visited in lexicographic order of their sorted
/// row-major indices and only strict improvements replace the incumbent, so
/// the first optimal placement in that order is returned.
pub fn exact_solve(instance: &Instance) -> Result<Solution, SolveError> {
    let (n, m) = (instance.node_count(), instance.object_count());
    let cells = n * m;
    if cells > EXACT_MAX_CELLS || instance.c_sum() > EXACT_MAX_POOL {
        return Err(SolveError::InstanceTooLarge {
            cells,
            pool: instance.c_sum(),
        });
    }

    struct Search<'a> {
        ws: Workspace<'a>,
        sizes: &'a [u64],
        object_count: usize,
        cells: usize,
        tol: f64,
        best_cost: f64,
        best: Vec<usize>,
        chosen: Vec<usize>,
    }

    impl Search<'_> {
        fn visit(&mut self, start: usize, remaining: u64) {
            let cost = self.ws.cost();
            if cost < self.best_cost - self.tol {
                self.best_cost = cost;
                self.best = self.chosen.clone();
            }
            for cell in start..self.cells {
                let (i, k) = (cell / self.object_count, cell % self.object_count);
                let size = self.sizes[k];
                if size > remaining {
                    continue;
                }
                let saved = self.ws.column(k);
                self.ws.add(i, k);
                self.chosen.push(cell);
                self.visit(cell + 1, remaining - size);
                self.chosen.pop();
                self.ws.remove_with(i, k, &saved);
            }
        }
    }

    let ws = Workspace::new(instance, &Array2::from_elem((n, m), false));
    let best_cost = ws.cost();
    let mut search = Search {
        ws,
        sizes: instance.catalog().sizes(),
        object_count: m,
        cells,
        tol: instance.tolerance(),
        best_cost,
        best: Vec::new(),
        chosen: Vec::new(),
    };
    search.visit(0, instance.c_sum());

    let mut x = Array2::from_elem((n, m), false);
    for &cell in &search.best {
        x[[cell / m, cell % m]] = true;
    }
    let placement = Placement::pooled(x, instance.catalog().sizes(), instance.c_sum());
    let cost = placement_cost(&placement, instance);
    Ok(Solution { placement, cost })
}

/// Greedy marginal-gain placement starting from the empty cache set.
pub fn greedy_solve(instance: &Instance) -> Solution {
    greedy_with_report(instance).0
}

fn greedy_with_report(instance: &Instance) -> (Solution, SolveReport) {
    let (n, m) = (instance.node_count(), instance.object_count());
    let sizes = instance.catalog().sizes();
    let mut ws = Workspace::new(instance, &Array2::from_elem((n, m), false));
    let mut gains = Array2::zeros((n, m));
    for k in 0..m {
        ws.fill_gain_column(k, &mut gains);
    }
    let mut remaining = instance.c_sum();
    let mut report = SolveReport::default();

    loop {
        // best ratio, then larger gain, then lower i, then lower k
        let mut pick: Option<(usize, usize, f64, f64)> = None;
        for ((i, k), &gain) in gains.indexed_iter() {
            if gain <= 0.0 || ws.x[[i, k]] || sizes[k] > remaining {
                continue;
            }
            let ratio = gain / sizes[k] as f64;
            let better = match pick {
                None => true,
                Some((_, _, best_gain, best_ratio)) => {
                    ratio > best_ratio || (ratio == best_ratio && gain > best_gain)
                }
            };
            if better {
                pick = Some((i, k, gain, ratio));
            }
        }
        let Some((i, k, gain, _)) = pick else { break };
        ws.add(i, k);
        remaining -= sizes[k];
        ws.fill_gain_column(k, &mut gains);
        report.greedy_steps += 1;
        report.gain_trace.push(gain);
    }

    let placement = Placement::pooled(ws.x.clone(), sizes, instance.c_sum());
    let cost = placement_cost(&placement, instance);
    report.greedy_cost = cost;
    report.final_cost = cost;
    (Solution { placement, cost }, report)
}

/// First-improvement swap search: drop one resident copy and add one absent
/// copy that fits in the freed capacity plus pool slack, whenever that lowers
/// the objective. Removal candidates are scanned cyclically in row-major
/// order; the search stops after a full cycle without improvement or after
/// `max_iters` accepted swaps.
pub fn local_search(
    instance: &Instance,
    placement: &Placement,
    max_iters: usize,
) -> Result<Solution, SolveError> {
    local_search_counted(instance, placement, max_iters).map(|(s, _)| s)
}

fn local_search_counted(
    instance: &Instance,
    placement: &Placement,
    max_iters: usize,
) -> Result<(Solution, usize), SolveError> {
    check_feasibility(placement, instance).map_err(SolveError::Infeasible)?;
    let (n, m) = (instance.node_count(), instance.object_count());
    let cells = n * m;
    let sizes = instance.catalog().sizes();
    let tol = instance.tolerance();

    let mut ws = Workspace::new(instance, placement.residency());
    let mut slack = instance.c_sum() - ws.total_used();
    let mut gains = Array2::zeros((n, m));
    let mut column_max = vec![0.0f64; m];
    for k in 0..m {
        column_max[k] = ws.fill_gain_column(k, &mut gains);
    }

    let mut moves = 0;
    let mut without = vec![0u32; n];
    let mut same_object_gain = vec![0.0f64; n];
    let mut cell = 0;
    let mut since_improvement = 0;

    while moves < max_iters && since_improvement < cells {
        let (i, k) = (cell / m, cell % m);
        cell = (cell + 1) % cells;
        since_improvement += 1;
        if !ws.x[[i, k]] {
            continue;
        }

        let loss = ws.removal_loss(i, k, &mut without);
        let freed = sizes[k] + slack;

        // Same-object relocation evaluated against the column without (i, k).
        let mut best_same = 0.0f64;
        for (j, g) in same_object_gain.iter_mut().enumerate() {
            *g = if j == i || ws.x[[j, k]] {
                0.0
            } else {
                ws.gain_against(j, k, &without)
            };
            best_same = best_same.max(*g);
        }
        let best_other = column_max
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != k)
            .map(|(_, &g)| g)
            .fold(0.0f64, f64::max);
        if best_same <= loss + tol && best_other <= loss + tol {
            continue;
        }

        let mut accepted = None;
        'scan: for j in 0..n {
            for c in 0..m {
                if ws.x[[j, c]] {
                    continue;
                }
                let gain = if c == k {
                    same_object_gain[j]
                } else {
                    if sizes[c] > freed {
                        continue;
                    }
                    gains[[j, c]]
                };
                if gain > loss + tol {
                    accepted = Some((j, c));
                    break 'scan;
                }
            }
        }
        let Some((j, c)) = accepted else { continue };

        ws.remove(i, k);
        ws.add(j, c);
        slack = freed - sizes[c];
        column_max[k] = ws.fill_gain_column(k, &mut gains);
        if c != k {
            column_max[c] = ws.fill_gain_column(c, &mut gains);
        }
        moves += 1;
        since_improvement = 0;
    }

    if moves == 0 {
        let cost = placement_cost(placement, instance);
        return Ok((
            Solution {
                placement: placement.clone(),
                cost,
            },
            0,
        ));
    }
    let placement = Placement::pooled(ws.x.clone(), sizes, instance.c_sum());
    let cost = placement_cost(&placement, instance);
    Ok((Solution { placement, cost }, moves))
}

/// Default local search iteration bound, `10 * N * M`.
pub fn default_max_iters(instance: &Instance) -> usize {
    10 * instance.node_count() * instance.object_count()
}

/// Production solver: greedy construction followed by local search.
pub fn solve(instance: &Instance) -> Solution {
    solve_with_report(instance).0
}

pub fn solve_with_report(instance: &Instance) -> (Solution, SolveReport) {
    let (greedy, mut report) = greedy_with_report(instance);
    let (solution, moves) =
        local_search_counted(instance, &greedy.placement, default_max_iters(instance))
            .expect("greedy output is feasible");
    report.local_search_moves = moves;
    report.final_cost = solution.cost;
    (solution, report)
}

/// Incremental evaluation state shared by the solvers: residency plus the
/// nearest supplier distance of every `(requester, object)` pair.
struct Workspace<'a> {
    topology: &'a Topology,
    sizes: &'a [u64],
    x: Array2<bool>,
    /// Column-major by object: `nearest[k * n + r]`.
    nearest: Vec<u32>,
    /// `q[r][k] * S[k]`, same layout as `nearest`.
    weight: Vec<f64>,
    origin: Vec<u32>,
    n: usize,
}

impl<'a> Workspace<'a> {
    fn new(instance: &'a Instance, x: &Array2<bool>) -> Self {
        let topology = instance.topology().as_ref();
        let sizes = instance.catalog().sizes();
        let (n, m) = (instance.node_count(), instance.object_count());
        let origin: Vec<u32> = (0..n).map(|r| topology.origin_hops(r)).collect();
        let mut weight = vec![0.0; n * m];
        for ((r, k), &q) in instance.demand().rates().indexed_iter() {
            weight[k * n + r] = q * sizes[k] as f64;
        }
        let mut ws = Self {
            topology,
            sizes,
            x: x.clone(),
            nearest: vec![0; n * m],
            weight,
            origin,
            n,
        };
        for k in 0..m {
            ws.refresh_column(k);
        }
        ws
    }

    fn refresh_column(&mut self, k: usize) {
        let n = self.n;
        for r in 0..n {
            let mut d = self.origin[r];
            for j in 0..n {
                if self.x[[j, k]] {
                    d = d.min(self.topology.hops(r, j));
                }
            }
            self.nearest[k * n + r] = d;
        }
    }

    fn cost(&self) -> f64 {
        self.nearest
            .iter()
            .zip(&self.weight)
            .map(|(&d, &w)| w * d as f64)
            .sum()
    }

    fn total_used(&self) -> u64 {
        self.x
            .indexed_iter()
            .filter(|(_, &held)| held)
            .map(|((_, k), _)| self.sizes[k])
            .sum()
    }

    fn column(&self, k: usize) -> Vec<u32> {
        self.nearest[k * self.n..(k + 1) * self.n].to_vec()
    }

    fn add(&mut self, i: usize, k: usize) {
        let n = self.n;
        self.x[[i, k]] = true;
        for r in 0..n {
            let d = self.topology.hops(r, i);
            let slot = &mut self.nearest[k * n + r];
            if d < *slot {
                *slot = d;
            }
        }
    }

    fn remove(&mut self, i: usize, k: usize) {
        self.x[[i, k]] = false;
        self.refresh_column(k);
    }

    fn remove_with(&mut self, i: usize, k: usize, saved: &[u32]) {
        self.x[[i, k]] = false;
        self.nearest[k * self.n..(k + 1) * self.n].copy_from_slice(saved);
    }

    /// Objective decrease from adding `(i, k)` against the distances in
    /// `column`.
    fn gain_against(&self, i: usize, k: usize, column: &[u32]) -> f64 {
        let n = self.n;
        let weights = &self.weight[k * n..(k + 1) * n];
        let mut gain = 0.0;
        for r in 0..n {
            let d = self.topology.hops(r, i);
            if d < column[r] {
                gain += weights[r] * (column[r] - d) as f64;
            }
        }
        gain
    }

    /// Recomputes addition gains of column `k` (zero for resident cells) and
    /// returns the column maximum.
    fn fill_gain_column(&self, k: usize, gains: &mut Array2<f64>) -> f64 {
        let n = self.n;
        let column = &self.nearest[k * n..(k + 1) * n];
        let mut max = 0.0f64;
        for i in 0..n {
            let g = if self.x[[i, k]] {
                0.0
            } else {
                self.gain_against(i, k, column)
            };
            gains[[i, k]] = g;
            max = max.max(g);
        }
        max
    }

    /// Objective increase from dropping resident `(i, k)`; fills `without`
    /// with the column distances after the drop.
    fn removal_loss(&self, i: usize, k: usize, without: &mut [u32]) -> f64 {
        let n = self.n;
        let mut loss = 0.0;
        for r in 0..n {
            let mut d = self.origin[r];
            for j in 0..n {
                if j != i && self.x[[j, k]] {
                    d = d.min(self.topology.hops(r, j));
                }
            }
            without[r] = d;
            loss += self.weight[k * n + r] * (d - self.nearest[k * n + r]) as f64;
        }
        loss
    }
}
