#![allow(dead_code)]

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use sdn_cache::net_model::{
    build_demand, generate_power_law_topology, Catalog, DemandMatrix, Topology,
};
use sdn_cache::optimizer::Instance;

/// Tiny instance from the model generator: N <= 4, M <= 5, C_sum <= 4,
/// unit sizes.
pub fn model_instance<R: Rng>(rng: &mut R) -> Instance {
    let n = rng.random_range(2..=4);
    let m = rng.random_range(1..=5);
    let c_sum = rng.random_range(0..=4);
    let alpha = rng.random_range(0.0..1.5);
    let penalty = rng.random_range(0..=4);
    let m_attach = rng.random_range(1..n);
    let topo = generate_power_law_topology(n, m_attach, rng.random())
        .unwrap()
        .with_origin_penalty(penalty);
    let catalog = Catalog::zipf(m, alpha).unwrap();
    let demand = build_demand(&topo, &catalog, rng.random_range(0.5..2.0)).unwrap();
    Instance::new(Arc::new(topo), Arc::new(catalog), demand, c_sum).unwrap()
}

/// Tiny instance with an arbitrary (non-uniform) demand matrix.
pub fn random_demand_instance<R: Rng>(rng: &mut R) -> Instance {
    let base = model_instance(rng);
    let (n, m) = (base.node_count(), base.object_count());
    let rates = Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..1.0));
    base.with_demand(DemandMatrix::new(rates).unwrap()).unwrap()
}

/// Path 0-1-2-...-(n-1) with the origin at `origin`.
pub fn path(n: usize, origin: usize, penalty: u32) -> Arc<Topology> {
    let edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
    Arc::new(Topology::from_edges(n, &edges, Some(origin), penalty).unwrap())
}

/// Objective of a residency matrix computed straight from the hop matrix.
pub fn brute_cost(inst: &Instance, x: &Array2<bool>) -> f64 {
    let topo = inst.topology();
    let (n, m) = (inst.node_count(), inst.object_count());
    let mut cost = 0.0;
    for i in 0..n {
        for k in 0..m {
            let mut d = topo.origin_hops(i);
            for j in 0..n {
                if x[[j, k]] {
                    d = d.min(topo.hops(i, j));
                }
            }
            cost += inst.demand().rate(i, k) * inst.catalog().size(k) as f64 * d as f64;
        }
    }
    cost
}

/// Minimum objective over every residency set whose total size fits the
/// pool, by plain recursive enumeration.
pub fn brute_optimum(inst: &Instance) -> f64 {
    fn go(inst: &Instance, x: &mut Array2<bool>, cell: usize, left: u64, best: &mut f64) {
        let m = inst.object_count();
        if cell == x.len() {
            *best = best.min(brute_cost(inst, x));
            return;
        }
        go(inst, x, cell + 1, left, best);
        let size = inst.catalog().size(cell % m);
        if size <= left {
            x[[cell / m, cell % m]] = true;
            go(inst, x, cell + 1, left - size, best);
            x[[cell / m, cell % m]] = false;
        }
    }
    let mut x = Array2::from_elem((inst.node_count(), inst.object_count()), false);
    let mut best = f64::INFINITY;
    go(inst, &mut x, 0, inst.c_sum(), &mut best);
    best
}

pub fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-9 * scale.max(1.0)
}
