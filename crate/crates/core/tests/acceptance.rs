//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! straight to stdout so the verdicts show up even when output is captured.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use common::model_instance;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdn_cache::experiment::{run_experiment, ExperimentOutcome, ExperimentSpec, RunOptions};
use sdn_cache::net_model::{generate_power_law_topology, Catalog, DemandMatrix};
use sdn_cache::optimizer::{
    check_feasibility, evaluate_objective, exact_solve, greedy_solve, local_search,
    nearest_copy_assignment, solve, Instance, Placement, EXACT_MAX_CELLS, EXACT_MAX_POOL,
};
use sdn_cache::simnet::{
    random_placement, run_epoch, run_simulation, CachePolicy, Network, RequestMode, Scenario,
    Scheme, SimConfig, Workload,
};

// Criterion 1
const CORPUS_SIZE: usize = 200;
const CORPUS_SEED: u64 = 2024;
const MIN_MATCH_SHARE: f64 = 0.95;
const MAX_COST_RATIO: f64 = 1.05;
const CORPUS_TIME_LIMIT: Duration = Duration::from_secs(30);
// Criterion 2
const MAX_Y_CANDIDATES: u64 = 100_000;
// Criterion 3
const IDENTITY_TOL: f64 = 1e-9;
const IDENTITY_INSTANCES: usize = 500;
// Criterion 4
const SWEEP_TIME_LIMIT: Duration = Duration::from_secs(30 * 60);
// Criterion 6
const FEASIBILITY_OUTPUTS: usize = 10_000;
const FUZZ_REQUESTS: usize = 100_000;
// Criterion 7
const LOOP_REQUESTS: u64 = 100_000;

fn verdict(criterion: &str, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let status = if pass { "PASS" } else { "FAIL" };
    writeln!(out, "acceptance {criterion}: {status} ({detail})").unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {criterion} failed: {detail}");
}

/// Costs equal up to floating-point summation noise.
fn same_cost(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-9 * scale.max(1.0)
}

fn corpus() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED);
    (0..CORPUS_SIZE).map(|_| model_instance(&mut rng)).collect()
}

#[test]
fn criterion_1_oracle_equivalence() {
    let instances = corpus();
    let start = Instant::now();
    let mut matches = 0;
    let mut worst: f64 = 1.0;
    for inst in &instances {
        assert!(inst.node_count() <= 4 && inst.object_count() <= 5 && inst.c_sum() <= 4);
        assert!(inst.catalog().sizes().iter().all(|&s| s == 1));
        let exact = exact_solve(inst).unwrap().cost;
        let got = solve(inst).cost;
        if same_cost(got, exact, inst.origin_only_cost()) {
            matches += 1;
        } else {
            worst = worst.max(if exact > 0.0 {
                got / exact
            } else {
                f64::INFINITY
            });
        }
    }
    let elapsed = start.elapsed();
    let share = matches as f64 / instances.len() as f64;
    verdict(
        "1",
        share >= MIN_MATCH_SHARE && worst <= MAX_COST_RATIO && elapsed < CORPUS_TIME_LIMIT,
        &format!(
            "{matches}/{} exact matches, worst ratio {worst:.4}, {:.2?}",
            instances.len(),
            elapsed
        ),
    );
}

/// Cost of serving every (node, object) pair from the given suppliers,
/// where `None` stands for the origin.
fn assignment_cost(inst: &Instance, suppliers: &[(usize, usize, Option<usize>)]) -> f64 {
    let topo = inst.topology();
    suppliers
        .iter()
        .map(|&(i, k, s)| {
            let d = match s {
                Some(j) => topo.hops(i, j),
                None => topo.origin_hops(i),
            };
            inst.demand().rate(i, k) * inst.catalog().size(k) as f64 * d as f64
        })
        .sum()
}

#[test]
fn criterion_2_assignment_optimality() {
    let mut checked = 0u64;
    let mut violations = 0;
    for inst in corpus() {
        let placement = solve(&inst).placement;
        let (n, m) = (inst.node_count(), inst.object_count());
        // options per (node, object): the origin or any router holding it
        let cells: Vec<(usize, usize, Vec<Option<usize>>)> = (0..n)
            .flat_map(|i| (0..m).map(move |k| (i, k)))
            .map(|(i, k)| {
                let mut opts = vec![None];
                opts.extend((0..n).filter(|&j| placement.holds(j, k)).map(Some));
                (i, k, opts)
            })
            .collect();
        let candidates: u64 = cells.iter().map(|c| c.2.len() as u64).product();
        assert!(candidates < MAX_Y_CANDIDATES, "{candidates} candidates");

        let nearest = evaluate_objective(&nearest_copy_assignment(&placement, &inst), &inst);
        let mut best = f64::INFINITY;
        let mut digits = vec![0usize; cells.len()];
        loop {
            let y: Vec<_> = cells
                .iter()
                .zip(&digits)
                .map(|(c, &d)| (c.0, c.1, c.2[d]))
                .collect();
            let cost = assignment_cost(&inst, &y);
            best = best.min(cost);
            if nearest > cost + 1e-9 * cost.max(1.0) {
                violations += 1;
            }
            checked += 1;
            // odometer increment
            let mut pos = 0;
            while pos < digits.len() {
                digits[pos] += 1;
                if digits[pos] < cells[pos].2.len() {
                    break;
                }
                digits[pos] = 0;
                pos += 1;
            }
            if pos == digits.len() {
                break;
            }
        }
        if !same_cost(nearest, best, best) {
            violations += 1;
        }
    }
    verdict(
        "2",
        violations == 0,
        &format!("{checked} assignments enumerated, {violations} beat nearest-copy"),
    );
}

#[test]
fn criterion_3_simulator_objective_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst: f64 = 0.0;
    for _ in 0..IDENTITY_INSTANCES {
        let n = rng.random_range(2..=12);
        let m = rng.random_range(1..=15);
        let topo = Arc::new(
            generate_power_law_topology(n, rng.random_range(1..n), rng.random())
                .unwrap()
                .with_origin_penalty(rng.random_range(0..=4)),
        );
        let sizes = (0..m).map(|_| rng.random_range(1..=4)).collect();
        let catalog = Arc::new(Catalog::with_sizes(sizes, 0.8).unwrap());
        let mut counts = Array2::from_shape_fn((n, m), |_| rng.random_range(0..6u64));
        counts[[0, 0]] += 1;
        let demand = DemandMatrix::new(counts.mapv(|c| c as f64)).unwrap();
        let budgets: Vec<u64> = (0..n).map(|_| rng.random_range(0..8)).collect();
        let c_sum = budgets.iter().sum();
        let inst = Instance::new(topo.clone(), catalog.clone(), demand, c_sum).unwrap();

        let placement = if rng.random_bool(0.5) {
            random_placement(&catalog, &budgets, &mut rng)
        } else {
            solve(&inst).placement
        };
        let mut network = Network::new(
            topo,
            catalog.clone(),
            placement.budgets(),
            CachePolicy::Pinned,
        );
        network.apply_placement(&placement).unwrap();
        let outcome = run_epoch(&mut network, &Workload::from_counts(&counts), &mut rng);

        let objective = evaluate_objective(&nearest_copy_assignment(&placement, &inst), &inst);
        let weight: f64 = counts
            .indexed_iter()
            .map(|((_, k), &c)| c as f64 * catalog.size(k) as f64)
            .sum();
        worst = worst.max((outcome.metrics.size_weighted_avg_hops - objective / weight).abs());
    }
    verdict(
        "3",
        worst <= IDENTITY_TOL,
        &format!(
            "{IDENTITY_INSTANCES} pinned placements, max |measured - objective| = {worst:.3e}"
        ),
    );
}

fn sweep_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../experiments")
        .join(name)
}

struct Sweep {
    _dir: tempfile::TempDir,
    outcome: ExperimentOutcome,
    elapsed: Duration,
}

fn run_sweep(name: &str) -> Sweep {
    let spec = ExperimentSpec::load(&sweep_path(name)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let outcome = run_experiment(
        &spec,
        &RunOptions {
            output_override: Some(dir.path().to_path_buf()),
            ..RunOptions::default()
        },
    )
    .unwrap();
    assert!(outcome.succeeded(), "{:?}", outcome.failures);
    Sweep {
        _dir: dir,
        outcome,
        elapsed: start.elapsed(),
    }
}

fn cache_size_sweep() -> &'static Sweep {
    static SWEEP: OnceLock<Sweep> = OnceLock::new();
    SWEEP.get_or_init(|| run_sweep("cache_size.toml"))
}

fn popularity_sweep() -> &'static Sweep {
    static SWEEP: OnceLock<Sweep> = OnceLock::new();
    SWEEP.get_or_init(|| run_sweep("popularity.toml"))
}

/// (mean, sample std) per sweep point and scheme.
type Table = Vec<(f64, BTreeMap<Scheme, (f64, f64)>)>;

fn table(sweep: &Sweep) -> Table {
    let mut out: Table = Vec::new();
    for s in &sweep.outcome.summary {
        if out.last().map(|r| r.0) != Some(s.sweep_value) {
            out.push((s.sweep_value, BTreeMap::new()));
        }
        out.last_mut()
            .unwrap()
            .1
            .insert(s.scheme, (s.avg_hops_mean, s.avg_hops_std));
    }
    out
}

/// Largest difference in mean average hops between any two of `schemes`.
fn gap(row: &BTreeMap<Scheme, (f64, f64)>, schemes: &[Scheme]) -> f64 {
    let means: Vec<f64> = schemes.iter().map(|s| row[s].0).collect();
    let max = means.iter().cloned().fold(f64::MIN, f64::max);
    let min = means.iter().cloned().fold(f64::MAX, f64::min);
    max - min
}

const CACHING: [Scheme; 4] = [
    Scheme::Optimized,
    Scheme::LceLru,
    Scheme::LceLfu,
    Scheme::RandomStatic,
];

#[test]
fn criterion_4a_optimized_non_increasing_in_cache_size() {
    let sweep = cache_size_sweep();
    let t = table(sweep);
    let mut bad = Vec::new();
    for w in t.windows(2) {
        let (m0, s0) = w[0].1[&Scheme::Optimized];
        let (m1, s1) = w[1].1[&Scheme::Optimized];
        let pooled = ((s0 * s0 + s1 * s1) / 2.0).sqrt();
        if m1 > m0 + pooled {
            bad.push(format!(
                "{} -> {}: {m0:.4} -> {m1:.4} (pooled std {pooled:.4})",
                w[0].0, w[1].0
            ));
        }
    }
    let curve: Vec<String> = t
        .iter()
        .map(|r| format!("{:.3}", r.1[&Scheme::Optimized].0))
        .collect();
    verdict(
        "4(a)",
        bad.is_empty() && t.len() == 10 && sweep.elapsed < SWEEP_TIME_LIMIT,
        &format!(
            "OPTIMIZED [{}], {} violations, sweep took {:.1?}",
            curve.join(", "),
            bad.len(),
            sweep.elapsed
        ),
    );
}

#[test]
fn criterion_4b_optimized_best_at_every_cache_size() {
    let t = table(cache_size_sweep());
    let mut bad = Vec::new();
    for (value, row) in &t {
        let opt = row[&Scheme::Optimized].0;
        for s in [Scheme::LceLru, Scheme::LceLfu, Scheme::RandomStatic] {
            if opt > row[&s].0 {
                bad.push(format!("{value}: {s} {:.4} < {opt:.4}", row[&s].0));
            }
        }
    }
    verdict(
        "4(b)",
        bad.is_empty(),
        &format!("{} points, violations {bad:?}", t.len()),
    );
}

#[test]
fn criterion_4c_gap_grows_with_cache_size() {
    let t = table(cache_size_sweep());
    let (first, last) = (&t[0].1, &t[t.len() - 1].1);
    let all = Scheme::ALL;
    let (g_small, g_large) = (gap(first, &all), gap(last, &all));
    verdict(
        "4(c)",
        g_large > g_small,
        &format!(
            "gap at {} = {g_small:.4}, at {} = {g_large:.4}; caching schemes only: {:.4} vs {:.4}",
            t[0].0,
            t[t.len() - 1].0,
            gap(first, &CACHING),
            gap(last, &CACHING)
        ),
    );
}

#[test]
fn criterion_5a_popularity_aware_schemes_non_increasing_in_alpha() {
    let t = table(popularity_sweep());
    let mut bad = Vec::new();
    for s in [Scheme::Optimized, Scheme::LceLru, Scheme::LceLfu] {
        for w in t.windows(2) {
            let (m0, m1) = (w[0].1[&s].0, w[1].1[&s].0);
            if m1 > m0 {
                bad.push(format!("{s} {} -> {}: {m0:.4} -> {m1:.4}", w[0].0, w[1].0));
            }
        }
    }
    verdict(
        "5(a)",
        bad.is_empty() && t.len() == 5,
        &format!("violations {bad:?}"),
    );
}

#[test]
fn criterion_5b_optimized_lowest_at_every_alpha() {
    let t = table(popularity_sweep());
    let mut bad = Vec::new();
    for (value, row) in &t {
        let opt = row[&Scheme::Optimized].0;
        for (s, (mean, _)) in row {
            if *s != Scheme::Optimized && *mean < opt {
                bad.push(format!("{value}: {s} {mean:.4} < {opt:.4}"));
            }
        }
    }
    verdict(
        "5(b)",
        bad.is_empty(),
        &format!("{} points, violations {bad:?}", t.len()),
    );
}

#[test]
fn criterion_5c_gap_shrinks_with_popularity() {
    let t = table(popularity_sweep());
    let (first, last) = (&t[0].1, &t[t.len() - 1].1);
    let all = Scheme::ALL;
    let (g_flat, g_skewed) = (gap(first, &all), gap(last, &all));
    verdict(
        "5(c)",
        g_skewed < g_flat,
        &format!(
            "gap at alpha {} = {g_flat:.4}, at alpha {} = {g_skewed:.4}; caching schemes only: {:.4} vs {:.4}",
            t[0].0,
            t[t.len() - 1].0,
            gap(first, &CACHING),
            gap(last, &CACHING)
        ),
    );
}

#[test]
fn criterion_6_constraints_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut infeasible = 0;
    for t in 0..FEASIBILITY_OUTPUTS {
        let n = rng.random_range(2..=10);
        let m = rng.random_range(1..=12);
        let topo =
            Arc::new(generate_power_law_topology(n, rng.random_range(1..n), rng.random()).unwrap());
        let sizes = (0..m).map(|_| rng.random_range(1..=4)).collect();
        let catalog = Arc::new(Catalog::with_sizes(sizes, rng.random_range(0.0..1.5)).unwrap());
        let rates = Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..1.0));
        let demand = DemandMatrix::new(rates).unwrap();
        let c_sum = rng.random_range(0..=30);
        let inst = Instance::new(topo, catalog.clone(), demand, c_sum).unwrap();
        let placement = match t % 4 {
            0 if n * m <= EXACT_MAX_CELLS && c_sum <= EXACT_MAX_POOL => {
                exact_solve(&inst).unwrap().placement
            }
            1 => greedy_solve(&inst).placement,
            2 => {
                let start = random_placement(
                    &catalog,
                    &sdn_cache::optimizer::equal_budgets(n, c_sum),
                    &mut rng,
                );
                local_search(&inst, &start, 50).unwrap().placement
            }
            _ => solve(&inst).placement,
        };
        if check_feasibility(&placement, &inst).is_err() {
            infeasible += 1;
        }
    }

    // request fuzz over LRU and LFU caches of mixed sizes
    let mut breaches = 0;
    for policy in [CachePolicy::Lru, CachePolicy::Lfu] {
        let n = 20;
        let m = 60;
        let topo = Arc::new(generate_power_law_topology(n, 2, 6).unwrap());
        let sizes: Vec<u64> = (0..m).map(|_| rng.random_range(1..=5)).collect();
        let catalog = Arc::new(Catalog::with_sizes(sizes.clone(), 0.8).unwrap());
        let budgets: Vec<u64> = (0..n).map(|_| rng.random_range(0..=10)).collect();
        let mut network = Network::new(topo, catalog, &budgets, policy);
        for _ in 0..FUZZ_REQUESTS {
            network.handle_request(rng.random_range(0..n), rng.random_range(0..m));
            for cache in network.caches() {
                let mut residents: Vec<usize> = cache.residents().collect();
                let held: u64 = residents.iter().map(|&k| sizes[k]).sum();
                residents.sort_unstable();
                residents.dedup();
                let distinct = residents.len() == cache.residents().count();
                if held > cache.capacity() || held != cache.used() || !distinct {
                    breaches += 1;
                }
            }
        }
    }
    verdict(
        "6",
        infeasible == 0 && breaches == 0,
        &format!(
            "{FEASIBILITY_OUTPUTS} solver outputs, {infeasible} infeasible; {} fuzz requests, {breaches} capacity breaches",
            2 * FUZZ_REQUESTS
        ),
    );
}

/// Number of residency sets attaining the optimal cost.
fn count_optima(inst: &Instance) -> usize {
    fn go(inst: &Instance, x: &mut Array2<bool>, cell: usize, left: u64, costs: &mut Vec<f64>) {
        let m = inst.object_count();
        if cell == x.len() {
            costs.push(common::brute_cost(inst, x));
            return;
        }
        go(inst, x, cell + 1, left, costs);
        let size = inst.catalog().size(cell % m);
        if size <= left {
            x[[cell / m, cell % m]] = true;
            go(inst, x, cell + 1, left - size, costs);
            x[[cell / m, cell % m]] = false;
        }
    }
    let mut costs = Vec::new();
    let mut x = Array2::from_elem((inst.node_count(), inst.object_count()), false);
    go(inst, &mut x, 0, inst.c_sum(), &mut costs);
    let best = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    costs.iter().filter(|&&c| same_cost(c, best, best)).count()
}

#[test]
fn criterion_7_closed_loop_converges() {
    let mut mismatches = Vec::new();
    let mut decisions = 0;
    // star-shaped instances whose optimum is unique, so "equals" is decidable
    for seed in [1, 4, 5] {
        let config = SimConfig {
            scheme: Scheme::Optimized,
            seed,
            nodes: 4,
            objects: 5,
            m_attach: 1,
            cache_fraction: 0.2,
            requests_per_epoch: LOOP_REQUESTS,
            epochs: 5,
            warmup_epochs: 1,
            request_mode: RequestMode::Iid,
            ..SimConfig::default()
        };
        let scenario = Scenario::from_config(&config).unwrap();
        let truth = Instance::new(
            scenario.topology.clone(),
            scenario.catalog.clone(),
            scenario.demand.clone(),
            scenario.c_sum(),
        )
        .unwrap();
        let exact: Placement = exact_solve(&truth).unwrap().placement;
        assert_eq!(
            count_optima(&truth),
            1,
            "seed {seed}: optimum is not unique"
        );
        let report = run_simulation(&config).unwrap();
        for d in report.decisions.iter().filter(|d| d.epoch_index >= 2) {
            decisions += 1;
            if d.placement.residency() != exact.residency() {
                mismatches.push(format!("seed {seed} epoch {}", d.epoch_index));
            }
        }
    }
    verdict(
        "7",
        mismatches.is_empty() && decisions == 9,
        &format!("{decisions} decisions from epoch 2 on, mismatches {mismatches:?}"),
    );
}

#[test]
fn criterion_8_sweep_is_deterministic() {
    let first = cache_size_sweep();
    let second = run_sweep("cache_size.toml");
    let a = std::fs::read(first.outcome.output_dir.join("runs.csv")).unwrap();
    let b = std::fs::read(second.outcome.output_dir.join("runs.csv")).unwrap();
    verdict(
        "8",
        a == b && !a.is_empty(),
        &format!("runs.csv {} bytes, identical: {}", a.len(), a == b),
    );
}
