use std::fs;
use std::path::PathBuf;

use sdn_cache::experiment::{
    read_runs_csv, run_experiment, summarize, write_summary_csv, ExperimentSpec, RunOptions,
    SweepVariable,
};
use sdn_cache::simnet::Scheme;

fn spec() -> ExperimentSpec {
    let mut spec = ExperimentSpec::demo();
    spec.sweep_values = vec![0.05, 0.1];
    spec.seeds = vec![4, 2];
    spec.parameters.nodes = 10;
    spec.parameters.objects = 20;
    spec.parameters.requests_per_epoch = 500;
    spec.parameters.epochs = 3;
    spec
}

fn run(spec: &ExperimentSpec, jobs: Option<usize>) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let outcome = run_experiment(
        spec,
        &RunOptions {
            jobs,
            output_override: Some(out.clone()),
            seed_override: None,
        },
    )
    .unwrap();
    assert!(outcome.succeeded());
    (dir, out)
}

#[test]
fn summary_is_recomputable_from_runs() {
    let (_dir, out) = run(&spec(), None);
    let rows = read_runs_csv(&out.join("runs.csv")).unwrap();
    assert_eq!(rows.len(), 2 * 5 * 2);
    let mut bytes = Vec::new();
    write_summary_csv(&summarize(&rows), &mut bytes).unwrap();
    assert_eq!(bytes, fs::read(out.join("summary.csv")).unwrap());
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let (_a, first) = run(&spec(), Some(1));
    let (_b, second) = run(&spec(), Some(3));
    for name in ["runs.csv", "summary.csv", "epochs.csv", "decisions.jsonl"] {
        assert_eq!(
            fs::read(first.join(name)).unwrap(),
            fs::read(second.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn runs_are_written_in_canonical_order() {
    let (_dir, out) = run(&spec(), None);
    let rows = read_runs_csv(&out.join("runs.csv")).unwrap();
    let keys: Vec<_> = rows
        .iter()
        .map(|r| (r.sweep_value, r.scheme, r.seed))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(keys, sorted);
    assert_eq!(keys[0], (0.05, Scheme::Optimized, 2));
}

#[test]
fn seed_override_replaces_spec_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_experiment(
        &spec(),
        &RunOptions {
            jobs: Some(1),
            output_override: Some(dir.path().to_path_buf()),
            seed_override: Some(vec![7]),
        },
    )
    .unwrap();
    assert!(outcome.runs.iter().all(|r| r.seed == 7));
    assert_eq!(outcome.summary.len(), 2 * 5);
    assert!(outcome
        .summary
        .iter()
        .all(|s| s.runs == 1 && s.avg_hops_std == 0.0));
}

#[test]
fn bundled_sweeps_are_valid() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../experiments");
    let size = ExperimentSpec::load(&root.join("cache_size.toml")).unwrap();
    assert_eq!(size.sweep_variable, SweepVariable::CacheFraction);
    assert_eq!(size.runs().len(), 10 * 5 * 10);
    assert_eq!(size.config(0.03, Scheme::LceLru, 1).alpha, 0.8);

    let skew = ExperimentSpec::load(&root.join("popularity.toml")).unwrap();
    assert_eq!(skew.sweep_variable, SweepVariable::Alpha);
    assert_eq!(skew.runs().len(), 5 * 5 * 10);
    assert_eq!(skew.config(1.2, Scheme::Optimized, 1).cache_fraction, 0.05);
}
