//! Controller-side analytics: demand estimation from switch telemetry and
//! the epoch decision that turns an estimate into a placement directive.

use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::net_model::{Catalog, DemandMatrix, ModelError, Topology};
use crate::optimizer::{self, Instance, Placement, SolveError, SolveReport};
use crate::simnet::TelemetryLog;

/// Additive smoothing applied to request counts unless configured otherwise.
pub const DEFAULT_SMOOTHING: f64 = 0.1;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("telemetry log is empty and smoothing is zero")]
    EmptyLog,
    #[error("smoothing must be finite and nonnegative, got {0}")]
    InvalidSmoothing(f64),
    #[error("telemetry is {log_nodes}x{log_objects}, instance is {nodes}x{objects}")]
    Dimension {
        log_nodes: usize,
        log_objects: usize,
        nodes: usize,
        objects: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Empirical request rates per (node, object).
#[derive(Debug, Clone, PartialEq)]
pub struct DemandEstimate {
    pub rates_hat: Array2<f64>,
    pub sample_count: u64,
    pub smoothing: f64,
}

impl DemandEstimate {
    pub fn to_demand(&self) -> Result<DemandMatrix, ModelError> {
        DemandMatrix::new(self.rates_hat.clone())
    }

    /// Estimated popularity: column sums normalized to one.
    pub fn popularity(&self) -> Vec<f64> {
        let total = self.rates_hat.sum();
        self.rates_hat
            .columns()
            .into_iter()
            .map(|c| c.sum() / total)
            .collect()
    }

    /// CSV with header `node,object,rate_hat`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), AnalyticsError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["node", "object", "rate_hat"])?;
        for ((i, k), rate) in self.rates_hat.indexed_iter() {
            writer.write_record([i.to_string(), (k + 1).to_string(), rate.to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// `rates_hat[i][k] = requests[i][k] + smoothing`.
pub fn estimate_demand(
    log: &TelemetryLog,
    smoothing: f64,
) -> Result<DemandEstimate, AnalyticsError> {
    if !(smoothing >= 0.0) || !smoothing.is_finite() {
        return Err(AnalyticsError::InvalidSmoothing(smoothing));
    }
    let sample_count = log.total_requests();
    if sample_count == 0 && smoothing == 0.0 {
        return Err(AnalyticsError::EmptyLog);
    }
    let rates_hat = log.request_counts().mapv(|c| c as f64 + smoothing);
    Ok(DemandEstimate {
        rates_hat,
        sample_count,
        smoothing,
    })
}

/// Static part of the instance the controller re-solves every epoch.
#[derive(Debug, Clone)]
pub struct InstanceShell {
    pub topology: Arc<Topology>,
    pub catalog: Arc<Catalog>,
    pub smoothing: f64,
}

/// Placement directive produced at an epoch boundary.
#[derive(Debug, Clone)]
pub struct ControllerDecision {
    pub placement: Placement,
    /// Epoch the placement is meant for.
    pub epoch_index: u32,
    /// Objective value under the estimated demand.
    pub estimated_cost: f64,
    pub solver_diagnostics: SolveReport,
}

#[derive(Debug, Clone, Serialize)]
struct DecisionLine<'a> {
    epoch_index: u32,
    estimated_cost: f64,
    placement_digest: &'a str,
}

impl ControllerDecision {
    /// SHA-256 over the placement and budget CSV exports, hex encoded.
    pub fn placement_digest(&self) -> String {
        let mut bytes = Vec::new();
        self.placement
            .write_csv(&mut bytes)
            .and_then(|_| self.placement.write_budgets_csv(&mut bytes))
            .expect("writing to memory");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// One JSON line: epoch index, estimated cost and placement digest.
    pub fn write_json_line<W: Write>(&self, mut out: W) -> Result<(), AnalyticsError> {
        let digest = self.placement_digest();
        serde_json::to_writer(
            &mut out,
            &DecisionLine {
                epoch_index: self.epoch_index,
                estimated_cost: self.estimated_cost,
                placement_digest: &digest,
            },
        )?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

/// Estimate demand from telemetry, solve, and hand back the directive.
pub fn controller_epoch(
    log: &TelemetryLog,
    shell: &InstanceShell,
    c_sum: u64,
    epoch_index: u32,
) -> Result<ControllerDecision, AnalyticsError> {
    let (n, m) = (shell.topology.node_count(), shell.catalog.object_count());
    if log.node_count() != n || log.object_count() != m {
        return Err(AnalyticsError::Dimension {
            log_nodes: log.node_count(),
            log_objects: log.object_count(),
            nodes: n,
            objects: m,
        });
    }
    let estimate = estimate_demand(log, shell.smoothing)?;
    decide_with_demand(estimate.to_demand()?, shell, c_sum, epoch_index)
}

/// The solver half of [`controller_epoch`], fed a demand matrix directly.
pub fn decide_with_demand(
    demand: DemandMatrix,
    shell: &InstanceShell,
    c_sum: u64,
    epoch_index: u32,
) -> Result<ControllerDecision, AnalyticsError> {
    let instance = Instance::new(shell.topology.clone(), shell.catalog.clone(), demand, c_sum)?;
    let (solution, report) = optimizer::solve_with_report(&instance);
    Ok(ControllerDecision {
        placement: solution.placement,
        epoch_index,
        estimated_cost: solution.cost,
        solver_diagnostics: report,
    })
}
