//! CSV/JSON writers. Floats in CSV files carry 12 significant digits.
//!
//! results.csv: trial, method, interval, target, err_x, err_vx, err_y,
//!   err_vy (estimate minus truth), sq_error (|Lambda e|^2, the per-trial
//!   CRMSE term), loc_error, vel_error, measurements, objective,
//!   min_margin, margins (';'-joined, one per macro user).
//! trace.csv: trial, method, interval, iteration, objective (one row per
//!   outer iteration; baselines have a single row).
//! summary.csv: method, interval, crmse, location_deviation,
//!   velocity_deviation, mean_objective.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anchor_core::linalg::normalizer;
use anchor_core::scenario::Scenario;
use anchor_core::tracking::{CampaignResult, Method};
use serde::Serialize;

use crate::Failure;

pub fn sig12(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        x.to_string()
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::io(format!("{}: {e}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, Failure> {
    csv::Writer::from_path(path).map_err(|e| io_err(path, e))
}

pub fn write_results(
    path: &Path,
    scenario: &Scenario,
    result: &CampaignResult,
) -> Result<(), Failure> {
    let lam = normalizer(scenario.fusion_period);
    let mut w = csv_writer(path)?;
    let header = [
        "trial",
        "method",
        "interval",
        "target",
        "err_x",
        "err_vx",
        "err_y",
        "err_vy",
        "sq_error",
        "loc_error",
        "vel_error",
        "measurements",
        "objective",
        "min_margin",
        "margins",
    ];
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in &result.records {
        let min_margin = r.margins.iter().copied().fold(f64::INFINITY, f64::min);
        let margins = r
            .margins
            .iter()
            .map(|&m| sig12(m))
            .collect::<Vec<_>>()
            .join(";");
        for (q, e) in r.errors.iter().enumerate() {
            let row = [
                r.trial.to_string(),
                r.method.name().to_string(),
                r.interval.to_string(),
                q.to_string(),
                sig12(e[0]),
                sig12(e[1]),
                sig12(e[2]),
                sig12(e[3]),
                sig12((lam * e).norm_squared()),
                sig12(e[0].hypot(e[2])),
                sig12(e[1].hypot(e[3])),
                r.measurements[q].to_string(),
                sig12(r.objective),
                if r.margins.is_empty() {
                    String::new()
                } else {
                    sig12(min_margin)
                },
                margins.clone(),
            ];
            w.write_record(&row).map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_trace(path: &Path, result: &CampaignResult) -> Result<(), Failure> {
    let mut w = csv_writer(path)?;
    w.write_record(["trial", "method", "interval", "iteration", "objective"])
        .map_err(|e| io_err(path, e))?;
    for r in &result.records {
        for (it, g) in r.objective_trace.iter().enumerate() {
            w.write_record([
                r.trial.to_string(),
                r.method.name().to_string(),
                r.interval.to_string(),
                it.to_string(),
                sig12(*g),
            ])
            .map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_summary(path: &Path, result: &CampaignResult) -> Result<(), Failure> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "method",
        "interval",
        "crmse",
        "location_deviation",
        "velocity_deviation",
        "mean_objective",
    ])
    .map_err(|e| io_err(path, e))?;
    for s in &result.summary {
        w.write_record([
            s.method.name().to_string(),
            s.interval.to_string(),
            sig12(s.crmse),
            sig12(s.location_deviation),
            sig12(s.velocity_deviation),
            sig12(s.mean_objective),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
pub struct AllocationEntry {
    pub trial: usize,
    pub method: Method,
    pub interval: usize,
    pub z: Vec<f64>,
    pub blocks: Vec<usize>,
    pub margins: Vec<f64>,
}

pub fn allocations(result: &CampaignResult) -> Vec<AllocationEntry> {
    result
        .records
        .iter()
        .map(|r| AllocationEntry {
            trial: r.trial,
            method: r.method,
            interval: r.interval,
            z: r.z.clone(),
            blocks: r.blocks.clone(),
            margins: r.margins.clone(),
        })
        .collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), Failure> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(path, e))?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}
