//! Power and dwell allocation at a fixed frequency assignment: the maximin
//! reformulation, the sum-of-ratios surrogate and projected gradient ascent.

use nalgebra::{DMatrix, DVector, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fim::{FrequencyAllocation, IntervalModel};
use crate::linalg::spd_inverse;
use crate::projection::project_onto_polytope;
use crate::scenario::RadarKind;

/// Minimizer of `Tr(V^T Lt^T B Lt V)` over trace-one `V`.
pub fn optimal_v(b: &Matrix4<f64>, lambda_tilde: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    let m = lambda_tilde.transpose() * b * lambda_tilde;
    let inv = spd_inverse(&m, "normalized Bayesian FIM")?;
    Ok(inv / inv.trace())
}

/// `Tr((Lt V)^T C (Lt V))`.
pub fn weight(v: &Matrix4<f64>, c_tilde: &Matrix4<f64>, lambda_tilde: &Matrix4<f64>) -> f64 {
    let lv = lambda_tilde * v;
    (lv.transpose() * c_tilde * lv).trace().max(0.0)
}

/// Linear constraints `A z <= b` (nonnegativity implied): one budget row per
/// MIMO radar, one per phased array, the comm budget, then one throughput
/// row per macro user.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub labels: Vec<String>,
}

impl ConstraintSystem {
    /// `b - A z` per row.
    pub fn slacks(&self, z: &[f64]) -> Vec<f64> {
        let z = DVector::from_column_slice(z);
        (&self.b - &self.a * z).iter().copied().collect()
    }

    /// Most violated row, if any violation exceeds `tol` relative to the row scale.
    pub fn violation(&self, z: &[f64], tol: f64) -> Option<(String, f64)> {
        let s = self.slacks(z);
        let mut worst: Option<(usize, f64)> = None;
        for (r, &sr) in s.iter().enumerate() {
            let scale = self.b[r].abs()
                + self
                    .a
                    .row(r)
                    .iter()
                    .zip(z)
                    .map(|(a, v)| (a * v).abs())
                    .sum::<f64>();
            let rel = -sr / scale.max(1e-300);
            if rel > tol && worst.is_none_or(|(_, w)| rel > w) {
                worst = Some((r, rel));
            }
        }
        if let Some(i) = z.iter().position(|&v| v < -tol) {
            return Some((format!("nonnegativity of z[{i}]"), -z[i]));
        }
        worst.map(|(r, v)| (self.labels[r].clone(), v))
    }
}

pub fn constraint_system(model: &IntervalModel, freq: &FrequencyAllocation) -> ConstraintSystem {
    let s = model.scenario;
    let l = &model.layout;
    let nz = l.z_len();
    let nq = l.num_targets;
    let off = l.comm_offset();
    let t0 = s.fusion_period;
    let rows = l.mimo.len() + l.par.len() + 1 + l.num_macro();
    let mut a = DMatrix::zeros(rows, nz);
    let mut b = DVector::zeros(rows);
    let mut labels = Vec::with_capacity(rows);
    let mut r = 0;
    for &i in l.mimo.iter().chain(&l.par) {
        let radar = &s.radars[i];
        for q in 0..nq {
            a[(r, l.radar_slot(i, q).unwrap())] = model.counts[i][q] as f64;
        }
        if radar.kind == RadarKind::MimoColocated {
            b[r] = radar.power_budget.unwrap_or(0.0);
            labels.push(format!("power budget of radar {}", radar.id));
        } else {
            b[r] = radar.time_budget.unwrap_or(0.0);
            labels.push(format!("time budget of radar {}", radar.id));
        }
        r += 1;
    }
    for j in 0..l.num_macro() {
        a[(r, off + j)] = 1.0;
    }
    b[r] = s.comm_power_budget;
    labels.push("comm power budget".into());
    r += 1;
    for (j, &u) in l.macro_users.iter().enumerate() {
        let user = &s.users[u];
        labels.push(format!("throughput of macro user {}", user.id));
        let gamma = model.thresholds[j].exp_m1();
        if gamma > 0.0 {
            let block = freq.blocks[j];
            let mut fixed = 0.0;
            for (i, radar) in s.radars.iter().enumerate() {
                let g = user.radar_to_user_gains[i] * l.block_overlap[i][block];
                for q in 0..nq {
                    let m = model.counts[i][q] as f64;
                    match (radar.kind, l.radar_slot(i, q)) {
                        (RadarKind::MimoColocated, Some(k)) => {
                            a[(r, k)] = g * m * radar.fixed_dwell.unwrap_or(0.0)
                        }
                        (RadarKind::PhasedArray, Some(k)) => {
                            a[(r, k)] = g * m * radar.fixed_power.unwrap_or(0.0)
                        }
                        _ => {
                            fixed += g
                                * m
                                * radar.fixed_power.unwrap_or(0.0)
                                * radar.fixed_dwell.unwrap_or(0.0)
                        }
                    }
                }
            }
            a[(r, off + j)] = -user.channel_gain * t0 / gamma;
            b[r] = -user.noise_power * t0 - fixed;
        }
        r += 1;
    }
    ConstraintSystem { a, b, labels }
}

/// `f(z) = sum_i (c_i^T z + d_i) / (e_i^T z + sigma_i^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalProgram {
    pub c: Vec<DVector<f64>>,
    pub d: Vec<f64>,
    pub e: Vec<DVector<f64>>,
    pub sigma2: Vec<f64>,
    pub constraints: ConstraintSystem,
}

impl FractionalProgram {
    pub fn value_and_gradient(&self, z: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let mut val = 0.0;
        let mut grad = DVector::zeros(z.len());
        for i in 0..self.c.len() {
            let num = self.c[i].dot(z) + self.d[i];
            let den = self.e[i].dot(z) + self.sigma2[i];
            if !(den > 0.0) {
                return Err(Error::NonFinite);
            }
            val += num / den;
            grad += (&self.c[i] * den - &self.e[i] * num) / (den * den);
        }
        Ok((val, grad))
    }
}

/// Builds the surrogate for weights `omega[i][q]` and assignment `freq`.
pub fn assemble_fractional(
    model: &IntervalModel,
    omega: &[Vec<f64>],
    freq: &FrequencyAllocation,
) -> FractionalProgram {
    let s = model.scenario;
    let l = &model.layout;
    let nz = l.z_len();
    let off = l.comm_offset();
    let mut c = Vec::with_capacity(s.radars.len());
    let mut d = Vec::with_capacity(s.radars.len());
    let mut e = Vec::with_capacity(s.radars.len());
    for (i, radar) in s.radars.iter().enumerate() {
        let mut ci = DVector::zeros(nz);
        let mut di = 0.0;
        for q in 0..l.num_targets {
            let w = omega[i][q];
            match (radar.kind, l.radar_slot(i, q)) {
                (RadarKind::MimoColocated, Some(k)) => ci[k] = w * radar.fixed_dwell.unwrap_or(0.0),
                (RadarKind::PhasedArray, Some(k)) => ci[k] = w * radar.fixed_power.unwrap_or(0.0),
                _ => di += w * radar.fixed_power.unwrap_or(0.0) * radar.fixed_dwell.unwrap_or(0.0),
            }
        }
        let mut ei = DVector::zeros(nz);
        for (j, &u) in l.macro_users.iter().enumerate() {
            ei[off + j] = s.users[u].user_to_radar_gains[i] * l.block_overlap[i][freq.blocks[j]];
        }
        c.push(ci);
        d.push(di);
        e.push(ei);
    }
    FractionalProgram {
        c,
        d,
        e,
        sigma2: s.radars.iter().map(|r| r.rx_noise_power).collect(),
        constraints: constraint_system(model, freq),
    }
}

/// Weights `omega[i][q]` at the inner minimizers for allocation `z`.
pub fn weights_at(
    model: &IntervalModel,
    z: &[f64],
    freq: &FrequencyAllocation,
) -> Result<Vec<Vec<f64>>> {
    let lt = model
        .lambda
        .try_inverse()
        .expect("normalizer is diagonal and positive");
    let vs = model
        .bayesian_fims(z, freq)
        .iter()
        .map(|b| optimal_v(b, &lt))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..model.num_radars())
        .map(|i| {
            (0..model.num_targets())
                .map(|q| weight(&vs[q], &model.c_tilde[i][q], &lt))
                .collect()
        })
        .collect())
}

/// Gradient of the objective at `z` (through the surrogate at the inner
/// minimizers).
pub fn objective_gradient(
    model: &IntervalModel,
    z: &[f64],
    freq: &FrequencyAllocation,
) -> Result<DVector<f64>> {
    let omega = weights_at(model, z, freq)?;
    let fp = assemble_fractional(model, &omega, freq);
    Ok(fp.value_and_gradient(&DVector::from_column_slice(z))?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentParams {
    /// Fixed initial step; `None` picks one from the first gradient.
    pub step_size: Option<f64>,
    pub max_iters: usize,
    /// Stop once the objective gain of a step falls below `tol * g`.
    pub tol: f64,
    pub max_halvings: usize,
    /// Step growth after an accepted step.
    pub growth: f64,
}

impl Default for AscentParams {
    fn default() -> Self {
        AscentParams {
            step_size: None,
            max_iters: 200,
            tol: 1e-4,
            max_halvings: 20,
            growth: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentOutcome {
    pub z: Vec<f64>,
    pub objective: f64,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
    pub max_kkt_residual: f64,
}

fn min_budget(model: &IntervalModel) -> f64 {
    let s = model.scenario;
    s.radars
        .iter()
        .filter_map(|r| r.power_budget.or(r.time_budget))
        .chain(std::iter::once(s.comm_power_budget))
        .fold(f64::INFINITY, f64::min)
}

/// Projected gradient ascent on `g(., freq)` from a feasible `z0`. Steps
/// that would lower the objective are halved; the iteration stops when no
/// halving helps, when a step gains less than `tol * g`, or at `max_iters`.
pub fn ascent_descent_solve(
    model: &IntervalModel,
    z0: &[f64],
    freq: &FrequencyAllocation,
    params: &AscentParams,
) -> Result<AscentOutcome> {
    let cs = constraint_system(model, freq);
    let mut z = DVector::from_column_slice(z0);
    let mut g = model.objective(z0, freq)?;
    let mut trace = vec![g];
    let mut eta = params.step_size;
    let mut kkt_max: f64 = 0.0;
    if z.is_empty() {
        return Ok(AscentOutcome {
            z: z0.to_vec(),
            objective: g,
            trace,
            max_kkt_residual: 0.0,
        });
    }
    for _ in 0..params.max_iters {
        let grad = objective_gradient(model, z.as_slice(), freq)?;
        let gnorm = grad.norm();
        if !gnorm.is_finite() {
            return Err(Error::NonFinite);
        }
        if gnorm == 0.0 {
            break;
        }
        let mut step = eta.unwrap_or(0.1 * min_budget(model) / gnorm);
        let mut accepted = None;
        for _ in 0..=params.max_halvings {
            let proj = project_onto_polytope(&(&z + &grad * step), &cs.a, &cs.b)?;
            kkt_max = kkt_max.max(proj.kkt.max());
            let gc = model.objective(proj.z.as_slice(), freq)?;
            if gc >= g {
                accepted = Some((proj.z, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((zc, gc)) = accepted else { break };
        let gain = gc - g;
        z = zc;
        g = gc;
        trace.push(g);
        eta = Some(step * params.growth);
        if gain < params.tol * g {
            break;
        }
    }
    Ok(AscentOutcome {
        z: z.iter().copied().collect(),
        objective: g,
        trace,
        max_kkt_residual: kkt_max,
    })
}

/// Phased-array (radar, target) pairs whose dwell is numerically zero,
/// i.e. the radar stops scanning that target.
pub fn stopped_scans(model: &IntervalModel, z: &[f64]) -> Vec<(usize, usize)> {
    let s = model.scenario;
    let l = &model.layout;
    let mut out = Vec::new();
    for &i in &l.par {
        let budget = s.radars[i].time_budget.unwrap_or(0.0);
        for q in 0..l.num_targets {
            let k = l.radar_slot(i, q).unwrap();
            if model.counts[i][q] > 0 && z[k] < 1e-6 * budget {
                out.push((i, q));
            }
        }
    }
    out
}
