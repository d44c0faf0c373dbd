//! The alternating outer loop (frequency assignment, then power/dwell) and
//! the uniform and random baseline allocators.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fim::{FrequencyAllocation, IntervalModel};
use crate::freq_alloc::{anneal, build_assignment_problem, AnnealParams};
use crate::power_time_alloc::{ascent_descent_solve, constraint_system, AscentParams};
use crate::scenario::RadarKind;

/// Relative tolerance used when checking that a solution satisfies every
/// constraint.
pub const FEAS_RTOL: f64 = 1e-9;
pub const MAX_RANDOM_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorParams {
    /// Stop once an outer iteration gains less than `outer_tol * g`.
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    pub anneal: AnnealParams,
    pub ascent: AscentParams,
}

impl Default for AnchorParams {
    fn default() -> Self {
        AnchorParams {
            outer_tol: 1e-4,
            max_outer_iters: 100,
            anneal: AnnealParams::default(),
            ascent: AscentParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSolution {
    pub z: Vec<f64>,
    pub freq: FrequencyAllocation,
    pub objective: f64,
    /// Objective after each outer iteration, starting from the initial point.
    pub objective_trace: Vec<f64>,
    pub anneal_traces: Vec<Vec<f64>>,
    pub ascent_traces: Vec<Vec<f64>>,
    /// Throughput minus threshold per macro user.
    pub margins: Vec<f64>,
    /// `b - A z` per constraint row.
    pub budget_slacks: Vec<f64>,
}

impl AllocationSolution {
    fn finish(
        model: &IntervalModel,
        z: Vec<f64>,
        freq: FrequencyAllocation,
        trace: Vec<f64>,
    ) -> Result<Self> {
        let objective = model.objective(&z, &freq)?;
        let margins = model.margins(&z, &freq);
        let budget_slacks = constraint_system(model, &freq).slacks(&z);
        Ok(AllocationSolution {
            objective_trace: if trace.is_empty() {
                vec![objective]
            } else {
                trace
            },
            z,
            freq,
            objective,
            anneal_traces: Vec::new(),
            ascent_traces: Vec::new(),
            margins,
            budget_slacks,
        })
    }

    /// Largest single-step decrease of the outer trace (0 if monotone).
    pub fn worst_decrease(&self) -> f64 {
        self.objective_trace
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(0.0, f64::max)
    }
}

/// Checks every budget and throughput constraint of `(z, freq)`.
pub fn check_feasible(model: &IntervalModel, z: &[f64], freq: &FrequencyAllocation) -> Result<()> {
    freq.check(model.layout.num_blocks)?;
    if let Some((what, v)) = constraint_system(model, freq).violation(z, FEAS_RTOL) {
        return Err(Error::Infeasible(format!("{what} violated by {v:.3e}")));
    }
    Ok(())
}

/// Equal split of every budget: each MIMO radar spreads its power over its
/// looks, each phased array its time, the comm budget is split evenly, and
/// user j takes block j.
pub fn uniform_allocation(model: &IntervalModel) -> AllocationSolution {
    let s = model.scenario;
    let l = &model.layout;
    let mut z = vec![0.0; l.z_len()];
    for &i in l.mimo.iter().chain(&l.par) {
        let r = &s.radars[i];
        let budget = match r.kind {
            RadarKind::MimoColocated => r.power_budget,
            _ => r.time_budget,
        }
        .unwrap_or(0.0);
        let looks: usize = model.counts[i].iter().sum();
        for q in 0..l.num_targets {
            if model.counts[i][q] > 0 {
                z[l.radar_slot(i, q).unwrap()] = budget / looks as f64;
            }
        }
    }
    let nj = l.num_macro();
    for j in 0..nj {
        z[l.comm_offset() + j] = s.comm_power_budget / nj as f64;
    }
    let freq = FrequencyAllocation {
        blocks: (0..nj).collect(),
    };
    // The objective can only fail on a singular prior, which model
    // construction already rules out.
    let objective = model.objective(&z, &freq).unwrap_or(f64::NAN);
    let margins = if model.thresholds.len() == nj {
        model.margins(&z, &freq)
    } else {
        Vec::new()
    };
    let budget_slacks = if model.thresholds.len() == nj {
        constraint_system(model, &freq).slacks(&z)
    } else {
        Vec::new()
    };
    AllocationSolution {
        z,
        freq,
        objective,
        objective_trace: vec![objective],
        anneal_traces: Vec::new(),
        ascent_traces: Vec::new(),
        margins,
        budget_slacks,
    }
}

/// Flat Dirichlet sample: normalized unit exponentials.
fn dirichlet_shares<R: Rng>(parts: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..parts).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// A random feasible allocation: Dirichlet splits of each radar budget
/// (with one share left unused), a random disjoint block per user, and comm
/// powers at each user's minimum plus a Dirichlet share of the remaining
/// comm budget. Draws violating a constraint are rejected.
pub fn random_allocation<R: Rng>(model: &IntervalModel, rng: &mut R) -> Result<AllocationSolution> {
    let s = model.scenario;
    let l = &model.layout;
    let nq = l.num_targets;
    let nj = l.num_macro();
    let off = l.comm_offset();
    for _ in 0..MAX_RANDOM_DRAWS {
        let mut z = vec![0.0; l.z_len()];
        for &i in l.mimo.iter().chain(&l.par) {
            let r = &s.radars[i];
            let budget = match r.kind {
                RadarKind::MimoColocated => r.power_budget,
                _ => r.time_budget,
            }
            .unwrap_or(0.0);
            let w = dirichlet_shares(nq + 1, rng);
            for q in 0..nq {
                let m = model.counts[i][q];
                if m > 0 {
                    z[l.radar_slot(i, q).unwrap()] = w[q] * budget / m as f64;
                }
            }
        }
        let mut blocks: Vec<usize> = (0..l.num_blocks).collect();
        blocks.shuffle(rng);
        blocks.truncate(nj);
        let freq = FrequencyAllocation { blocks };
        let mins: Vec<f64> = (0..nj)
            .map(|j| model.min_comm_power(&z, j, freq.blocks[j]))
            .collect();
        let need: f64 = mins.iter().sum();
        if need > s.comm_power_budget {
            continue;
        }
        let spare = s.comm_power_budget - need;
        let w = dirichlet_shares(nj + 1, rng);
        for j in 0..nj {
            // a hair above the minimum so rounding cannot leave a user short
            z[off + j] = mins[j] * (1.0 + 1e-12) + w[j] * spare;
        }
        let total: f64 = z[off..].iter().sum();
        if total > s.comm_power_budget {
            for v in &mut z[off..] {
                *v *= s.comm_power_budget / total;
            }
        }
        if check_feasible(model, &z, &freq).is_err() {
            continue;
        }
        return AllocationSolution::finish(model, z, freq, Vec::new());
    }
    Err(Error::RejectionLimit(MAX_RANDOM_DRAWS))
}

/// Alternates annealed frequency assignment and power/dwell ascent from the
/// uniform allocation until an outer iteration gains less than
/// `outer_tol * g`.
pub fn anchor_solve<R: Rng>(
    model: &IntervalModel,
    params: &AnchorParams,
    rng: &mut R,
) -> Result<AllocationSolution> {
    let init = uniform_allocation(model);
    check_feasible(model, &init.z, &init.freq)
        .map_err(|e| Error::Infeasible(format!("uniform initialization: {e}")))?;
    let mut z = init.z;
    let mut freq = init.freq;
    let mut g = model.objective(&z, &freq)?;
    let mut trace = vec![g];
    let mut anneal_traces = Vec::new();
    let mut ascent_traces = Vec::new();
    for _ in 0..params.max_outer_iters {
        let g_start = g;
        if model.layout.num_macro() > 0 {
            let problem = build_assignment_problem(model, &z);
            let mut ap = params.anneal;
            ap.early_exit_objective = Some(g * (1.0 + params.outer_tol));
            let out = anneal(model, &problem, Some(&freq), &ap, rng)?;
            anneal_traces.push(out.trace);
            if out.objective > g {
                freq = out.freq;
            }
        }
        let asc = ascent_descent_solve(model, &z, &freq, &params.ascent)?;
        z = asc.z;
        g = asc.objective;
        ascent_traces.push(asc.trace);
        trace.push(g);
        if g - g_start < params.outer_tol * g_start {
            break;
        }
    }
    check_feasible(model, &z, &freq)?;
    let mut sol = AllocationSolution::finish(model, z, freq, trace)?;
    sol.anneal_traces = anneal_traces;
    sol.ascent_traces = ascent_traces;
    Ok(sol)
}
