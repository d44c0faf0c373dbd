//! Block assignment for the macro users: feasibility masks, the chained
//! state transition, simulated annealing and an exhaustive reference search.

use nalgebra::Matrix4;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fim::{objective_from_fims, FrequencyAllocation, IntervalModel};

/// Relative slack when comparing interference against a threshold, so that
/// an allocation sitting exactly on a throughput constraint stays feasible.
const MASK_RTOL: f64 = 1e-9;
const EXHAUSTIVE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealParams {
    pub t_max: f64,
    pub t_min: f64,
    pub delta_t: f64,
    /// Stop as soon as the best objective exceeds this value.
    pub early_exit_objective: Option<f64>,
    /// Failed transitions tolerated per temperature step.
    pub retry_budget: usize,
}

impl Default for AnnealParams {
    fn default() -> Self {
        AnnealParams {
            t_max: 1000.0,
            t_min: 0.1,
            delta_t: 1.0,
            early_exit_objective: None,
            retry_budget: 100,
        }
    }
}

impl AnnealParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min > 0.0 && self.t_max > self.t_min && self.delta_t > 0.0) {
            return Err(Error::Invalid {
                field: "anneal".into(),
                reason: "need t_max > t_min > 0 and delta_t > 0".into(),
            });
        }
        Ok(())
    }

    /// Number of temperature steps of the schedule.
    pub fn num_steps(&self) -> usize {
        // T = t_max - k delta_t >= t_min
        ((self.t_max - self.t_min) / self.delta_t + 1e-9).floor() as usize + 1
    }
}

/// The assignment subproblem at a fixed continuous allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentProblem {
    /// Interference budget per user: largest radar interference energy the
    /// user tolerates and still meets its threshold.
    pub eps_tilde: Vec<f64>,
    /// Size of the terms that cancel in `eps_tilde`, for tolerances.
    pub eps_scale: Vec<f64>,
    /// `a_tilde[j][n]`: radar interference energy user j sees on block n.
    pub a_tilde: Vec<Vec<f64>>,
    /// `b_tilde[i][j][n]`: interference power user j puts on radar i from block n.
    pub b_tilde: Vec<Vec<Vec<f64>>>,
    /// Receiver noise per radar.
    pub noise: Vec<f64>,
    /// `P T` per radar and target, `[i][q]`.
    pub pt: Vec<Vec<f64>>,
    pub num_blocks: usize,
}

impl AssignmentProblem {
    pub fn num_users(&self) -> usize {
        self.eps_tilde.len()
    }
}

pub fn build_assignment_problem(model: &IntervalModel, z: &[f64]) -> AssignmentProblem {
    let s = model.scenario;
    let l = &model.layout;
    let nb = l.num_blocks;
    let t0 = s.fusion_period;
    let off = l.comm_offset();
    let mut eps_tilde = Vec::with_capacity(l.num_macro());
    let mut eps_scale = Vec::with_capacity(l.num_macro());
    let mut a_tilde = Vec::with_capacity(l.num_macro());
    for (j, &u) in l.macro_users.iter().enumerate() {
        let user = &s.users[u];
        let gamma = model.thresholds[j].exp_m1();
        eps_tilde.push(if gamma > 0.0 {
            (user.channel_gain * z[off + j] - user.noise_power * gamma) * t0 / gamma
        } else {
            f64::INFINITY
        });
        eps_scale.push(if gamma > 0.0 {
            user.channel_gain * z[off + j] * t0 / gamma
        } else {
            0.0
        });
        a_tilde.push(
            (0..nb)
                .map(|n| model.user_interference_on_block(z, j, n))
                .collect(),
        );
    }
    let b_tilde = (0..s.radars.len())
        .map(|i| {
            l.macro_users
                .iter()
                .enumerate()
                .map(|(j, &u)| {
                    let g = s.users[u].user_to_radar_gains[i] * z[off + j];
                    l.block_overlap[i].iter().map(|o| g * o).collect()
                })
                .collect()
        })
        .collect();
    let pt = (0..s.radars.len())
        .map(|i| {
            (0..l.num_targets)
                .map(|q| {
                    let (p, t) = model.pt(z, i, q);
                    p * t
                })
                .collect()
        })
        .collect();
    AssignmentProblem {
        eps_tilde,
        eps_scale,
        a_tilde,
        b_tilde,
        noise: s.radars.iter().map(|r| r.rx_noise_power).collect(),
        pt,
        num_blocks: nb,
    }
}

pub fn block_feasible(problem: &AssignmentProblem, j: usize, n: usize) -> bool {
    let a = problem.a_tilde[j][n];
    let e = problem.eps_tilde[j];
    a <= e + MASK_RTOL * (a.abs() + e.abs() + problem.eps_scale[j])
}

/// Blocks each user may occupy without breaking its throughput threshold.
pub fn feasibility_mask(problem: &AssignmentProblem) -> Result<Vec<Vec<bool>>> {
    (0..problem.num_users())
        .map(|j| {
            let m: Vec<bool> = (0..problem.num_blocks)
                .map(|n| block_feasible(problem, j, n))
                .collect();
            if m.iter().any(|&b| b) {
                Ok(m)
            } else {
                Err(Error::UserInfeasible { user: j })
            }
        })
        .collect()
}

/// Random neighbor of `current`: one user moves to a random allowed block;
/// if that block is taken, its holder is displaced and re-draws, and so on.
/// Blocks tried in the chain are not offered again, so the chain ends.
/// Returns `None` when a displaced user runs out of blocks.
pub fn transition_state<R: Rng>(
    current: &[usize],
    masks: &[Vec<bool>],
    rng: &mut R,
) -> Option<Vec<usize>> {
    let nj = current.len();
    if nj == 0 {
        return Some(Vec::new());
    }
    let nb = masks[0].len();
    let mut next = current.to_vec();
    let mut owner: Vec<Option<usize>> = vec![None; nb];
    for (j, &b) in current.iter().enumerate() {
        owner[b] = Some(j);
    }
    let mut tried = vec![false; nb];
    let mut mover = rng.random_range(0..nj);
    // The first mover may also stay put; displaced users must leave.
    let mut may_stay = true;
    loop {
        let here = next[mover];
        let cands: Vec<usize> = (0..nb)
            .filter(|&n| masks[mover][n] && !tried[n] && (may_stay || n != here))
            .collect();
        let &n = cands.choose(rng)?;
        tried[n] = true;
        may_stay = false;
        if n == here {
            return Some(next);
        }
        let displaced = owner[n];
        if owner[here] == Some(mover) {
            owner[here] = None;
        }
        next[mover] = n;
        owner[n] = Some(mover);
        match displaced {
            None => return Some(next),
            Some(d) => mover = d,
        }
    }
}

/// A disjoint assignment respecting `masks`, if any exists (augmenting
/// paths; users try blocks in increasing order). Greedy first-fit is not
/// enough: it can strand a later user whose only block was taken.
pub fn first_fit(masks: &[Vec<bool>]) -> Option<Vec<usize>> {
    let nb = masks.first().map_or(0, Vec::len);
    let mut owner: Vec<Option<usize>> = vec![None; nb];
    fn augment(
        j: usize,
        masks: &[Vec<bool>],
        owner: &mut [Option<usize>],
        seen: &mut [bool],
    ) -> bool {
        for n in 0..owner.len() {
            if masks[j][n] && !seen[n] {
                seen[n] = true;
                if owner[n].is_none_or(|k| augment(k, masks, owner, seen)) {
                    owner[n] = Some(j);
                    return true;
                }
            }
        }
        false
    }
    for j in 0..masks.len() {
        let mut seen = vec![false; nb];
        if !augment(j, masks, &mut owner, &mut seen) {
            return None;
        }
    }
    let mut out = vec![0; masks.len()];
    for (n, o) in owner.iter().enumerate() {
        if let Some(j) = o {
            out[*j] = n;
        }
    }
    Some(out)
}

fn is_feasible(blocks: &[usize], masks: &[Vec<bool>]) -> bool {
    let nb = masks.first().map_or(0, Vec::len);
    let mut used = vec![false; nb];
    blocks
        .iter()
        .enumerate()
        .all(|(j, &n)| n < nb && masks[j][n] && !std::mem::replace(&mut used[n], true))
}

/// Objective of an assignment using the problem's cached interference terms.
pub struct AssignmentObjective<'m, 'a> {
    model: &'m IntervalModel<'a>,
    problem: &'m AssignmentProblem,
    pub evaluations: usize,
}

impl<'m, 'a> AssignmentObjective<'m, 'a> {
    pub fn new(model: &'m IntervalModel<'a>, problem: &'m AssignmentProblem) -> Self {
        AssignmentObjective {
            model,
            problem,
            evaluations: 0,
        }
    }

    pub fn fims(&self, blocks: &[usize]) -> Vec<Matrix4<f64>> {
        let p = self.problem;
        (0..self.model.num_targets())
            .map(|q| {
                let mut b = self.model.gamma_tilde[q];
                for i in 0..p.noise.len() {
                    let pt = p.pt[i][q];
                    if pt == 0.0 {
                        continue;
                    }
                    let denom: f64 = p.noise[i]
                        + blocks
                            .iter()
                            .enumerate()
                            .map(|(j, &n)| p.b_tilde[i][j][n])
                            .sum::<f64>();
                    b += self.model.c_tilde[i][q] * (pt / denom);
                }
                crate::linalg::symmetrize(&b)
            })
            .collect()
    }

    pub fn value(&mut self, blocks: &[usize]) -> Result<f64> {
        self.evaluations += 1;
        objective_from_fims(&self.fims(blocks), &self.model.lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealOutcome {
    pub freq: FrequencyAllocation,
    pub objective: f64,
    /// Best-so-far objective after each temperature step.
    pub trace: Vec<f64>,
    pub accepted: usize,
    pub failed_transitions: usize,
}

/// Simulated annealing over feasible assignments, keeping the best state
/// visited. `init` is used when feasible, else first-fit.
pub fn anneal<R: Rng>(
    model: &IntervalModel,
    problem: &AssignmentProblem,
    init: Option<&FrequencyAllocation>,
    params: &AnnealParams,
    rng: &mut R,
) -> Result<AnnealOutcome> {
    params.validate()?;
    let masks = feasibility_mask(problem)?;
    let start = match init {
        Some(f) if is_feasible(&f.blocks, &masks) => f.blocks.clone(),
        _ => first_fit(&masks).ok_or_else(|| {
            Error::Infeasible(
                "no disjoint block assignment satisfies every throughput threshold".into(),
            )
        })?,
    };
    let mut obj = AssignmentObjective::new(model, problem);
    let mut cur = start;
    let mut cur_val = obj.value(&cur)?;
    let mut best = cur.clone();
    let mut best_val = cur_val;
    let mut trace = Vec::with_capacity(params.num_steps());
    let mut accepted = 0;
    let mut failed = 0;
    let exit_at = params.early_exit_objective.unwrap_or(f64::INFINITY);
    if problem.num_users() > 0 && best_val <= exit_at {
        let mut temp = params.t_max;
        while temp >= params.t_min - 1e-12 {
            let mut cand = None;
            for _ in 0..params.retry_budget {
                if let Some(c) = transition_state(&cur, &masks, rng) {
                    cand = Some(c);
                    break;
                }
                failed += 1;
            }
            if let Some(c) = cand {
                let v = obj.value(&c)?;
                let delta = v - cur_val;
                if delta > 0.0 || (delta / temp).exp() > rng.random::<f64>() {
                    cur = c;
                    cur_val = v;
                    accepted += 1;
                    if cur_val > best_val {
                        best_val = cur_val;
                        best = cur.clone();
                    }
                }
            }
            trace.push(best_val);
            if best_val > exit_at {
                break;
            }
            temp -= params.delta_t;
        }
    }
    debug_assert!(is_feasible(&best, &masks));
    Ok(AnnealOutcome {
        freq: FrequencyAllocation { blocks: best },
        objective: best_val,
        trace,
        accepted,
        failed_transitions: failed,
    })
}

/// Global maximizer over all disjoint feasible assignments.
pub fn exhaustive_assignment(
    model: &IntervalModel,
    problem: &AssignmentProblem,
) -> Result<(FrequencyAllocation, f64)> {
    let nj = problem.num_users();
    let nb = problem.num_blocks;
    let count: f64 = (0..nj).map(|k| nb.saturating_sub(k) as f64).product();
    if count > EXHAUSTIVE_LIMIT {
        return Err(Error::TooLarge(count));
    }
    let masks = feasibility_mask(problem)?;
    let mut obj = AssignmentObjective::new(model, problem);
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut cur = Vec::with_capacity(nj);
    let mut used = vec![false; nb];
    fn dfs(
        cur: &mut Vec<usize>,
        used: &mut [bool],
        masks: &[Vec<bool>],
        obj: &mut AssignmentObjective,
        best: &mut Option<(Vec<usize>, f64)>,
    ) -> Result<()> {
        let j = cur.len();
        if j == masks.len() {
            let v = obj.value(cur)?;
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                *best = Some((cur.clone(), v));
            }
            return Ok(());
        }
        for n in 0..used.len() {
            if masks[j][n] && !used[n] {
                used[n] = true;
                cur.push(n);
                dfs(cur, used, masks, obj, best)?;
                cur.pop();
                used[n] = false;
            }
        }
        Ok(())
    }
    dfs(&mut cur, &mut used, &masks, &mut obj, &mut best)?;
    let (blocks, v) =
        best.ok_or_else(|| Error::Infeasible("no disjoint feasible assignment".into()))?;
    Ok((FrequencyAllocation { blocks }, v))
}
