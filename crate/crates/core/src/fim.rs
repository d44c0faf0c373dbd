//! Information and quality-of-service quantities: measurement covariances,
//! composite-measure and Bayesian Fisher information, the normalized CRB
//! objective, and downlink SINR/throughput.

use nalgebra::{Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{measurement_jacobian, process_noise, transition_matrix, State};
use crate::linalg::{normalizer, spd_inverse, symmetrize};
use crate::scenario::{IntervalSchedule, Layout, RadarKind, RadarSpec, Scenario};

/// One comm block per macro user, indexed in macro-user order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrequencyAllocation {
    pub blocks: Vec<usize>,
}

impl FrequencyAllocation {
    pub fn new(blocks: Vec<usize>, num_blocks: usize) -> Result<Self> {
        let f = FrequencyAllocation { blocks };
        f.check(num_blocks)?;
        Ok(f)
    }

    pub fn check(&self, num_blocks: usize) -> Result<()> {
        let mut used = vec![false; num_blocks];
        for (j, &n) in self.blocks.iter().enumerate() {
            if n >= num_blocks {
                return Err(Error::Infeasible(format!(
                    "user {j} assigned to missing block {n}"
                )));
            }
            if std::mem::replace(&mut used[n], true) {
                return Err(Error::Infeasible(format!("block {n} assigned twice")));
            }
        }
        Ok(())
    }

    /// Selector vectors `s_j` over blocks.
    pub fn selectors(&self, num_blocks: usize) -> Vec<Vec<u8>> {
        self.blocks
            .iter()
            .map(|&b| (0..num_blocks).map(|n| u8::from(n == b)).collect())
            .collect()
    }

    /// Subchannel vectors `f_j`, each selector expanded by the block size.
    pub fn expanded(&self, num_blocks: usize, block_size: usize) -> Vec<Vec<u8>> {
        self.selectors(num_blocks)
            .into_iter()
            .map(|s| {
                s.iter()
                    .flat_map(|&v| std::iter::repeat_n(v, block_size))
                    .collect()
            })
            .collect()
    }
}

/// Structured view of the flat allocation vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationVector {
    /// `[MIMO radar][target]` transmit powers.
    pub mimo_powers: Vec<Vec<f64>>,
    /// `[phased-array radar][target]` dwell times.
    pub par_dwells: Vec<Vec<f64>>,
    /// Macro downlink powers.
    pub comm_powers: Vec<f64>,
}

impl AllocationVector {
    pub fn from_flat(layout: &Layout, z: &[f64]) -> Self {
        let q = layout.num_targets;
        let rows = |off: usize, n: usize| {
            (0..n)
                .map(|r| z[off + r * q..off + (r + 1) * q].to_vec())
                .collect()
        };
        AllocationVector {
            mimo_powers: rows(0, layout.mimo.len()),
            par_dwells: rows(layout.mimo.len() * q, layout.par.len()),
            comm_powers: z[layout.comm_offset()..].to_vec(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.mimo_powers
            .iter()
            .chain(&self.par_dwells)
            .flatten()
            .chain(&self.comm_powers)
            .copied()
            .collect()
    }
}

/// Diagonal of `eta * diag(c_R / zeta^2, c_theta * B^2, c_nu * zeta^2)`.
pub fn unit_covariance(scenario: &Scenario, radar: &RadarSpec, rcs: f64) -> Vector3<f64> {
    let z = radar.signal_bandwidth;
    Vector3::new(
        scenario.range_const / (z * z),
        scenario.angle_const * radar.beamwidth_3db * radar.beamwidth_3db,
        scenario.doppler_const * z * z,
    ) * rcs
}

/// Diagonal measurement-error covariance for one look with power `p`,
/// dwell `t` and comm interference `interference` at the radar.
pub fn measurement_covariance(
    scenario: &Scenario,
    radar: usize,
    target: usize,
    p: f64,
    t: f64,
    interference: f64,
) -> Result<Vector3<f64>> {
    let r = &scenario.radars[radar];
    let pt = p * t;
    if !(pt > 0.0) {
        return Err(Error::InfiniteVariance);
    }
    let rcs = scenario.targets[target].rcs[radar];
    Ok(unit_covariance(scenario, r, rcs) * ((interference + r.rx_noise_power) / pt))
}

/// `sum_m H_m^T C^-1 H_m` over the looks at `times`, linearized at `state`
/// (the fusion-time state).
pub fn unit_information(
    scenario: &Scenario,
    radar: usize,
    target: usize,
    times: &[f64],
    fusion_time: f64,
    state: &State,
) -> Result<Matrix4<f64>> {
    let r = &scenario.radars[radar];
    let cinv = unit_covariance(scenario, r, scenario.targets[target].rcs[radar]).map(|v| 1.0 / v);
    let mut acc = Matrix4::zeros();
    for &t in times {
        let h = measurement_jacobian(state, r.position, fusion_time - t)?;
        let mut wh = h;
        for row in 0..3 {
            wh.row_mut(row).scale_mut(cinv[row]);
        }
        acc += h.transpose() * wh;
    }
    Ok(symmetrize(&acc))
}

/// Power and dwell actually used by radar `i` on target `q` under `z`.
pub fn radar_pt(scenario: &Scenario, layout: &Layout, z: &[f64], i: usize, q: usize) -> (f64, f64) {
    let r = &scenario.radars[i];
    match (r.kind, layout.radar_slot(i, q)) {
        (RadarKind::MimoColocated, Some(s)) => (z[s], r.fixed_dwell.unwrap_or(0.0)),
        (RadarKind::PhasedArray, Some(s)) => (r.fixed_power.unwrap_or(0.0), z[s]),
        _ => (r.fixed_power.unwrap_or(0.0), r.fixed_dwell.unwrap_or(0.0)),
    }
}

/// Comm interference power at radar `i`: sum over macro users of gain times
/// shared subchannels times downlink power.
pub fn comm_interference(
    scenario: &Scenario,
    layout: &Layout,
    z: &[f64],
    freq: &FrequencyAllocation,
    i: usize,
) -> f64 {
    let off = layout.comm_offset();
    layout
        .macro_users
        .iter()
        .enumerate()
        .map(|(j, &u)| {
            scenario.users[u].user_to_radar_gains[i]
                * layout.block_overlap[i][freq.blocks[j]]
                * z[off + j]
        })
        .sum()
}

/// Composite-measure Fisher information of target `q` at `fusion_state`.
pub fn fim_cm(
    scenario: &Scenario,
    schedule: &IntervalSchedule,
    z: &[f64],
    freq: &FrequencyAllocation,
    target: usize,
    fusion_state: &State,
) -> Result<Matrix4<f64>> {
    let layout = Layout::new(scenario);
    let mut j = Matrix4::zeros();
    for i in 0..scenario.radars.len() {
        let times = &schedule.times[i][target];
        if times.is_empty() {
            continue;
        }
        let (p, t) = radar_pt(scenario, &layout, z, i, target);
        let w = p * t
            / (comm_interference(scenario, &layout, z, freq, i)
                + scenario.radars[i].rx_noise_power);
        if w == 0.0 {
            continue;
        }
        j += unit_information(
            scenario,
            i,
            target,
            times,
            schedule.fusion_time,
            fusion_state,
        )? * w;
    }
    Ok(symmetrize(&j))
}

/// Prior information carried into the interval:
/// `(Gamma + F B_prev^-1 F^T)^-1`.
pub fn prior_information(
    bayes_prev: &Matrix4<f64>,
    intensity: f64,
    t0: f64,
) -> Result<Matrix4<f64>> {
    let f = transition_matrix(t0);
    let prev_inv = spd_inverse(bayes_prev, "previous Bayesian FIM")?;
    spd_inverse(
        &(process_noise(intensity, t0) + f * prev_inv * f.transpose()),
        "prior covariance",
    )
}

/// `sum_q 1 / Tr(Lambda B_q^-1 Lambda)`.
pub fn objective_from_fims(fims: &[Matrix4<f64>], lambda: &Matrix4<f64>) -> Result<f64> {
    let mut g = 0.0;
    for b in fims {
        let inv = spd_inverse(b, "Bayesian FIM")?;
        let tr = (lambda * inv * lambda).trace();
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::NonFinite);
        }
        g += 1.0 / tr;
    }
    Ok(g)
}

/// Everything about one fusion interval that stays fixed while allocating:
/// counts, linearized information per (radar, target) at the predicted
/// states, prior information and resolved throughput thresholds.
#[derive(Debug, Clone)]
pub struct IntervalModel<'a> {
    pub scenario: &'a Scenario,
    pub layout: Layout,
    pub schedule: IntervalSchedule,
    /// `M[i][q]`.
    pub counts: Vec<Vec<usize>>,
    /// Unit information per look summed over the interval, `[i][q]`.
    pub c_tilde: Vec<Vec<Matrix4<f64>>>,
    /// Prior information per target.
    pub gamma_tilde: Vec<Matrix4<f64>>,
    pub lambda: Matrix4<f64>,
    /// Required throughput per macro user (macro order), nats.
    pub thresholds: Vec<f64>,
}

impl<'a> IntervalModel<'a> {
    /// Builds the interval model. Thresholds left unset in the scenario are
    /// calibrated to the throughput of the uniform allocation.
    pub fn new(
        scenario: &'a Scenario,
        schedule: IntervalSchedule,
        predicted: &[State],
        bayes_prev: &[Matrix4<f64>],
    ) -> Result<Self> {
        let layout = Layout::new(scenario);
        let n = scenario.radars.len();
        let nq = scenario.targets.len();
        let counts = (0..n)
            .map(|i| (0..nq).map(|q| schedule.count(i, q)).collect())
            .collect();
        let mut c_tilde = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::with_capacity(nq);
            for q in 0..nq {
                row.push(unit_information(
                    scenario,
                    i,
                    q,
                    &schedule.times[i][q],
                    schedule.fusion_time,
                    &predicted[q],
                )?);
            }
            c_tilde.push(row);
        }
        let gamma_tilde = scenario
            .targets
            .iter()
            .zip(bayes_prev)
            .map(|(t, b)| prior_information(b, t.process_noise_intensity, scenario.fusion_period))
            .collect::<Result<Vec<_>>>()?;
        let mut model = IntervalModel {
            scenario,
            lambda: normalizer(scenario.fusion_period),
            layout,
            schedule,
            counts,
            c_tilde,
            gamma_tilde,
            thresholds: Vec::new(),
        };
        model.thresholds = model.resolve_thresholds();
        Ok(model)
    }

    fn resolve_thresholds(&self) -> Vec<f64> {
        let uniform = crate::anchor::uniform_allocation(self);
        self.layout
            .macro_users
            .iter()
            .enumerate()
            .map(|(j, &u)| {
                self.scenario.users[u]
                    .throughput_threshold
                    .unwrap_or_else(|| self.throughput(&uniform.z, &uniform.freq, j))
            })
            .collect()
    }

    pub fn num_radars(&self) -> usize {
        self.scenario.radars.len()
    }

    pub fn num_targets(&self) -> usize {
        self.layout.num_targets
    }

    pub fn pt(&self, z: &[f64], i: usize, q: usize) -> (f64, f64) {
        radar_pt(self.scenario, &self.layout, z, i, q)
    }

    pub fn interference(&self, z: &[f64], freq: &FrequencyAllocation, i: usize) -> f64 {
        comm_interference(self.scenario, &self.layout, z, freq, i)
    }

    /// Interference energy radiated by radar `i` over the interval per
    /// unit gain and shared subchannel: `sum_q M P T`.
    pub fn radar_load(&self, z: &[f64], i: usize) -> f64 {
        (0..self.num_targets())
            .map(|q| {
                let (p, t) = self.pt(z, i, q);
                self.counts[i][q] as f64 * p * t
            })
            .sum()
    }

    /// Bayesian FIM of every target given radar denominators `denoms[i]`
    /// (comm interference plus receiver noise).
    pub fn fims_with_denominators(&self, z: &[f64], denoms: &[f64]) -> Vec<Matrix4<f64>> {
        (0..self.num_targets())
            .map(|q| {
                let mut b = self.gamma_tilde[q];
                for (i, d) in denoms.iter().enumerate() {
                    let (p, t) = self.pt(z, i, q);
                    let w = p * t / d;
                    if w != 0.0 {
                        b += self.c_tilde[i][q] * w;
                    }
                }
                symmetrize(&b)
            })
            .collect()
    }

    pub fn denominators(&self, z: &[f64], freq: &FrequencyAllocation) -> Vec<f64> {
        (0..self.num_radars())
            .map(|i| self.interference(z, freq, i) + self.scenario.radars[i].rx_noise_power)
            .collect()
    }

    pub fn bayesian_fims(&self, z: &[f64], freq: &FrequencyAllocation) -> Vec<Matrix4<f64>> {
        self.fims_with_denominators(z, &self.denominators(z, freq))
    }

    pub fn objective(&self, z: &[f64], freq: &FrequencyAllocation) -> Result<f64> {
        objective_from_fims(&self.bayesian_fims(z, freq), &self.lambda)
    }

    /// Radar interference energy reaching macro user `j` on `block`,
    /// including fixed-resource radars.
    pub fn user_interference_on_block(&self, z: &[f64], j: usize, block: usize) -> f64 {
        let user = &self.scenario.users[self.layout.macro_users[j]];
        (0..self.num_radars())
            .map(|i| {
                user.radar_to_user_gains[i]
                    * self.layout.block_overlap[i][block]
                    * self.radar_load(z, i)
            })
            .sum()
    }

    pub fn sinr(&self, z: &[f64], freq: &FrequencyAllocation, j: usize) -> f64 {
        let user = &self.scenario.users[self.layout.macro_users[j]];
        let t0 = self.scenario.fusion_period;
        let pc = z[self.layout.comm_offset() + j];
        user.channel_gain * pc * t0
            / (self.user_interference_on_block(z, j, freq.blocks[j]) + user.noise_power * t0)
    }

    pub fn throughput(&self, z: &[f64], freq: &FrequencyAllocation, j: usize) -> f64 {
        self.sinr(z, freq, j).ln_1p()
    }

    pub fn margin(&self, z: &[f64], freq: &FrequencyAllocation, j: usize) -> f64 {
        self.throughput(z, freq, j) - self.thresholds[j]
    }

    pub fn margins(&self, z: &[f64], freq: &FrequencyAllocation) -> Vec<f64> {
        (0..self.layout.num_macro())
            .map(|j| self.margin(z, freq, j))
            .collect()
    }

    /// SINR of micro user `l` (index among micro users). It shares the block
    /// of its paired macro user and sees that user's downlink as
    /// cross-tier interference. Reported only.
    pub fn micro_sinr(&self, z: &[f64], freq: &FrequencyAllocation, l: usize) -> f64 {
        let user = &self.scenario.users[self.layout.micro_users[l]];
        let t0 = self.scenario.fusion_period;
        let pair = user.paired_macro.unwrap_or(0);
        let block = freq.blocks[pair];
        let radar: f64 = (0..self.num_radars())
            .map(|i| {
                user.radar_to_user_gains[i]
                    * self.layout.block_overlap[i][block]
                    * self.radar_load(z, i)
            })
            .sum();
        let macro_pc = z[self.layout.comm_offset() + pair];
        user.channel_gain * user.tx_power.unwrap_or(0.0) * t0
            / (radar + user.noise_power * t0 + user.cross_tier_gain.unwrap_or(0.0) * macro_pc * t0)
    }

    /// Minimum downlink power user `j` needs on `block` to meet its
    /// threshold under the radar resources in `z`.
    pub fn min_comm_power(&self, z: &[f64], j: usize, block: usize) -> f64 {
        let user = &self.scenario.users[self.layout.macro_users[j]];
        let t0 = self.scenario.fusion_period;
        let gamma = self.thresholds[j].exp_m1();
        gamma * (self.user_interference_on_block(z, j, block) + user.noise_power * t0)
            / (user.channel_gain * t0)
    }
}
