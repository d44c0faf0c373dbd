//! Independent re-implementations used as oracles. Written against the
//! model equations directly, sharing no code with the library beyond the
//! scenario data types.

#![allow(clippy::needless_range_loop)]
#![allow(dead_code)]

use anchor_core::scenario::{RadarKind, Scenario, Tier};
use nalgebra::{Matrix3x4, Matrix4, Vector4};

pub fn schedule(initial: f64, revisit: f64, t0: f64, k: usize) -> Vec<f64> {
    let (lo, hi) = (k as f64 * t0, (k + 1) as f64 * t0);
    let mut out = Vec::new();
    let mut m = 0.0;
    loop {
        let t = initial + m * revisit;
        if t >= hi - 1e-9 {
            break;
        }
        if t >= lo - 1e-9 {
            out.push(t);
        }
        m += 1.0;
    }
    out
}

pub fn f_mat(dt: f64) -> Matrix4<f64> {
    Matrix4::new(
        1.0, dt, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, dt, //
        0.0, 0.0, 0.0, 1.0,
    )
}

pub fn gamma(q: f64, dt: f64) -> Matrix4<f64> {
    let (a, b, c) = (q * dt.powi(3) / 3.0, q * dt * dt / 2.0, q * dt);
    Matrix4::new(
        a, b, 0.0, 0.0, //
        b, c, 0.0, 0.0, //
        0.0, 0.0, a, b, //
        0.0, 0.0, b, c,
    )
}

/// Jacobian of (range, bearing, radial velocity) by central differences.
pub fn jacobian_fd(s: &Vector4<f64>, p: [f64; 2]) -> Matrix3x4<f64> {
    let h = |s: &Vector4<f64>| {
        let (dx, dy) = (s[0] - p[0], s[2] - p[1]);
        let r = (dx * dx + dy * dy).sqrt();
        [r, dy.atan2(dx), (dx * s[1] + dy * s[3]) / r]
    };
    let mut j = Matrix3x4::zeros();
    for k in 0..4 {
        let step = 1e-4 * s[k].abs().max(1.0);
        let mut a = *s;
        let mut b = *s;
        a[k] += step;
        b[k] -= step;
        let (ha, hb) = (h(&a), h(&b));
        for r in 0..3 {
            j[(r, k)] = (ha[r] - hb[r]) / (2.0 * step);
        }
    }
    j
}

pub fn overlap(s: &Scenario, radar: usize, block: usize) -> f64 {
    let b = &s.radars[radar].band;
    let w = s.comm_block_size;
    (0..s.num_subchannels)
        .filter(|&f| f >= b.start && f < b.start + b.width && f / w == block)
        .count() as f64
}

/// Power and dwell of radar `i` for target `q`, reading the optimized ones
/// from `z` laid out MIMO powers, then PAR dwells, then comm powers.
pub fn pt(s: &Scenario, z: &[f64], i: usize, q: usize) -> (f64, f64) {
    let nq = s.targets.len();
    let mimo: Vec<usize> = (0..s.radars.len())
        .filter(|&k| s.radars[k].kind == RadarKind::MimoColocated)
        .collect();
    let par: Vec<usize> = (0..s.radars.len())
        .filter(|&k| s.radars[k].kind == RadarKind::PhasedArray)
        .collect();
    let r = &s.radars[i];
    if let Some(pos) = mimo.iter().position(|&k| k == i) {
        (z[pos * nq + q], r.fixed_dwell.unwrap())
    } else if let Some(pos) = par.iter().position(|&k| k == i) {
        (r.fixed_power.unwrap(), z[(mimo.len() + pos) * nq + q])
    } else {
        (r.fixed_power.unwrap(), r.fixed_dwell.unwrap())
    }
}

pub fn macro_users(s: &Scenario) -> Vec<usize> {
    (0..s.users.len())
        .filter(|&u| s.users[u].tier == Tier::Macro)
        .collect()
}

pub fn comm_offset(s: &Scenario) -> usize {
    s.radars
        .iter()
        .filter(|r| r.kind != RadarKind::MechScan)
        .count()
        * s.targets.len()
}

/// `sum_m H^T C^-1 H` of radar `i` on target `q` over interval `k`.
pub fn unit_info(
    s: &Scenario,
    i: usize,
    q: usize,
    k: usize,
    predicted: &Vector4<f64>,
) -> Matrix4<f64> {
    let t0 = s.fusion_period;
    let tf = (k + 1) as f64 * t0;
    let r = &s.radars[i];
    let e = &r.schedule[q];
    let times = schedule(e.initial_time, e.revisit_interval, t0, k);
    let zeta = r.signal_bandwidth;
    let eta = s.targets[q].rcs[i];
    let cdiag = [
        eta * s.range_const / (zeta * zeta),
        eta * s.angle_const * r.beamwidth_3db.powi(2),
        eta * s.doppler_const * zeta * zeta,
    ];
    let mut ct = Matrix4::zeros();
    for &t in &times {
        let fb = f_mat(t - tf);
        let h = jacobian_fd(&(fb * predicted), r.position) * fb;
        for row in 0..3 {
            let hr = h.row(row);
            ct += hr.transpose() * hr / cdiag[row];
        }
    }
    ct
}

/// Bayesian information of target `q` for interval `k`.
pub fn bayes_fim(
    s: &Scenario,
    z: &[f64],
    blocks: &[usize],
    q: usize,
    k: usize,
    predicted: &Vector4<f64>,
    b_prev: &Matrix4<f64>,
) -> Matrix4<f64> {
    let t0 = s.fusion_period;
    let off = comm_offset(s);
    let users = macro_users(s);
    let mut b = Matrix4::zeros();
    for (i, r) in s.radars.iter().enumerate() {
        let ct = unit_info(s, i, q, k, predicted);
        let interf: f64 = users
            .iter()
            .enumerate()
            .map(|(j, &u)| {
                s.users[u].user_to_radar_gains[i] * overlap(s, i, blocks[j]) * z[off + j]
            })
            .sum();
        let (p, tt) = pt(s, z, i, q);
        b += ct * (p * tt / (interf + r.rx_noise_power));
    }
    let prior = (gamma(s.targets[q].process_noise_intensity, t0)
        + f_mat(t0) * b_prev.try_inverse().unwrap() * f_mat(t0).transpose())
    .try_inverse()
    .unwrap();
    b + prior
}

pub fn objective(s: &Scenario, fims: &[Matrix4<f64>]) -> f64 {
    let t0 = s.fusion_period;
    let lam = Matrix4::from_diagonal(&Vector4::new(1.0, t0, 1.0, t0));
    fims.iter()
        .map(|b| 1.0 / (lam * b.try_inverse().unwrap() * lam).trace())
        .sum()
}

/// Macro throughput of user index `j` (among macro users), nats.
pub fn throughput(s: &Scenario, z: &[f64], blocks: &[usize], j: usize, k: usize) -> f64 {
    let t0 = s.fusion_period;
    let u = &s.users[macro_users(s)[j]];
    let mut radar = 0.0;
    for i in 0..s.radars.len() {
        for q in 0..s.targets.len() {
            let e = &s.radars[i].schedule[q];
            let m = schedule(e.initial_time, e.revisit_interval, t0, k).len() as f64;
            let (p, t) = pt(s, z, i, q);
            radar += u.radar_to_user_gains[i] * overlap(s, i, blocks[j]) * m * p * t;
        }
    }
    let pc = z[comm_offset(s) + j];
    (1.0 + u.channel_gain * pc * t0 / (radar + u.noise_power * t0)).ln()
}

/// Smallest comm power that gives user `j` throughput `eps` on its block.
pub fn min_power(s: &Scenario, z: &[f64], blocks: &[usize], j: usize, k: usize, eps: f64) -> f64 {
    let mut zz = z.to_vec();
    let off = comm_offset(s);
    zz[off + j] = 1.0;
    // SINR is linear in the user's own power.
    let sinr1 = throughput(s, &zz, blocks, j, k).exp_m1();
    eps.exp_m1() / sinr1
}
